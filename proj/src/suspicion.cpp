#include "geouq/suspicion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geouq/error.hpp"
#include "geouq/geometry.hpp"

namespace geouq::suspicion {

namespace {

constexpr double kSimplexTolerance = 1e-4;

void check_simplex_rows(const Eigen::MatrixXd& A) {
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double s = A.row(i).sum();
    if (std::abs(s - 1.0) > kSimplexTolerance || A.row(i).minCoeff() < -kSimplexTolerance)
      throw SimplexViolation("row " + std::to_string(i) + " of A is off the simplex (sum " +
                             std::to_string(s) + ")");
  }
}

double mean_knn_distance(const Eigen::MatrixXd& X, const Eigen::VectorXd* query,
                                      Eigen::Index self, int k) {
  // Distances from one point to the rows of X, excluding `self`.
  const Eigen::VectorXd x = query ? *query : Eigen::VectorXd(X.row(self).transpose());
  std::vector<std::pair<double, Eigen::Index>> d;
  for (Eigen::Index j = 0; j < X.rows(); ++j)
    if (j != self) d.emplace_back((X.row(j).transpose() - x).norm(), j);
  std::sort(d.begin(), d.end());
  double s = 0.0;
  for (int t = 0; t < k; ++t) s += d[static_cast<std::size_t>(t)].first;
  return s / k;
}

}  // namespace

std::vector<double> local_density(const Eigen::MatrixXd& X, int k) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw PreconditionError("local_density needs n >= 2");
  if (k < 1) throw PreconditionError("local_density needs k >= 1");
  const int eff = std::min<int>(k, static_cast<int>(n - 1));
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = mean_knn_distance(X, nullptr, i, eff);
  return out;
}

std::vector<double> distance_from_consensus(const Eigen::MatrixXd& X) {
  if (X.rows() < 1) throw PreconditionError("distance_from_consensus needs n >= 1");
  const Eigen::RowVectorXd centre = X.colwise().mean();
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    out[static_cast<std::size_t>(i)] = (X.row(i) - centre).norm();
  return out;
}

std::vector<double> usage_rarity(const Eigen::MatrixXd& A) {
  check_simplex_rows(A);
  const Eigen::RowVectorXd usage = A.colwise().mean();
  const Eigen::VectorXd u = A * (1.0 - usage.array()).matrix().transpose();
  return {u.data(), u.data() + u.size()};
}

std::vector<double> geometric_entropy(const Eigen::MatrixXd& A) {
  check_simplex_rows(A);
  std::vector<double> out(static_cast<std::size_t>(A.rows()), 0.0);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < A.cols(); ++k) {
      const double a = A(i, k);
      if (a > 0.0) h -= a * std::log(a);
    }
    out[static_cast<std::size_t>(i)] = std::clamp(h, 0.0, std::log(static_cast<double>(A.cols())));
  }
  return out;
}

std::vector<double> distance_nearest_archetype(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z) {
  if (X.cols() != Z.cols())
    throw LengthMismatch("X and Z must live in the same space");
  if (Z.rows() < 1) throw PreconditionError("need at least one archetype");
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    out[static_cast<std::size_t>(i)] = -(Z.rowwise() - X.row(i)).rowwise().norm().minCoeff();
  return out;
}

std::vector<int> stable_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> ranks(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r + 1);
  return ranks;
}

RankFusion suspicion_rank(const std::vector<std::vector<double>>& metrics) {
  if (metrics.empty()) throw PreconditionError("suspicion_rank needs at least one metric");
  const std::size_t n = metrics.front().size();
  for (const auto& m : metrics)
    if (m.size() != n) throw LengthMismatch("suspicion metrics differ in length");
  if (n == 0) throw PreconditionError("suspicion_rank needs a non-empty batch");

  RankFusion out;
  out.S.assign(n, 0);
  for (const auto& m : metrics) {
    out.ranks.push_back(stable_ranks(m));
    for (std::size_t i = 0; i < n; ++i) out.S[i] += out.ranks.back()[i];
  }
  out.selected_index = static_cast<std::size_t>(
      std::min_element(out.S.begin(), out.S.end()) - out.S.begin());
  return out;
}

RankFusion suspicion_rank(const std::vector<double>& L, const std::vector<double>& D,
                          const std::vector<double>& U) {
  return suspicion_rank(std::vector<std::vector<double>>{L, D, U});
}

SuspicionBreakdown select_best_of_n(const prep::ReducedBatch& batch, const aa::ArchetypeModel& model,
                                    const SelectOptions& options) {
  const Eigen::MatrixXd& X = batch.X;
  const Eigen::Index n = X.rows();
  if (model.A.rows() != n || model.Z.cols() != X.cols())
    throw LengthMismatch("archetype model was not fitted on this batch");

  SuspicionBreakdown out;
  out.question_id = batch.question_id;
  out.k_neighbors = std::min<int>(options.k, static_cast<int>(n - 1));
  out.local_density = local_density(X, options.k);
  out.dist_consensus = distance_from_consensus(X);
  out.usage_rarity = usage_rarity(model.A);
  out.geo_entropy = geometric_entropy(model.A);
  out.dist_nearest_archetype = distance_nearest_archetype(X, model.Z);
  if (options.with_voronoi && n >= options.voronoi_dim + 2)
    out.voronoi = geometry::voronoi_cell_volumes(X, options.voronoi_dim, options.voronoi_seed).scores;

  std::vector<std::vector<double>> metrics{out.local_density, out.dist_consensus, out.usage_rarity};
  if (options.fuse_extended) {
    metrics.push_back(*out.geo_entropy);
    metrics.push_back(*out.dist_nearest_archetype);
    if (out.voronoi) metrics.push_back(*out.voronoi);
  }
  RankFusion fused = suspicion_rank(metrics);
  for (int m = 0; m < 3; ++m) out.ranks[static_cast<std::size_t>(m)] = fused.ranks[static_cast<std::size_t>(m)];
  out.S = std::move(fused.S);
  out.selected_index = fused.selected_index;

  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return std::abs(x - v.front()) <= 1e-12; });
  };
  out.all_ties = std::all_of(metrics.begin(), metrics.end(), constant);
  if (out.all_ties) out.selected_index = 0;

  if (batch.default_x && X.cols() > 0) {
    const Eigen::VectorXd& x = *batch.default_x;
    DefaultScores ds;
    ds.L = mean_knn_distance(X, &x, -1, std::min<int>(options.k, static_cast<int>(n)));
    ds.D = (x.transpose() - X.colwise().mean()).norm();
    const Eigen::VectorXd a = aa::simplex_coefficients(model.Z, x);
    const Eigen::RowVectorXd usage = model.A.colwise().mean();
    ds.U = a.dot((1.0 - usage.array()).matrix().transpose());
    out.default_scores = ds;
  }
  return out;
}

}  // namespace geouq::suspicion
