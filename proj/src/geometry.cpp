#include "geouq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>

#include <boost/math/special_functions/digamma.hpp>

#include "geouq/convex_hull.hpp"
#include "geouq/embedding_prep.hpp"
#include "geouq/error.hpp"
#include "geouq/rng.hpp"

namespace geouq::geometry {

double simplex_volume(const Eigen::MatrixXd& Z) {
  const Eigen::Index K = Z.rows();
  const Eigen::Index dim = Z.cols();
  if (K < 2) throw PreconditionError("simplex_volume needs at least two vertices");
  if (K > dim + 1)
    throw TooManyVertices(std::to_string(K) + " vertices cannot be affinely independent in " +
                          std::to_string(dim) + " dimensions");
  const Eigen::MatrixXd edges = Z.bottomRows(K - 1).rowwise() - Z.row(0);
  const double det = Eigen::FullPivLU<Eigen::MatrixXd>(edges * edges.transpose()).determinant();
  if (!(det >= 1e-300)) return 0.0;
  return std::exp(0.5 * std::log(det) - std::lgamma(static_cast<double>(K)));
}

GlobalScore geometric_volume_of(const Eigen::MatrixXd& Z, double epsilon) {
  GlobalScore s;
  s.epsilon = epsilon;
  s.volume = simplex_volume(Z);
  s.H_G = std::log(s.volume + epsilon);
  s.degenerate = s.volume < epsilon;
  return s;
}

GlobalScore geometric_volume(const aa::ArchetypeModel& model, double epsilon) {
  return geometric_volume_of(model.Z, epsilon);
}

// ---------------------------------------------------------------------------

VoronoiResult voronoi_cell_volumes(const Eigen::MatrixXd& points, int reduce_to,
                                   std::uint64_t seed) {
  if (reduce_to != 2 && reduce_to != 3)
    throw PreconditionError("voronoi reduce_to must be 2 or 3");
  const Eigen::Index n = points.rows();
  if (n < reduce_to + 2)
    throw PreconditionError("voronoi needs at least reduce_to + 2 points");

  VoronoiResult out;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
  const Eigen::RowVectorXd centroid = points.colwise().mean();
  if ((points.rowwise() - centroid).rowwise().norm().maxCoeff() < 1e-12) {
    out.degenerate = true;
    return out;
  }

  const prep::ReducedBatch reduced = prep::fit_pca(points, reduce_to);
  int dim = 0;
  for (double v : reduced.explained_variance)
    if (v > 1e-12 * reduced.explained_variance.front()) ++dim;
  dim = std::min(dim, reduce_to);
  out.dimension = dim;
  if (dim < 2) return out;  // collinear cloud: no cells of positive area
  Eigen::MatrixXd low = reduced.X.leftCols(dim);

  Rng rng(seed);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if ((low.row(i) - low.row(j)).norm() < 1e-12) {
        for (Eigen::Index c = 0; c < dim; ++c) low(i, c) += 1e-9 * rng.normal();
        ++out.jittered;
        break;
      }
    }
  }

  const double factorial = dim == 2 ? 2.0 : 6.0;
  for (const auto& simplex : delaunay(low)) {
    Eigen::MatrixXd edges(dim, dim);
    for (int r = 1; r <= dim; ++r)
      edges.row(r - 1) = low.row(simplex[static_cast<std::size_t>(r)]) - low.row(simplex[0]);
    const double vol = std::abs(edges.determinant()) / factorial;
    for (auto v : simplex) out.scores[static_cast<std::size_t>(v)] += vol;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Static kd-tree over the rows of a matrix, for k-nearest-neighbour radii.
class KdTree {
 public:
  explicit KdTree(const Eigen::MatrixXd& pts)
      : dim_(pts.cols()), n_(pts.rows()), data_(static_cast<std::size_t>(n_ * dim_)) {
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index c = 0; c < dim_; ++c) data_[static_cast<std::size_t>(i * dim_ + c)] = pts(i, c);
    index_.resize(static_cast<std::size_t>(n_));
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(static_cast<std::size_t>(2 * n_ / kLeaf + 2));
    build(0, n_);
  }

  /// Distance from point q (a member of the set) to its k-th nearest other point.
  double kth_distance(Eigen::Index q, int k) const {
    std::priority_queue<double> heap;  // squared distances, max on top
    search(0, q, k, heap);
    return std::sqrt(heap.top());
  }

 private:
  static constexpr Eigen::Index kLeaf = 12;
  struct Node {
    Eigen::Index begin, end;
    Eigen::Index split_dim = -1;
    double split = 0.0;
    int left = -1, right = -1;
  };

  const double* row(Eigen::Index i) const { return &data_[static_cast<std::size_t>(i * dim_)]; }

  int build(Eigen::Index begin, Eigen::Index end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeaf) return id;
    Eigen::Index best_dim = 0;
    double best_spread = -1.0;
    for (Eigen::Index c = 0; c < dim_; ++c) {
      double lo = row(index_[static_cast<std::size_t>(begin)])[c], hi = lo;
      for (Eigen::Index i = begin; i < end; ++i) {
        const double v = row(index_[static_cast<std::size_t>(i)])[c];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = c;
      }
    }
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) { return row(a)[best_dim] < row(b)[best_dim]; });
    const double split = row(index_[static_cast<std::size_t>(mid)])[best_dim];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].split_dim = best_dim;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void search(int id, Eigen::Index q, int k, std::priority_queue<double>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const double* x = row(q);
    if (node.split_dim < 0) {
      for (Eigen::Index i = node.begin; i < node.end; ++i) {
        const Eigen::Index j = index_[static_cast<std::size_t>(i)];
        if (j == q) continue;
        const double* y = row(j);
        double d2 = 0.0;
        for (Eigen::Index c = 0; c < dim_; ++c) d2 += (x[c] - y[c]) * (x[c] - y[c]);
        if (static_cast<int>(heap.size()) < k) {
          heap.push(d2);
        } else if (d2 < heap.top()) {
          heap.pop();
          heap.push(d2);
        }
      }
      return;
    }
    const double diff = x[node.split_dim] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff < heap.top()) search(far, q, k, heap);
  }

  Eigen::Index dim_, n_;
  std::vector<double> data_;
  std::vector<Eigen::Index> index_;
  std::vector<Node> nodes_;
};

}  // namespace

namespace {

/// Per-sample Kozachenko-Leonenko terms m log rho_i plus the additive constant.
std::pair<std::vector<double>, double> kl_terms(const Eigen::MatrixXd& Y, int k) {
  const Eigen::Index N = Y.rows();
  const auto m = static_cast<double>(Y.cols());
  if (k < 1) throw PreconditionError("kl_entropy needs k >= 1");
  if (N <= k) throw PreconditionError("kl_entropy needs more samples than neighbours");
  const KdTree tree(Y);
  std::vector<double> terms(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i)
    terms[static_cast<std::size_t>(i)] = m * std::log(std::max(tree.kth_distance(i, k), 1e-300));
  const double log_unit_ball = 0.5 * m * std::log(std::numbers::pi) - std::lgamma(0.5 * m + 1.0);
  const double constant = boost::math::digamma(static_cast<double>(N)) -
                          boost::math::digamma(static_cast<double>(k)) + log_unit_ball;
  return {std::move(terms), constant};
}

std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double t : v) var += (t - mean) * (t - mean);
  var /= n - 1.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace

std::pair<double, double> kl_entropy(const Eigen::MatrixXd& Y, int k) {
  const auto [terms, constant] = kl_terms(Y, k);
  const auto [mean, se] = mean_and_se(terms);
  return {constant + mean, se};
}

EntropyBoundReport entropy_bound_check(const Eigen::MatrixXd& Z, int n_mc, std::uint64_t seed,
                                       const EntropyCheckOptions& options) {
  if (n_mc < 10000) throw PreconditionError("entropy_bound_check needs n_mc >= 1e4");
  const double volume = simplex_volume(Z);
  if (!(volume > 0.0)) throw PreconditionError("entropy_bound_check needs a nondegenerate simplex");

  const Eigen::Index K = Z.rows();
  const Eigen::Index m = K - 1;

  // Estimating on the simplex itself is biased upward near its faces, where
  // neighbour balls poke outside the support. Instead the free weights
  // w_1..w_m go through the log-ratio map y_k = log(w_k / w_K), which has
  // Jacobian 1 / prod_k w_k and an unbounded, smooth image. Then
  //   H(x) = H(y) + E[sum_k log w_k] + log(m! V),
  // the last term being the Jacobian of w_free -> intrinsic coordinates.
  const double log_frame = std::lgamma(static_cast<double>(m) + 1.0) + std::log(volume);

  Rng rng(seed);
  auto estimate = [&](double alpha) {
    Eigen::MatrixXd Y(n_mc, m);
    std::vector<double> log_w_sum(static_cast<std::size_t>(n_mc));
    Eigen::VectorXd g(K);
    for (int s = 0; s < n_mc; ++s) {
      for (Eigen::Index k = 0; k < K; ++k) {
        do {
          g(k) = alpha == 1.0 ? rng.exponential() : rng.gamma(alpha);
        } while (!(g(k) > 0.0));
      }
      const Eigen::ArrayXd log_g = g.array().log();
      Y.row(s) = (log_g.head(m) - log_g(m)).matrix().transpose();
      log_w_sum[static_cast<std::size_t>(s)] = log_g.sum() - static_cast<double>(K) * std::log(g.sum());
    }
    auto [terms, constant] = kl_terms(Y, options.neighbours);
    for (std::size_t s = 0; s < terms.size(); ++s) terms[s] += log_w_sum[s];
    const auto [mean, se] = mean_and_se(terms);
    return std::pair{constant + mean + log_frame, se};
  };

  EntropyBoundReport report;
  report.intrinsic_dim = static_cast<int>(m);
  report.log_V = std::log(volume);
  std::tie(report.mc_entropy_uniform, report.se_uniform) = estimate(1.0);
  std::tie(report.mc_entropy_peaked, report.se_peaked) = estimate(options.peaked_alpha);
  return report;
}

}  // namespace geouq::geometry
