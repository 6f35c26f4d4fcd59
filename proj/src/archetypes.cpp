#include "geouq/archetypes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "geouq/error.hpp"
#include "geouq/rng.hpp"

namespace geouq::aa {

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  if (m < 1) throw PreconditionError("cannot project an empty vector onto the simplex");
  if (!v.allFinite()) throw PreconditionError("project_simplex needs finite entries");

  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    cumulative += u[static_cast<std::size_t>(j)];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

std::vector<Eigen::Index> furthest_sum(const Eigen::MatrixXd& X, int K, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  if (K < 1) throw PreconditionError("need at least one archetype");
  if (K > n)
    throw KTooLarge("K = " + std::to_string(K) + " exceeds the number of points " +
                    std::to_string(n));

  auto dist = [&](Eigen::Index a, Eigen::Index b) { return (X.row(a) - X.row(b)).norm(); };
  std::vector<double> sum_dist(static_cast<std::size_t>(n), 0.0);
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> picks;

  auto add = [&](Eigen::Index p) {
    picks.push_back(p);
    chosen[static_cast<std::size_t>(p)] = 1;
    for (Eigen::Index i = 0; i < n; ++i) sum_dist[static_cast<std::size_t>(i)] += dist(i, p);
  };
  auto furthest = [&] {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || sum_dist[static_cast<std::size_t>(i)] > sum_dist[static_cast<std::size_t>(best)])
        best = i;
    }
    return best;
  };

  Rng rng(seed);
  add(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  while (static_cast<int>(picks.size()) < K) add(furthest());

  // The random start is rarely extremal: drop it and refill greedily.
  const Eigen::Index start = picks.front();
  picks.erase(picks.begin());
  chosen[static_cast<std::size_t>(start)] = 0;
  for (Eigen::Index i = 0; i < n; ++i) sum_dist[static_cast<std::size_t>(i)] -= dist(i, start);
  add(furthest());
  return picks;
}

Eigen::MatrixXd init_archetypes(const Eigen::MatrixXd& X, int K, std::uint64_t seed) {
  const auto picks = furthest_sum(X, K, seed);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K, X.rows());
  for (int k = 0; k < K; ++k) B(k, picks[static_cast<std::size_t>(k)]) = 1.0;
  return B;
}

double reconstruction_error(const Eigen::MatrixXd& X, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B) {
  return (X - A * (B * X)).squaredNorm();
}

namespace {

void project_rows(Eigen::MatrixXd& M) {
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    M.row(r) = project_simplex(M.row(r).transpose()).transpose();
}

/// One projected-gradient step on a row-simplex-constrained block with
/// backtracking. `step` carries the accepted step size between calls.
/// Returns the new objective (never larger than `f0`).
template <typename Objective>
double projected_step(Eigen::MatrixXd& M, const Eigen::MatrixXd& grad, double f0,
                      double& step, const Objective& objective) {
  const double entry = step;
  step *= 2.0;
  for (int tries = 0; tries < 60; ++tries, step *= 0.5) {
    Eigen::MatrixXd candidate = M - step * grad;
    project_rows(candidate);
    const Eigen::MatrixXd delta = candidate - M;
    const double moved = delta.squaredNorm();
    if (moved == 0.0) {
      // fixed point; keep the step from growing without bound across calls
      step = entry;
      return f0;
    }
    const double f1 = objective(candidate);
    if (!std::isfinite(f1)) continue;
    const double model = f0 + (grad.array() * delta.array()).sum() + moved / (2.0 * step);
    if (f1 <= model && f1 <= f0) {
      M = std::move(candidate);
      return f1;
    }
  }
  return f0;
}

double safe_step(const Eigen::MatrixXd& gram_like) {
  // 1 / (2 * trace) is below 1 / Lipschitz; backtracking grows it from here.
  const double tr = gram_like.trace();
  return tr > 0.0 ? 1.0 / (2.0 * tr) : 1.0;
}

}  // namespace

ArchetypeModel fit_aa(const Eigen::MatrixXd& X, int K, std::uint64_t seed,
                      const FitOptions& options) {
  const Eigen::Index n = X.rows();
  if (options.steps < 1) throw PreconditionError("fit_aa needs steps >= 1");
  if (n < 1 || X.cols() < 1) throw PreconditionError("fit_aa needs a non-empty X");
  if (!X.allFinite()) throw PreconditionError("fit_aa needs finite X");

  ArchetypeModel model;
  model.B = init_archetypes(X, K, seed);
  model.Z = model.B * X;

  // Start every response on its nearest archetype.
  model.A = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (model.Z.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
    model.A(i, best) = 1.0;
  }

  const Eigen::MatrixXd XXt = X * X.transpose();
  double step_a = safe_step(model.Z * model.Z.transpose());
  double step_b = safe_step(XXt) / std::max(1.0, static_cast<double>(n));
  double f = (X - model.A * model.Z).squaredNorm();
  if (!std::isfinite(f)) throw NonFiniteObjective("initial objective is not finite");

  int quiet = 0;
  for (int t = 0; t < options.steps; ++t) {
    const double before = f;

    // A-block with Z fixed.
    {
      const Eigen::MatrixXd& Z = model.Z;
      const Eigen::MatrixXd grad = 2.0 * (model.A * Z - X) * Z.transpose();
      f = projected_step(model.A, grad, f, step_a, [&](const Eigen::MatrixXd& A) {
        return (X - A * Z).squaredNorm();
      });
    }
    // B-block with A fixed.
    {
      const Eigen::MatrixXd& A = model.A;
      const Eigen::MatrixXd grad = 2.0 * A.transpose() * (A * model.B * X - X) * X.transpose();
      f = projected_step(model.B, grad, f, step_b, [&](const Eigen::MatrixXd& B) {
        return (X - A * (B * X)).squaredNorm();
      });
      model.Z = model.B * X;
    }

    if (!std::isfinite(f))
      throw NonFiniteObjective("objective became non-finite at iteration " + std::to_string(t));
    model.objective_trace.push_back(f);
    model.iterations = t + 1;

    const double rel = before > 0.0 ? (before - f) / before : 0.0;
    quiet = rel < options.rel_tol ? quiet + 1 : 0;
    if (quiet >= options.patience) break;
  }
  return model;
}

Eigen::VectorXd simplex_coefficients(const Eigen::MatrixXd& Z, const Eigen::VectorXd& x,
                                     int iterations) {
  if (Z.cols() != x.size()) throw PreconditionError("simplex_coefficients: shape mismatch");
  const Eigen::Index K = Z.rows();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(K);
  Eigen::Index best = 0;
  (Z.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
  a(best) = 1.0;

  const Eigen::MatrixXd ZZt = Z * Z.transpose();
  const Eigen::VectorXd Zx = Z * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ZZt, Eigen::EigenvaluesOnly);
  const double lipschitz = 2.0 * std::max(eig.eigenvalues().maxCoeff(), 1e-300);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd grad = 2.0 * (ZZt * a - Zx);
    const Eigen::VectorXd next = project_simplex(a - grad / lipschitz);
    if ((next - a).squaredNorm() < 1e-30) break;
    a = next;
  }
  return a;
}

}  // namespace geouq::aa
