#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace geouq::aa {

/// Result of archetypal analysis, X ~ A * Z with Z = B * X.
///   A: n x K, rows on the K-simplex (how each response mixes archetypes)
///   B: K x n, rows on the n-simplex (how each archetype mixes responses)
///   Z: K x d' archetypes, inside conv(rows of X)
struct ArchetypeModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Z;
  std::vector<double> objective_trace;  // after each outer iteration
  int iterations = 0;

  double final_objective() const {
    return objective_trace.empty() ? 0.0 : objective_trace.back();
  }
};

struct FitOptions {
  int steps = 2000;
  /// Stop once the relative decrease stays below rel_tol for `patience`
  /// consecutive iterations.
  double rel_tol = 1e-10;
  int patience = 20;
};

/// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

/// FurthestSum seeding: K well-separated row indices of X, in pick order.
std::vector<Eigen::Index> furthest_sum(const Eigen::MatrixXd& X, int K, std::uint64_t seed);

/// Initial B (K x n) with row k the indicator of the k-th FurthestSum pick.
Eigen::MatrixXd init_archetypes(const Eigen::MatrixXd& X, int K, std::uint64_t seed);

/// Alternating projected-gradient descent on ||X - A B X||_F^2 with a
/// backtracking step in each block; the objective never increases.
ArchetypeModel fit_aa(const Eigen::MatrixXd& X, int K, std::uint64_t seed,
                      const FitOptions& options = {});

inline ArchetypeModel fit_aa(const Eigen::MatrixXd& X, int K, int steps, std::uint64_t seed) {
  FitOptions o;
  o.steps = steps;
  return fit_aa(X, K, seed, o);
}

/// Simplex-constrained least squares: argmin_{a in simplex} ||x - Z^T a||.
/// Used to place a point (e.g. the default response) on fitted archetypes.
Eigen::VectorXd simplex_coefficients(const Eigen::MatrixXd& Z, const Eigen::VectorXd& x,
                                     int iterations = 500);

double reconstruction_error(const Eigen::MatrixXd& X, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B);

}  // namespace geouq::aa
