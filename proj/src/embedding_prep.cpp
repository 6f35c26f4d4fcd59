#include "geouq/embedding_prep.hpp"

#include <algorithm>
#include <cmath>

#include "geouq/error.hpp"

namespace geouq::prep {

void EmbeddingBatch::validate() const {
  if (rows.rows() < 2) throw PreconditionError("embedding batch " + question_id + " needs n >= 2");
  if (rows.cols() < 2) throw PreconditionError("embedding batch " + question_id + " needs d >= 2");
  if (!rows.allFinite()) throw PreconditionError("non-finite embedding in " + question_id);
  if (default_row) {
    if (default_row->size() != rows.cols())
      throw PreconditionError("default row dimension differs in " + question_id);
    if (!default_row->allFinite())
      throw PreconditionError("non-finite default embedding in " + question_id);
  }
}

Eigen::VectorXd normalize_l2(const Eigen::VectorXd& row) {
  const double norm = row.norm();
  if (norm < 1e-15) throw ZeroVector("cannot L2-normalize a zero vector");
  return row / norm;
}

Eigen::MatrixXd normalize_l2(const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm < 1e-15) throw ZeroVector("row " + std::to_string(i) + " has zero norm");
    out.row(i) = rows.row(i) / norm;
  }
  return out;
}

namespace {

// Orthonormalizes `v` against the first `count` rows of `basis`; returns the
// residual norm before scaling.
double orthonormalize_against(const Eigen::MatrixXd& basis, Eigen::Index count,
                              Eigen::VectorXd& v) {
  for (int pass = 0; pass < 2; ++pass)
    for (Eigen::Index j = 0; j < count; ++j) v -= basis.row(j).dot(v) * basis.row(j).transpose();
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return norm;
}

}  // namespace

ReducedBatch fit_pca(const Eigen::MatrixXd& rows, int target_dim) {
  if (target_dim < 1) throw PreconditionError("target_dim must be >= 1");
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = rows.cols();
  if (n < 2) throw PreconditionError("fit_pca needs at least two rows");

  ReducedBatch out;
  out.pca_mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - out.pca_mean.transpose();

  const Eigen::MatrixXd gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw PreconditionError("Gram eigendecomposition failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();  // ascending
  const double lambda_max = std::max(lambda(n - 1), 0.0);

  if (centered.cwiseAbs().maxCoeff() < 1e-15 || lambda_max <= 0.0) {
    out.degenerate = true;
    out.X.resize(n, 0);
    out.pca_basis.resize(0, d);
    return out;
  }

  const Eigen::Index dprime = std::min<Eigen::Index>({target_dim, n - 1, d});
  out.pca_basis = Eigen::MatrixXd::Zero(dprime, d);
  Eigen::Index filled = 0;
  const double rank_tol = 1e-12 * lambda_max;
  for (Eigen::Index r = 0; r < dprime; ++r) {
    const Eigen::Index idx = n - 1 - r;
    if (lambda(idx) <= rank_tol) break;
    Eigen::VectorXd v = centered.transpose() * eig.eigenvectors().col(idx) / std::sqrt(lambda(idx));
    if (orthonormalize_against(out.pca_basis, filled, v) < 1e-6) break;
    out.pca_basis.row(filled++) = v.transpose();
  }
  // Complete past the numerical rank with standard directions.
  for (Eigen::Index e = 0; filled < dprime && e < d; ++e) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, e);
    if (orthonormalize_against(out.pca_basis, filled, v) < 1e-6) continue;
    out.pca_basis.row(filled++) = v.transpose();
  }

  for (Eigen::Index r = 0; r < dprime; ++r) {
    Eigen::Index arg = 0;
    out.pca_basis.row(r).cwiseAbs().maxCoeff(&arg);
    if (out.pca_basis(r, arg) < 0.0) out.pca_basis.row(r) *= -1.0;
  }

  out.X = centered * out.pca_basis.transpose();
  out.explained_variance.resize(static_cast<std::size_t>(dprime));
  for (Eigen::Index r = 0; r < dprime; ++r) {
    double v = out.X.col(r).squaredNorm() / static_cast<double>(n - 1);
    if (r > 0) v = std::min(v, out.explained_variance[static_cast<std::size_t>(r - 1)]);
    out.explained_variance[static_cast<std::size_t>(r)] = v;
  }
  return out;
}

Eigen::VectorXd project(const ReducedBatch& reduced, const Eigen::VectorXd& row) {
  if (row.size() != reduced.pca_mean.size())
    throw PreconditionError("projected row has wrong dimension");
  return reduced.pca_basis * (row - reduced.pca_mean);
}

ReducedBatch reduce_batch(const EmbeddingBatch& batch, int target_dim) {
  batch.validate();
  ReducedBatch out = fit_pca(normalize_l2(batch.rows), target_dim);
  out.question_id = batch.question_id;
  if (batch.default_row && !out.degenerate)
    out.default_x = project(out, normalize_l2(*batch.default_row));
  return out;
}

}  // namespace geouq::prep
