#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace geouq::prep {

/// Raw embeddings for one question: n sampled rows plus the greedy answer.
struct EmbeddingBatch {
  std::string question_id;
  Eigen::MatrixXd rows;  // n x d
  std::optional<Eigen::VectorXd> default_row;

  void validate() const;
};

/// PCA-reduced batch. X = (normalized rows - pca_mean) * pca_basis^T.
struct ReducedBatch {
  std::string question_id;
  Eigen::MatrixXd X;           // n x d'
  Eigen::MatrixXd pca_basis;   // d' x d, orthonormal rows
  Eigen::VectorXd pca_mean;    // d
  std::vector<double> explained_variance;  // d', non-increasing
  /// All rows identical: d' = 0 and downstream scores are undefined.
  bool degenerate = false;
  /// Default response projected with this batch's basis.
  std::optional<Eigen::VectorXd> default_x;

  Eigen::Index dim() const { return X.cols(); }
};

/// Scales every row to unit Euclidean norm; ZeroVector on an all-zero row.
Eigen::MatrixXd normalize_l2(const Eigen::MatrixXd& rows);
Eigen::VectorXd normalize_l2(const Eigen::VectorXd& row);

/// Mean-centred PCA via the n x n Gram matrix. The reduced dimension is
/// min(target_dim, n - 1, d); directions beyond the numerical rank of the
/// batch are completed with an orthonormal complement (zero variance).
/// Each basis vector's largest-magnitude coordinate is made positive.
ReducedBatch fit_pca(const Eigen::MatrixXd& rows, int target_dim);

/// (row - mean) * basis^T
Eigen::VectorXd project(const ReducedBatch& reduced, const Eigen::VectorXd& row);

/// normalize_l2 + fit_pca, and projection of the default row when present.
ReducedBatch reduce_batch(const EmbeddingBatch& batch, int target_dim);

}  // namespace geouq::prep
