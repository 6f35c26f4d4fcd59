#include "geouq/embedding_prep.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "geouq/error.hpp"
#include "geouq/rng.hpp"

using namespace geouq;
using namespace geouq::prep;

namespace {

Eigen::MatrixXd gaussian(geouq::Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("normalize_l2") {
  Eigen::MatrixXd m(1, 2);
  m << 3, 4;
  const auto n = normalize_l2(m);
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  Eigen::VectorXd unit = Eigen::VectorXd::Unit(5, 2);
  CHECK(normalize_l2(unit) == unit);
  CHECK_THROWS_AS(normalize_l2(Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 3))), ZeroVector);
  CHECK_THROWS_AS(normalize_l2(Eigen::VectorXd(Eigen::VectorXd::Zero(3))), ZeroVector);

  geouq::Rng rng(1);
  const auto g = normalize_l2(gaussian(rng, 30, 17));
  for (Eigen::Index i = 0; i < g.rows(); ++i) CHECK(std::abs(g.row(i).norm() - 1.0) <= 1e-12);
}

TEST_CASE("PCA dimension rule min(target, n-1, d)") {
  geouq::Rng rng(2);
  CHECK(fit_pca(normalize_l2(gaussian(rng, 20, 1536)), 15).dim() == 15);
  CHECK(fit_pca(normalize_l2(gaussian(rng, 4, 64)), 15).dim() == 3);
  CHECK(fit_pca(normalize_l2(gaussian(rng, 30, 6)), 15).dim() == 6);
  CHECK_THROWS_AS(fit_pca(gaussian(rng, 4, 3), 0), PreconditionError);
}

TEST_CASE("three points in a plane keep their pairwise distances") {
  Eigen::MatrixXd p(3, 3);
  p << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const auto r = fit_pca(p, 2);
  REQUIRE(r.dim() == 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs((r.X.row(i) - r.X.row(j)).norm() - (p.row(i) - p.row(j)).norm()) <= 1e-10);
}

TEST_CASE("PCA invariants on random batches") {
  geouq::Rng rng(3);
  for (int t = 0; t < 25; ++t) {
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.below(20));
    const Eigen::Index d = 3 + static_cast<Eigen::Index>(rng.below(40));
    const int target = 1 + static_cast<int>(rng.below(16));
    const Eigen::MatrixXd rows = normalize_l2(gaussian(rng, n, d));
    const auto r = fit_pca(rows, target);

    // orthonormal basis
    const Eigen::MatrixXd gram = r.pca_basis * r.pca_basis.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(r.dim(), r.dim())).cwiseAbs().maxCoeff() <= 1e-8);
    // non-increasing explained variance
    CHECK(std::is_sorted(r.explained_variance.rbegin(), r.explained_variance.rend()));
    // sign rule
    for (Eigen::Index k = 0; k < r.dim(); ++k) {
      Eigen::Index arg;
      r.pca_basis.row(k).cwiseAbs().maxCoeff(&arg);
      CHECK(r.pca_basis(k, arg) > 0.0);
    }
    // reconstruction error equals the discarded eigenvalues of the scatter matrix
    const Eigen::MatrixXd centered = rows.rowwise() - r.pca_mean.transpose();
    const Eigen::MatrixXd recon = r.X * r.pca_basis;
    const double err = (centered - recon).squaredNorm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
    const Eigen::VectorXd lam = eig.eigenvalues();  // ascending
    const double discarded = lam.head(d - r.dim()).sum();
    CHECK(std::abs(err - discarded) <= 1e-8);
  }
}

TEST_CASE("PCA is equivariant to row order") {
  geouq::Rng rng(4);
  const Eigen::MatrixXd rows = normalize_l2(gaussian(rng, 12, 30));
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  Eigen::MatrixXd shuffled(12, 30);
  for (int i = 0; i < 12; ++i) shuffled.row(i) = rows.row(perm[static_cast<std::size_t>(i)]);
  const auto a = fit_pca(rows, 5), b = fit_pca(shuffled, 5);
  for (int i = 0; i < 12; ++i)
    CHECK((b.X.row(i) - a.X.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("identical rows give a degenerate batch") {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(6, 4);
  const auto r = fit_pca(normalize_l2(rows), 3);
  CHECK(r.degenerate);
  CHECK(r.dim() == 0);
  CHECK(r.X.rows() == 6);
}

TEST_CASE("rank-deficient batch is completed to the requested dimension") {
  geouq::Rng rng(5);
  // 10 points on a 2-plane in R^8
  const Eigen::MatrixXd coeffs = gaussian(rng, 10, 2);
  const Eigen::MatrixXd plane = gaussian(rng, 2, 8);
  const auto r = fit_pca(coeffs * plane, 5);
  REQUIRE(r.dim() == 5);
  CHECK(r.X.rightCols(3).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(r.explained_variance[2] <= 1e-20);
  const Eigen::MatrixXd gram = r.pca_basis * r.pca_basis.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("reduce_batch projects the default row with the batch basis") {
  geouq::Rng rng(6);
  EmbeddingBatch b;
  b.question_id = "q";
  b.rows = gaussian(rng, 8, 20);
  b.default_row = b.rows.row(3).transpose() * 2.0;  // same direction as row 3
  const auto r = reduce_batch(b, 4);
  REQUIRE(r.default_x);
  CHECK((*r.default_x - r.X.row(3).transpose()).norm() <= 1e-12);
  CHECK(r.question_id == "q");

  EmbeddingBatch bad = b;
  bad.rows(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = b;
  bad.rows = gaussian(rng, 1, 20);
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = b;
  bad.default_row = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}
