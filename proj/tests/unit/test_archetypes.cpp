#include "geouq/archetypes.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "geouq/error.hpp"
#include "geouq/rng.hpp"
#include "oracles.hpp"

using namespace geouq;
using namespace geouq::aa;

namespace {

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = sd * rng.normal();
  return m;
}

void check_simplex_rows(const Eigen::MatrixXd& M) {
  CHECK(M.minCoeff() >= -1e-12);
  for (Eigen::Index i = 0; i < M.rows(); ++i) CHECK(std::abs(M.row(i).sum() - 1.0) <= 1e-6);
}

}  // namespace

TEST_CASE("project_simplex fixed examples") {
  Eigen::Vector3d on(0.2, 0.3, 0.5);
  CHECK((project_simplex(on) - on).norm() <= 1e-15);
  Eigen::Vector2d v(2, 0);
  CHECK((project_simplex(v) - Eigen::Vector2d(1, 0)).norm() <= 1e-15);
}

TEST_CASE("project_simplex agrees with bisection") {
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    const auto m = 1 + static_cast<Eigen::Index>(rng.below(9));
    Eigen::VectorXd v(m);
    for (Eigen::Index i = 0; i < m; ++i) v(i) = rng.normal(0.0, 1.0 + static_cast<double>(t % 4));
    const Eigen::VectorXd p = project_simplex(v);
    CHECK((p - oracle::simplex_projection_bisect(v)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("FurthestSum") {
  Rng rng(12);
  const Eigen::MatrixXd X = gaussian(rng, 9, 3);

  SUBCASE("K = n selects every row once") {
    const Eigen::MatrixXd B = init_archetypes(X, 9, 5);
    CHECK(B.rows() == 9);
    Eigen::MatrixXd sorted = B;
    std::vector<Eigen::Index> where;
    for (Eigen::Index k = 0; k < 9; ++k) {
      Eigen::Index arg;
      CHECK(B.row(k).maxCoeff(&arg) == 1.0);
      CHECK(B.row(k).sum() == 1.0);
      where.push_back(arg);
    }
    CHECK(std::set<Eigen::Index>(where.begin(), where.end()).size() == 9);
  }

  SUBCASE("two tight clusters give one pick from each") {
    Eigen::MatrixXd Y(12, 2);
    for (int i = 0; i < 12; ++i) {
      const double cx = i < 6 ? 0.0 : 10.0;
      Y.row(i) << cx + 0.01 * rng.normal(), 0.01 * rng.normal();
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto picks = furthest_sum(Y, 2, seed);
      REQUIRE(picks.size() == 2);
      CHECK((picks[0] < 6) != (picks[1] < 6));
    }
  }

  SUBCASE("K above n") {
    CHECK_THROWS_AS(furthest_sum(X, 10, 0), KTooLarge);
    CHECK_THROWS_AS(fit_aa(X, 10, 0), KTooLarge);
  }
}

TEST_CASE("fit_aa K = n reconstructs exactly") {
  Rng rng(13);
  const Eigen::MatrixXd X = gaussian(rng, 6, 8);
  const auto m = fit_aa(X, 6, 3);
  CHECK(m.final_objective() < 1e-8);
}

TEST_CASE("fit_aa K = 1 returns the centroid") {
  Rng rng(14);
  const Eigen::MatrixXd X = gaussian(rng, 15, 4);
  const auto m = fit_aa(X, 1, 3);
  REQUIRE(m.Z.rows() == 1);
  CHECK((m.Z.row(0) - X.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("fit_aa finds the corners of the unit square") {
  Rng rng(15);
  Eigen::MatrixXd X(204, 2);
  for (int i = 0; i < 200; ++i) X.row(i) << rng.uniform(), rng.uniform();
  X.row(200) << 0, 0;
  X.row(201) << 1, 0;
  X.row(202) << 0, 1;
  X.row(203) << 1, 1;
  const auto m = fit_aa(X, 4, 1);
  for (int c = 0; c < 4; ++c) {
    double best = INFINITY;
    for (int k = 0; k < 4; ++k) best = std::min(best, (m.Z.row(k) - X.row(200 + c)).norm());
    CHECK(best <= 0.05);
  }
}

TEST_CASE("fit_aa invariants on random problems") {
  Rng rng(16);
  for (int t = 0; t < 20; ++t) {
    const auto n = 4 + static_cast<Eigen::Index>(rng.below(20));
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(6));
    const int K = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const Eigen::MatrixXd X = gaussian(rng, n, d);
    FitOptions run_out;  // no early stop: the centroid comparison wants convergence
    run_out.steps = 5000;
    run_out.rel_tol = 0.0;
    const auto m = fit_aa(X, K, rng.next(), run_out);

    CHECK(m.A.rows() == n);
    CHECK(m.A.cols() == K);
    CHECK(m.B.rows() == K);
    CHECK(m.B.cols() == n);
    check_simplex_rows(m.A);
    check_simplex_rows(m.B);
    CHECK((m.Z - m.B * X).cwiseAbs().maxCoeff() <= 1e-9);
    for (std::size_t s = 1; s < m.objective_trace.size(); ++s)
      CHECK(m.objective_trace[s] <= m.objective_trace[s - 1] + 1e-9);

    const double centroid_err = (X.rowwise() - X.colwise().mean()).squaredNorm();
    CHECK((X - m.A * m.Z).squaredNorm() <= centroid_err * (1.0 + 1e-9));
    CHECK(std::abs(reconstruction_error(X, m.A, m.B) - m.final_objective()) <= 1e-9 * (1 + centroid_err));
  }
}

TEST_CASE("fit_aa is equivariant to row permutations") {
  Rng rng(17);
  const Eigen::Index n = 14;
  const Eigen::MatrixXd X = gaussian(rng, n, 3);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<Eigen::Index> inverse(perm.size());
  Eigen::MatrixXd Y(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    Y.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
    inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  }

  // The random start of FurthestSum is the only seed dependence; pick the
  // seed for Y whose start is the image of X's start.
  const std::uint64_t seed_x = 99;
  const auto start_x = static_cast<Eigen::Index>(Rng(seed_x).below(n));
  std::uint64_t seed_y = 0;
  while (static_cast<Eigen::Index>(Rng(seed_y).below(n)) != inverse[static_cast<std::size_t>(start_x)]) ++seed_y;

  const auto a = fit_aa(X, 4, 200, seed_x);
  const auto b = fit_aa(Y, 4, 200, seed_y);
  CHECK(a.iterations == b.iterations);
  // Summation order differs between the two runs, so agreement is to round-off.
  CHECK((a.Z - b.Z).cwiseAbs().maxCoeff() <= 1e-6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = perm[static_cast<std::size_t>(i)];
    CHECK((b.A.row(i) - a.A.row(src)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((b.B.col(i) - a.B.col(src)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("simplex_coefficients") {
  Eigen::MatrixXd Z(3, 2);
  Z << 0, 0, 1, 0, 0, 1;
  const auto a = simplex_coefficients(Z, Eigen::Vector2d(0.2, 0.3));
  CHECK((a - Eigen::Vector3d(0.5, 0.2, 0.3)).cwiseAbs().maxCoeff() <= 1e-6);
  const auto far = simplex_coefficients(Z, Eigen::Vector2d(5, 0));
  CHECK((far - Eigen::Vector3d(0, 1, 0)).cwiseAbs().maxCoeff() <= 1e-6);
}
