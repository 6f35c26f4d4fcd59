#include "geouq/suspicion.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "geouq/archetypes.hpp"
#include "geouq/rng.hpp"
#include "oracles.hpp"

using namespace geouq;
using namespace geouq::suspicion;

namespace {

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = sd * rng.normal();
  return m;
}

Eigen::MatrixXd random_simplex_rows(Rng& rng, Eigen::Index n, Eigen::Index K) {
  Eigen::MatrixXd A(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < K; ++k) A(i, k) = rng.exponential();
    A.row(i) /= A.row(i).sum();
  }
  return A;
}

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

prep::ReducedBatch batch_of(const Eigen::MatrixXd& X) {
  prep::ReducedBatch b;
  b.question_id = "q";
  b.X = X;
  return b;
}

}  // namespace

TEST_CASE("local_density") {
  CHECK(local_density(Eigen::MatrixXd::Ones(5, 3), 2) == std::vector<double>(5, 0.0));
  CHECK(local_density(column({0, 1, 10}), 1) == std::vector<double>{1, 1, 9});

  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd X = gaussian(rng, 20, 5);
    const int k = 1 + static_cast<int>(rng.below(25));
    CHECK(local_density(X, k) == oracle::knn_mean_bruteforce(X, k));
  }
}

TEST_CASE("distance_from_consensus") {
  CHECK(distance_from_consensus(Eigen::MatrixXd::Ones(4, 2)) == std::vector<double>(4, 0.0));
  const auto D = distance_from_consensus(column({0, 0, 3}));
  CHECK(D[0] == doctest::Approx(1.0));
  CHECK(D[1] == doctest::Approx(1.0));
  CHECK(D[2] == doctest::Approx(2.0));
}

TEST_CASE("usage_rarity") {
  for (double u : usage_rarity(Eigen::MatrixXd::Constant(6, 4, 0.25))) CHECK(u == doctest::Approx(0.75));

  Eigen::MatrixXd A(3, 2);
  A << 1, 0, 1, 0, 0, 1;
  const auto U = usage_rarity(A);
  CHECK(U[0] == doctest::Approx(1.0 / 3));
  CHECK(U[1] == doctest::Approx(1.0 / 3));
  CHECK(U[2] == doctest::Approx(2.0 / 3));

  Rng rng(32);
  for (int t = 0; t < 200; ++t) {
    const auto n = 2 + static_cast<Eigen::Index>(rng.below(30));
    const auto K = 1 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::MatrixXd M = random_simplex_rows(rng, n, K);
    const Eigen::RowVectorXd abar = M.colwise().mean();
    const auto u = usage_rarity(M);
    for (double x : u) {
      CHECK(x >= 1.0 - abar.maxCoeff() - 1e-12);
      CHECK(x <= 1.0 - abar.minCoeff() + 1e-12);
    }
    const double total = std::accumulate(u.begin(), u.end(), 0.0);
    const auto nd = static_cast<double>(n);
    CHECK(total == doctest::Approx(nd - nd * abar.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("geometric_entropy") {
  Eigen::MatrixXd A(3, 4);
  A << 0, 1, 0, 0, 0.25, 0.25, 0.25, 0.25, 0.5, 0.5, 0, 0;
  const auto h = geometric_entropy(A);
  CHECK(h[0] == 0.0);
  CHECK(h[1] == doctest::Approx(std::log(4.0)));
  CHECK(h[2] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("distance_nearest_archetype") {
  Eigen::MatrixXd Z(2, 2);
  Z << 0, 0, 1, 1;
  Eigen::MatrixXd X(2, 2);
  X << 1, 1, 100, 0;
  const auto da = distance_nearest_archetype(X, Z);
  CHECK(da[0] == 0.0);
  CHECK(da[1] < -90.0);

  Rng rng(33);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd P = gaussian(rng, 15, 4), Q = gaussian(rng, 5, 4);
    CHECK(distance_nearest_archetype(P, Q) == oracle::nearest_archetype_scan(P, Q));
  }
}

TEST_CASE("stable_ranks and suspicion_rank") {
  CHECK(stable_ranks({0.3, 0.1, 0.3, 0.2}) == std::vector<int>{3, 1, 4, 2});

  const auto r = suspicion_rank({1, 2, 3}, {1, 3, 2}, {2, 1, 3});
  CHECK(r.S == std::vector<int>{4, 6, 8});
  CHECK(r.selected_index == 0);

  const auto ties = suspicion_rank(std::vector<double>(5, 1.0), std::vector<double>(5, 2.0),
                                   std::vector<double>(5, 3.0));
  CHECK(ties.S == std::vector<int>{3, 6, 9, 12, 15});
  CHECK(ties.selected_index == 0);

  const auto two = suspicion_rank({2.0, 1.0}, {2.0, 1.0}, {0.5, 0.7});
  CHECK(two.selected_index == 1);
}

TEST_CASE("fusion ignores positive rescaling of any metric") {
  Rng rng(34);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(25);
    std::vector<std::vector<double>> m(3, std::vector<double>(n));
    for (auto& v : m)
      for (auto& x : v) x = std::round(rng.normal() * 4.0) / 4.0;  // some ties
    const auto base = suspicion_rank(m);
    auto scaled = m;
    const auto which = rng.below(3);
    const double c = std::exp(rng.normal(0.0, 3.0));
    for (auto& x : scaled[which]) x *= c;
    const auto again = suspicion_rank(scaled);
    CHECK(again.ranks == base.ranks);
    CHECK(again.S == base.S);
    CHECK(again.selected_index == base.selected_index);
  }
}

TEST_CASE("distinct metric values give a unique minimum") {
  Rng rng(35);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(25);
    std::vector<double> L(n), D(n), U(n);
    for (std::size_t i = 0; i < n; ++i) {
      L[i] = rng.normal();
      D[i] = rng.normal();
      U[i] = rng.normal();
    }
    const auto r = suspicion_rank(L, D, U);
    const int best = r.S[r.selected_index];
    CHECK(best == *std::min_element(r.S.begin(), r.S.end()));
    // With distinct values the selected index is the first minimiser.
    for (std::size_t i = 0; i < r.selected_index; ++i) CHECK(r.S[i] > best);
  }
}

TEST_CASE("select_best_of_n skips a planted outlier") {
  Rng rng(36);
  const int n = 20;
  Eigen::MatrixXd X(n, 4);
  for (int i = 0; i < n - 1; ++i) {
    Eigen::RowVectorXd v = gaussian(rng, 1, 4);
    X.row(i) = 0.01 * rng.uniform() * v / v.norm();
  }
  X.row(n - 1) << 5, 0, 0, 0;
  const auto model = aa::fit_aa(X, 3, 1);
  const auto b = select_best_of_n(batch_of(X), model);
  CHECK(b.ranks[0][n - 1] == n);
  CHECK(b.ranks[1][n - 1] == n);
  CHECK(b.selected_index < static_cast<std::size_t>(n - 1));
  CHECK_FALSE(b.all_ties);
  REQUIRE(b.geo_entropy);
  REQUIRE(b.dist_nearest_archetype);
  REQUIRE(b.voronoi);
  CHECK(b.voronoi->size() == static_cast<std::size_t>(n));
}

TEST_CASE("select_best_of_n on identical rows") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Zero(6, 3);
  aa::ArchetypeModel m;
  m.A = Eigen::MatrixXd::Ones(6, 1);
  m.B = Eigen::MatrixXd::Constant(1, 6, 1.0 / 6);
  m.Z = m.B * X;
  const auto b = select_best_of_n(batch_of(X), m);
  CHECK(b.all_ties);
  CHECK(b.selected_index == 0);
}

TEST_CASE("select_best_of_n is invariant under rigid motions") {
  Rng rng(37);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd X = gaussian(rng, 20, 5);
    const auto model = aa::fit_aa(X, 4, 300, 3);
    const Eigen::MatrixXd R = oracle::random_rotation(5, rng.next());
    const Eigen::RowVectorXd shift = gaussian(rng, 1, 5, 3.0);
    aa::ArchetypeModel moved = model;
    moved.Z = (model.Z * R.transpose()).rowwise() + shift;
    const Eigen::MatrixXd Y = (X * R.transpose()).rowwise() + shift;

    SelectOptions o;
    o.with_voronoi = false;
    const auto a = select_best_of_n(batch_of(X), model, o);
    const auto b = select_best_of_n(batch_of(Y), moved, o);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(std::abs(a.local_density[i] - b.local_density[i]) <= 1e-9);
      CHECK(std::abs(a.dist_consensus[i] - b.dist_consensus[i]) <= 1e-9);
      CHECK(std::abs((*a.dist_nearest_archetype)[i] - (*b.dist_nearest_archetype)[i]) <= 1e-9);
    }
    CHECK(a.S == b.S);
    CHECK(a.selected_index == b.selected_index);
  }
}
