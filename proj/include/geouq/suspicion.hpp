#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geouq/archetypes.hpp"
#include "geouq/embedding_prep.hpp"

namespace geouq::suspicion {

inline constexpr int kDefaultNeighbours = 5;

/// Mean distance from each row to its k nearest other rows
/// (k clamped to n - 1; neighbour ties broken by row index).
std::vector<double> local_density(const Eigen::MatrixXd& X, int k = kDefaultNeighbours);

/// Distance of each row to the batch mean.
std::vector<double> distance_from_consensus(const Eigen::MatrixXd& X);

/// U_i = sum_k A_ik (1 - mean_j A_jk).
std::vector<double> usage_rarity(const Eigen::MatrixXd& A);

/// Shannon entropy (nats) of each row of A, with 0 log 0 = 0.
std::vector<double> geometric_entropy(const Eigen::MatrixXd& A);

/// Negative distance to the closest archetype (0 = sitting on one).
std::vector<double> distance_nearest_archetype(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z);

/// 1-based ascending ranks; equal values keep input order.
std::vector<int> stable_ranks(const std::vector<double>& values);

struct RankFusion {
  std::vector<std::vector<int>> ranks;  // one list per metric, input order
  std::vector<int> S;
  std::size_t selected_index = 0;  // argmin S, smallest index on ties
};

RankFusion suspicion_rank(const std::vector<std::vector<double>>& metrics);
RankFusion suspicion_rank(const std::vector<double>& L, const std::vector<double>& D,
                          const std::vector<double>& U);

/// Scores of the greedy default response measured against the batch.
struct DefaultScores {
  double L = 0.0;
  double D = 0.0;
  double U = 0.0;
};

struct SuspicionBreakdown {
  std::string question_id;
  std::vector<double> local_density;
  std::vector<double> dist_consensus;
  std::vector<double> usage_rarity;
  std::optional<std::vector<double>> geo_entropy;
  std::optional<std::vector<double>> dist_nearest_archetype;
  std::optional<std::vector<double>> voronoi;
  std::array<std::vector<int>, 3> ranks;  // L, D, U
  std::vector<int> S;
  std::size_t selected_index = 0;
  int k_neighbors = kDefaultNeighbours;
  /// Every metric is constant across the batch; selection falls back to 0.
  bool all_ties = false;
  std::optional<DefaultScores> default_scores;
};

struct SelectOptions {
  int k = kDefaultNeighbours;
  bool with_voronoi = true;
  int voronoi_dim = 3;
  std::uint64_t voronoi_seed = 0;
  /// Also fuse H_L, D_A and Voronoi ranks into S (off: the three core terms).
  bool fuse_extended = false;
};

/// Computes every term for one batch and picks the least suspicious sample.
SuspicionBreakdown select_best_of_n(const prep::ReducedBatch& batch, const aa::ArchetypeModel& model,
                                    const SelectOptions& options = {});

}  // namespace geouq::suspicion
