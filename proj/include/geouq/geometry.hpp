#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "geouq/archetypes.hpp"

namespace geouq::geometry {

inline constexpr double kVolumeEpsilon = 1e-12;

/// Global uncertainty of one batch: H_G = log(volume + epsilon).
struct GlobalScore {
  std::string question_id;
  double volume = 0.0;
  double H_G = 0.0;
  double epsilon = kVolumeEpsilon;
  bool degenerate = false;  // volume < epsilon
};

/// (K-1)-dimensional volume of the simplex on the K rows of Z, computed from
/// the Gram determinant of the edge vectors z_k - z_1. Zero for affinely
/// dependent rows. Throws TooManyVertices when K > d' + 1.
double simplex_volume(const Eigen::MatrixXd& Z);

GlobalScore geometric_volume(const aa::ArchetypeModel& model,
                             double epsilon = kVolumeEpsilon);
GlobalScore geometric_volume_of(const Eigen::MatrixXd& Z, double epsilon = kVolumeEpsilon);

struct VoronoiResult {
  std::vector<double> scores;  // one per point
  bool degenerate = false;     // all points within a 1e-12 ball
  std::size_t jittered = 0;    // duplicate points nudged before triangulation
  int dimension = 0;           // dimension actually triangulated
};

/// Approximate Voronoi cell volume per point: PCA to `reduce_to` (2 or 3)
/// dimensions, Delaunay triangulation, and the summed volume of the
/// simplices incident to each point.
VoronoiResult voronoi_cell_volumes(const Eigen::MatrixXd& points, int reduce_to = 3,
                                   std::uint64_t seed = 0);

struct EntropyBoundReport {
  double log_V = 0.0;
  double mc_entropy_uniform = 0.0;
  double mc_entropy_peaked = 0.0;
  double se_uniform = 0.0;  // Monte-Carlo standard errors
  double se_peaked = 0.0;
  int intrinsic_dim = 0;
};

struct EntropyCheckOptions {
  double peaked_alpha = 10.0;  // symmetric Dirichlet concentration
  int neighbours = 1;          // k of the Kozachenko-Leonenko estimator
};

/// Monte-Carlo check of the volume/entropy bound on the simplex spanned by Z:
/// entropy estimates (in intrinsic coordinates) for the uniform distribution
/// and a peaked Dirichlet, next to log V. The Kozachenko-Leonenko estimator
/// runs on log-ratio coordinates, where the support has no boundary.
EntropyBoundReport entropy_bound_check(const Eigen::MatrixXd& Z, int n_mc, std::uint64_t seed,
                                       const EntropyCheckOptions& options = {});

/// Kozachenko-Leonenko differential entropy estimate of the rows of Y
/// (nats), with its standard error.
std::pair<double, double> kl_entropy(const Eigen::MatrixXd& Y, int k = 1);

}  // namespace geouq::geometry
