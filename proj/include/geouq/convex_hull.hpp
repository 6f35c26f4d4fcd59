#pragma once

#include <Eigen/Dense>

#include <vector>

namespace geouq::geometry {

struct HullFacet {
  std::vector<Eigen::Index> vertices;  // D indices into the point set
  Eigen::VectorXd normal;              // unit, outward
  double offset = 0.0;                 // normal . x = offset on the facet
};

/// Incremental (beneath-beyond) convex hull of points in R^D, 2 <= D <= 4.
/// Returns no facets when the points do not span R^D.
std::vector<HullFacet> convex_hull(const Eigen::MatrixXd& points);

/// Delaunay simplices of points in R^2 or R^3, from the lower hull of the
/// points lifted onto the paraboloid. Each simplex lists dim + 1 indices.
std::vector<std::vector<Eigen::Index>> delaunay(const Eigen::MatrixXd& points);

}  // namespace geouq::geometry
