#include "geouq/convex_hull.hpp"

#include <algorithm>
#include <cmath>
#include <list>
#include <map>

#include "geouq/error.hpp"

namespace geouq::geometry {
namespace {

using Ridge = std::vector<Eigen::Index>;

// Greedy pick of D + 1 affinely independent points; empty when degenerate.
std::vector<Eigen::Index> initial_simplex(const Eigen::MatrixXd& P, double tol) {
  const Eigen::Index n = P.rows();
  const Eigen::Index D = P.cols();
  std::vector<Eigen::Index> chosen;
  Eigen::Index first = 0;
  P.col(0).minCoeff(&first);
  chosen.push_back(first);

  Eigen::MatrixXd basis(D, 0);
  while (static_cast<Eigen::Index>(chosen.size()) < D + 1) {
    double best = -1.0;
    Eigen::Index arg = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd r = (P.row(i) - P.row(first)).transpose();
      for (Eigen::Index c = 0; c < basis.cols(); ++c) r -= basis.col(c).dot(r) * basis.col(c);
      const double dist = r.norm();
      if (dist > best) {
        best = dist;
        arg = i;
      }
    }
    if (best <= tol) return {};
    Eigen::VectorXd r = (P.row(arg) - P.row(first)).transpose();
    for (Eigen::Index c = 0; c < basis.cols(); ++c) r -= basis.col(c).dot(r) * basis.col(c);
    basis.conservativeResize(D, basis.cols() + 1);
    basis.col(basis.cols() - 1) = r / r.norm();
    chosen.push_back(arg);
  }
  return chosen;
}

HullFacet make_facet(const Eigen::MatrixXd& P, std::vector<Eigen::Index> vertices,
                     const Eigen::VectorXd& interior) {
  const Eigen::Index D = P.cols();
  Eigen::MatrixXd edges(D - 1, D);
  for (Eigen::Index r = 1; r < D; ++r)
    edges.row(r - 1) = P.row(vertices[static_cast<std::size_t>(r)]) - P.row(vertices[0]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(edges, Eigen::ComputeFullV);
  HullFacet f;
  f.normal = svd.matrixV().col(D - 1);
  f.offset = f.normal.dot(P.row(vertices[0]).transpose());
  if (f.normal.dot(interior) - f.offset > 0.0) {
    f.normal = -f.normal;
    f.offset = -f.offset;
  }
  f.vertices = std::move(vertices);
  return f;
}

}  // namespace

std::vector<HullFacet> convex_hull(const Eigen::MatrixXd& points) {
  const Eigen::Index D = points.cols();
  if (D < 2 || D > 4) throw PreconditionError("convex_hull supports dimensions 2..4");
  if (points.rows() < D + 1) return {};

  const double extent = (points.colwise().maxCoeff() - points.colwise().minCoeff()).maxCoeff();
  if (!(extent > 0.0)) return {};
  const double eps = 1e-11 * extent;

  const auto simplex = initial_simplex(points, eps);
  if (simplex.empty()) return {};

  Eigen::VectorXd interior = Eigen::VectorXd::Zero(D);
  for (auto i : simplex) interior += points.row(i).transpose();
  interior /= static_cast<double>(simplex.size());

  std::list<HullFacet> facets;
  for (std::size_t skip = 0; skip < simplex.size(); ++skip) {
    std::vector<Eigen::Index> v;
    for (std::size_t j = 0; j < simplex.size(); ++j)
      if (j != skip) v.push_back(simplex[j]);
    facets.push_back(make_facet(points, std::move(v), interior));
  }

  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    if (std::find(simplex.begin(), simplex.end(), p) != simplex.end()) continue;
    const Eigen::VectorXd x = points.row(p).transpose();

    std::map<Ridge, int> ridge_count;
    bool any_visible = false;
    for (auto it = facets.begin(); it != facets.end();) {
      if (it->normal.dot(x) - it->offset > eps) {
        any_visible = true;
        for (std::size_t drop = 0; drop < it->vertices.size(); ++drop) {
          Ridge r;
          for (std::size_t j = 0; j < it->vertices.size(); ++j)
            if (j != drop) r.push_back(it->vertices[j]);
          std::sort(r.begin(), r.end());
          ++ridge_count[r];
        }
        it = facets.erase(it);
      } else {
        ++it;
      }
    }
    if (!any_visible) continue;
    for (const auto& [ridge, count] : ridge_count) {
      if (count != 1) continue;
      std::vector<Eigen::Index> v = ridge;
      v.push_back(p);
      facets.push_back(make_facet(points, std::move(v), interior));
    }
  }
  return {facets.begin(), facets.end()};
}

std::vector<std::vector<Eigen::Index>> delaunay(const Eigen::MatrixXd& points) {
  const Eigen::Index dim = points.cols();
  if (dim != 2 && dim != 3) throw PreconditionError("delaunay supports 2D and 3D points");

  // Centre and scale first; the triangulation is invariant to both and the
  // lifted coordinate stays well conditioned.
  const Eigen::RowVectorXd centre = points.colwise().mean();
  Eigen::MatrixXd p = points.rowwise() - centre;
  const double scale = p.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return {};
  p /= scale;

  Eigen::MatrixXd lifted(p.rows(), dim + 1);
  lifted.leftCols(dim) = p;
  lifted.col(dim) = p.rowwise().squaredNorm();

  std::vector<std::vector<Eigen::Index>> simplices;
  for (auto& f : convex_hull(lifted))
    if (f.normal(dim) < -1e-12) simplices.push_back(std::move(f.vertices));
  return simplices;
}

}  // namespace geouq::geometry
