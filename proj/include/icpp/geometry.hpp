#pragma once

// Observation regions and quadrature over them.

#include <cstddef>
#include <vector>

namespace icpp {

// A location in B. One-dimensional regions only use x.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Box {
  Point lo;
  Point hi;
};

// A closed interval [lo, hi] or a simple polygon. Boundary points belong to
// the region.
class Region {
 public:
  static Region interval(double lo, double hi);
  // Vertices in order (either orientation), without repeating the first one.
  static Region polygon(std::vector<Point> vertices);
  static Region rectangle(double x0, double x1, double y0, double y1);

  int dimension() const { return dim_; }
  double measure() const { return measure_; }
  bool contains(const Point& t) const;
  Box bounds() const { return bounds_; }
  const std::vector<Point>& vertices() const { return vertices_; }

 private:
  Region() = default;

  int dim_ = 1;
  double measure_ = 0.0;
  Box bounds_{};
  std::vector<Point> vertices_;
};

// Nodes and positive weights with Σ weights ≈ |B|. Each node belongs to one
// cell (a Gauss–Legendre panel in 1-D, a grid cell in 2-D); the cells are used
// to build piecewise-constant sampling envelopes.
struct QuadratureRule {
  std::vector<Point> nodes;
  std::vector<double> weights;
  std::vector<Box> cells;
  std::vector<std::size_t> cell_of_node;

  std::size_t size() const { return nodes.size(); }
  double total_weight() const;
};

// 1-D: `resolution` equal panels with 8-point Gauss–Legendre each.
// 2-D: resolution × resolution midpoint grid over the bounding box, keeping
// cells whose centre lies in the polygon.
QuadratureRule build_quadrature(const Region& region, int resolution);

// Even–odd test with an explicit on-edge check.
bool point_in_polygon(const std::vector<Point>& polygon, const Point& t);
double polygon_signed_area(const std::vector<Point>& polygon);

}  // namespace icpp
