#include "icpp/geometry.hpp"

#include "icpp/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icpp {
namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point& a, const Point& b, const Point& t, double tol) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (std::abs(cross(a, b, t)) > tol * std::max(len, 1.0)) return false;
  return t.x >= std::min(a.x, b.x) - tol && t.x <= std::max(a.x, b.x) + tol &&
         t.y >= std::min(a.y, b.y) - tol && t.y <= std::max(a.y, b.y) + tol;
}

bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_segment(q1, q2, p1, 0.0)) || (d2 == 0 && on_segment(q1, q2, p2, 0.0)) ||
         (d3 == 0 && on_segment(p1, p2, q1, 0.0)) || (d4 == 0 && on_segment(p1, p2, q2, 0.0));
}

bool is_simple(const std::vector<Point>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a, b, v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

}  // namespace

double polygon_signed_area(const std::vector<Point>& polygon) {
  double s = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

bool point_in_polygon(const std::vector<Point>& polygon, const Point& t) {
  const std::size_t n = polygon.size();
  double scale = 0.0;
  for (const auto& v : polygon) scale = std::max({scale, std::abs(v.x), std::abs(v.y)});
  const double tol = 1e-12 * std::max(scale, 1.0);
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = polygon[i];
    const Point& b = polygon[j];
    if (on_segment(a, b, t, tol)) return true;
    if ((a.y > t.y) != (b.y > t.y)) {
      const double x_cross = a.x + (t.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (t.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Region Region::interval(double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi)) || !(lo < hi)) {
    throw Error(ErrorKind::InvalidRegion, "interval needs finite lo < hi");
  }
  Region r;
  r.dim_ = 1;
  r.measure_ = hi - lo;
  r.bounds_ = {{lo, 0.0}, {hi, 0.0}};
  return r;
}

Region Region::polygon(std::vector<Point> vertices) {
  if (vertices.size() < 3) throw Error(ErrorKind::InvalidRegion, "polygon needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw Error(ErrorKind::InvalidRegion, "non-finite polygon vertex");
    }
  }
  const double area = std::abs(polygon_signed_area(vertices));
  if (!(area > 0.0)) throw Error(ErrorKind::InvalidRegion, "polygon has zero area");
  if (!is_simple(vertices)) throw Error(ErrorKind::InvalidRegion, "polygon is self-intersecting");
  Region r;
  r.dim_ = 2;
  r.measure_ = area;
  Box b{{vertices[0].x, vertices[0].y}, {vertices[0].x, vertices[0].y}};
  for (const auto& v : vertices) {
    b.lo.x = std::min(b.lo.x, v.x);
    b.lo.y = std::min(b.lo.y, v.y);
    b.hi.x = std::max(b.hi.x, v.x);
    b.hi.y = std::max(b.hi.y, v.y);
  }
  r.bounds_ = b;
  r.vertices_ = std::move(vertices);
  return r;
}

Region Region::rectangle(double x0, double x1, double y0, double y1) {
  return polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

bool Region::contains(const Point& t) const {
  if (dim_ == 1) return t.x >= bounds_.lo.x && t.x <= bounds_.hi.x;
  if (t.x < bounds_.lo.x || t.x > bounds_.hi.x || t.y < bounds_.lo.y || t.y > bounds_.hi.y) {
    return false;
  }
  return point_in_polygon(vertices_, t);
}

double QuadratureRule::total_weight() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

QuadratureRule build_quadrature(const Region& region, int resolution) {
  if (resolution < 2) throw Error(ErrorKind::InvalidArgument, "quadrature resolution must be >= 2");
  if (!(region.measure() > 0.0)) throw Error(ErrorKind::InvalidRegion, "degenerate region");
  QuadratureRule rule;
  const Box b = region.bounds();
  if (region.dimension() == 1) {
    using GL = boost::math::quadrature::gauss<double, 8>;
    const auto& abscissa = GL::abscissa();
    const auto& weights = GL::weights();
    const double h = (b.hi.x - b.lo.x) / resolution;
    for (int panel = 0; panel < resolution; ++panel) {
      const double x0 = b.lo.x + panel * h;
      const double x1 = panel + 1 == resolution ? b.hi.x : x0 + h;
      const double mid = 0.5 * (x0 + x1);
      const double half = 0.5 * (x1 - x0);
      rule.cells.push_back({{x0, 0.0}, {x1, 0.0}});
      // Boost stores the non-negative half of a symmetric rule.
      for (std::size_t i = 0; i < abscissa.size(); ++i) {
        const double xi = abscissa[i];
        const double w = weights[i] * half;
        rule.nodes.push_back({mid + half * xi, 0.0});
        rule.weights.push_back(w);
        rule.cell_of_node.push_back(rule.cells.size() - 1);
        if (xi != 0.0) {
          rule.nodes.push_back({mid - half * xi, 0.0});
          rule.weights.push_back(w);
          rule.cell_of_node.push_back(rule.cells.size() - 1);
        }
      }
    }
    return rule;
  }

  const double hx = (b.hi.x - b.lo.x) / resolution;
  const double hy = (b.hi.y - b.lo.y) / resolution;
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      const Point c{b.lo.x + (ix + 0.5) * hx, b.lo.y + (iy + 0.5) * hy};
      if (!region.contains(c)) continue;
      rule.cells.push_back({{c.x - 0.5 * hx, c.y - 0.5 * hy}, {c.x + 0.5 * hx, c.y + 0.5 * hy}});
      rule.nodes.push_back(c);
      rule.weights.push_back(hx * hy);
      rule.cell_of_node.push_back(rule.cells.size() - 1);
    }
  }
  if (rule.nodes.empty()) throw Error(ErrorKind::InvalidRegion, "no quadrature cell inside polygon");
  return rule;
}

}  // namespace icpp
