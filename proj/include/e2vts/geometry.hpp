#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

namespace e2vts {

using Point2 = Eigen::Vector2d;
using Polygon = std::vector<Point2>;

/// Four corners in pixel coordinates (top-left origin, y down). Human-entered
/// quads are stored clockwise (on screen) starting from the top-left corner.
struct Quad {
  std::array<Point2, 4> corners{};

  Polygon polygon() const { return {corners.begin(), corners.end()}; }
  bool operator==(const Quad& o) const {
    for (int i = 0; i < 4; ++i)
      if (corners[static_cast<std::size_t>(i)] != o.corners[static_cast<std::size_t>(i)]) return false;
    return true;
  }
};

/// Shoelace area; positive when the vertices run clockwise on screen (y down).
template <typename Derived>
double signed_area(const std::vector<Derived>& poly) {
  const std::size_t n = poly.size();
  double a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

inline double cross2(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool is_finite(const Quad& q);
/// No two non-adjacent edges intersect and the area is non-zero.
bool is_simple(const Quad& q);
/// Strictly convex (no reflex or collinear corners).
bool is_convex(const Polygon& poly);
inline bool is_convex(const Quad& q) { return is_convex(q.polygon()); }

/// Reorders a simple quad to run clockwise on screen starting at the corner
/// with the smallest x + y.
Quad canonical_quad(const Quad& q);

/// Sutherland-Hodgman: clips `subject` against the convex polygon `clip`.
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

Quad make_quad(double x0, double y0, double x1, double y1, double x2, double y2, double x3, double y3);
/// Axis-aligned rectangle as a clockwise quad from its top-left corner.
Quad rect_quad(double x, double y, double w, double h);

}  // namespace e2vts
