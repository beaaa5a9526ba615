#include "e2vts/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace e2vts {

bool is_finite(const Quad& q) {
  return std::all_of(q.corners.begin(), q.corners.end(), [](const Point2& p) { return p.allFinite(); });
}

namespace {

int orient(const Point2& a, const Point2& b, const Point2& c) {
  const double v = cross2(b - a, c - a);
  return (v > 0) - (v < 0);
}

bool on_segment(const Point2& a, const Point2& b, const Point2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
         p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2) {
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

bool is_simple(const Quad& q) {
  if (!is_finite(q)) return false;
  const auto& c = q.corners;
  if (segments_intersect(c[0], c[1], c[2], c[3])) return false;
  if (segments_intersect(c[1], c[2], c[3], c[0])) return false;
  return std::abs(signed_area(q.polygon())) > 0.0;
}

bool is_convex(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = cross2(poly[(i + 1) % n] - poly[i], poly[(i + 2) % n] - poly[(i + 1) % n]);
    if (!std::isfinite(c) || c == 0.0) return false;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0)
      sign = s;
    else if (s != sign)
      return false;
  }
  // Rules out star-shaped self-intersections with consistent turning.
  double turn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = poly[(i + 1) % n] - poly[i];
    const Point2 b = poly[(i + 2) % n] - poly[(i + 1) % n];
    turn += std::atan2(cross2(a, b), a.dot(b));
  }
  return std::abs(std::abs(turn) - 2.0 * std::numbers::pi) < 1e-6;
}

Quad canonical_quad(const Quad& q) {
  Quad out = q;
  if (signed_area(out.polygon()) < 0) std::reverse(out.corners.begin(), out.corners.end());
  std::size_t start = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    const double si = out.corners[i].x() + out.corners[i].y();
    const double sb = out.corners[start].x() + out.corners[start].y();
    if (si < sb) start = i;
  }
  std::rotate(out.corners.begin(), out.corners.begin() + static_cast<std::ptrdiff_t>(start), out.corners.end());
  return out;
}

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
  Polygon output = subject;
  const double orientation = signed_area(clip) >= 0 ? 1.0 : -1.0;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2& a = clip[e];
    const Point2& b = clip[(e + 1) % m];
    auto inside = [&](const Point2& p) { return orientation * cross2(b - a, p - a) >= 0.0; };
    auto intersect = [&](const Point2& p, const Point2& q) {
      const double dp = cross2(b - a, p - a);
      const double dq = cross2(b - a, q - a);
      const double t = dp / (dp - dq);
      return Point2(p + t * (q - p));
    };
    Polygon input = std::move(output);
    output.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + input.size() - 1) % input.size()];
      const bool cin = inside(cur), pin = inside(prev);
      if (cin) {
        if (!pin) output.push_back(intersect(prev, cur));
        output.push_back(cur);
      } else if (pin) {
        output.push_back(intersect(prev, cur));
      }
    }
  }
  return output;
}

Quad make_quad(double x0, double y0, double x1, double y1, double x2, double y2, double x3, double y3) {
  return Quad{{Point2(x0, y0), Point2(x1, y1), Point2(x2, y2), Point2(x3, y3)}};
}

Quad rect_quad(double x, double y, double w, double h) { return make_quad(x, y, x + w, y, x + w, y + h, x, y + h); }

}  // namespace e2vts
