#include "crowd/floor_plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crowd {

std::vector<WallSegment> FloorPlan::segments() const {
  std::vector<WallSegment> out;
  for (std::size_t p = 0; p < walls.size(); ++p) {
    for (std::size_t k = 0; k + 1 < walls[p].size(); ++k) {
      if (walls[p][k] == walls[p][k + 1]) continue;
      out.push_back({walls[p][k], walls[p][k + 1], static_cast<int>(p)});
    }
  }
  for (std::size_t o = 0; o < obstacles.size(); ++o) {
    const auto& poly = obstacles[o];
    const int group = static_cast<int>(walls.size() + o);
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Vec2& a = poly[k];
      const Vec2& b = poly[(k + 1) % poly.size()];
      if (a == b) continue;
      out.push_back({a, b, group});
    }
  }
  return out;
}

Box FloorPlan::bounds() const {
  const double inf = std::numeric_limits<double>::infinity();
  Box box{{inf, inf}, {-inf, -inf}};
  auto grow = [&](const Vec2& p) {
    box.lo = box.lo.cwiseMin(p);
    box.hi = box.hi.cwiseMax(p);
  };
  for (const auto& w : walls) for (const Vec2& p : w) grow(p);
  for (const auto& o : obstacles) for (const Vec2& p : o) grow(p);
  for (const auto& e : exits) {
    grow(e.a);
    grow(e.b);
  }
  if (box.lo.x() > box.hi.x()) return Box{};
  return box;
}

bool FloorPlan::inside_obstacle(const Vec2& p) const {
  return std::any_of(obstacles.begin(), obstacles.end(),
                     [&](const auto& poly) { return point_in_polygon(p, poly); });
}

double FloorPlan::free_area() const {
  double area = bounds().area();
  for (const auto& o : obstacles) area -= std::abs(polygon_area(o));
  return std::max(area, 0.0);
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& polygon) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t k = 0, prev = n - 1; k < n; prev = k++) {
    const Vec2& a = polygon[k];
    const Vec2& b = polygon[prev];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

double polygon_area(const std::vector<Vec2>& polygon) {
  double twice = 0.0;
  for (std::size_t k = 0; k < polygon.size(); ++k) {
    const Vec2& a = polygon[k];
    const Vec2& b = polygon[(k + 1) % polygon.size()];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * twice;
}

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  return (p - closest_point_on_segment(p, a, b)).norm();
}

namespace {

double cross(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

}  // namespace

bool path_crosses_segment(const Vec2& p0, const Vec2& p1, const Vec2& a, const Vec2& b) {
  const Vec2 r = p1 - p0;
  const Vec2 s = b - a;
  const double denom = cross(r, s);
  if (denom == 0.0) {
    // Parallel: only a collinear overlap counts.
    if (cross(a - p0, r) != 0.0) return false;
    if (r.squaredNorm() == 0.0) return distance_to_segment(p0, a, b) == 0.0;
    const double t0 = (a - p0).dot(r) / r.squaredNorm();
    const double t1 = (b - p0).dot(r) / r.squaredNorm();
    return std::max(t0, t1) >= 0.0 && std::min(t0, t1) <= 1.0;
  }
  const double t = cross(a - p0, s) / denom;
  const double u = cross(a - p0, r) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

}  // namespace crowd
