#pragma once

#include <vector>

#include "crowd/geometry.hpp"

namespace crowd {

struct ExitSegment {
  Vec2 a;
  Vec2 b;  // may equal `a` for a point-like exit
};

struct Box {
  Vec2 lo{0.0, 0.0};
  Vec2 hi{0.0, 0.0};

  bool contains(const Vec2& p) const noexcept {
    return p.x() >= lo.x() && p.y() >= lo.y() && p.x() <= hi.x() && p.y() <= hi.y();
  }
  double area() const noexcept { return (hi - lo).prod(); }
  double diameter() const noexcept { return (hi - lo).norm(); }
};

/// Single-floor plan: wall polylines, solid polygonal obstacles and exits.
struct FloorPlan {
  std::vector<std::vector<Vec2>> walls;      // open polylines
  std::vector<std::vector<Vec2>> obstacles;  // closed polygons (implicit closing edge)
  std::vector<ExitSegment> exits;

  /// Wall segments for contact handling: polyline pieces first (group = polyline
  /// index), then obstacle edges (group = walls.size() + obstacle index).
  std::vector<WallSegment> segments() const;

  /// Bounding box of walls, obstacles and exits.
  Box bounds() const;

  bool inside_obstacle(const Vec2& p) const;

  /// Area of the bounding box minus the obstacle areas.
  double free_area() const;
};

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& polygon);
double polygon_area(const std::vector<Vec2>& polygon);
double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b);

/// True when the straight path from p0 to p1 crosses (or touches) the segment [a, b].
bool path_crosses_segment(const Vec2& p0, const Vec2& p1, const Vec2& a, const Vec2& b);

}  // namespace crowd
