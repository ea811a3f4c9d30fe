#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "crowd/floor_plan.hpp"
#include "crowd/geometry.hpp"

namespace crowd {

/// Geodesic distance to the nearest exit sampled on a regular grid.
/// Node (ix, iy) sits at origin + spacing * (ix, iy); storage is row-major in y.
struct DistanceGrid {
  Vec2 origin{0.0, 0.0};          // [m]
  double spacing = 1.0;           // [m]
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> values;     // [m]
  std::vector<std::uint8_t> obstacle;
  std::vector<std::uint8_t> exit;
  double large_value = 1e6;       // value pinned on obstacle and unreached nodes

  static DistanceGrid make(Vec2 origin, double spacing, std::size_t nx, std::size_t ny);

  std::size_t index(std::size_t ix, std::size_t iy) const noexcept { return iy * nx + ix; }
  Vec2 node(std::size_t ix, std::size_t iy) const noexcept {
    return origin + spacing * Vec2(static_cast<double>(ix), static_cast<double>(iy));
  }
  std::size_t size() const noexcept { return nx * ny; }
  bool contains(const Vec2& x) const noexcept;

  /// A node the front reached (free and below the large value).
  bool reached(std::size_t k) const noexcept { return !obstacle[k] && values[k] < large_value; }

  /// Bilinear interpolation of D over the reached corners of the enclosing cell.
  /// Returns large_value when no corner is reached.
  double interpolate(const Vec2& x) const;

  /// Free nodes the front never reached (still at large_value).
  std::size_t unreached_count() const;
};

struct GridOptions {
  double spacing = 0.1;    // [m]
  double inflation = 0.0;  // obstacle/wall dilation [m], typically one disk radius
  double margin = 0.0;     // grid padding around the floor-plan bounds [m]
};

/// Builds the grid over the floor-plan bounds and fills the masks: nodes inside
/// obstacles or within max(inflation, spacing / 2) of a wall or obstacle edge are
/// obstacles; free nodes within spacing / 2 of an exit segment are exits. Values
/// are initialized to large_value (1e6 times the domain diameter).
DistanceGrid rasterize(const FloorPlan& plan, const GridOptions& options);

/// First-order Fast Marching from the exit nodes (value 0) using the upwind
/// quadratic update over accepted axis neighbors. Obstacle nodes are never
/// accepted. Throws ValidationError when there is no exit node. The optional
/// `acceptance_order` receives node indices in the order they were accepted.
void fmm_march(DistanceGrid& grid, std::vector<std::size_t>* acceptance_order = nullptr);

/// rasterize + fmm_march.
DistanceGrid fmm_solve(const FloorPlan& plan, const GridOptions& options);

/// Max over reached free non-exit nodes of | |grad D|_upwind - 1 | (Godunov form).
double eikonal_residual(const DistanceGrid& grid);

/// Descent direction times `speed`: node gradients (central, one-sided next to
/// obstacles or the boundary) are bilinearly interpolated at x and renormalized.
/// Returns zero within half a cell of an exit node. Throws GeometryError when x
/// is outside the grid or surrounded by obstacle nodes.
Vec2 geodesic_velocity(const DistanceGrid& grid, double speed, const Vec2& x);

// Binary layout, little-endian:
//   char[8]  magic "CRWDGRD1"
//   uint32   nx, ny
//   float64  origin_x, origin_y, spacing, large_value
//   float64  values[nx * ny]          (row-major in y)
//   uint8    flags[nx * ny]           (bit 0 obstacle, bit 1 exit)
void write_grid_binary(const DistanceGrid& grid, std::ostream& os);
DistanceGrid read_grid_binary(std::istream& is);

// Text layout:
//   crowd-grid 1
//   dims <nx> <ny>
//   origin <x> <y>
//   spacing <dx>
//   large <value>
//   values            followed by ny lines of nx values (%.17g)
//   flags             followed by ny lines of nx flag digits (0..3)
void write_grid_text(const DistanceGrid& grid, std::ostream& os);
DistanceGrid read_grid_text(std::istream& is);

void save_grid(const DistanceGrid& grid, const std::string& path);  // .txt -> text, else binary
DistanceGrid load_grid(const std::string& path);

}  // namespace crowd
