#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowd/dynamics.hpp"
#include "crowd/floor_plan.hpp"

namespace crowd {

/// Trajectory text file, one row per disk per sampled frame:
///   step,time,id,x,y,ux,uy,r,exited
/// Exit events add one row (exited = 1) at step + 1 with the position where the
/// disk left and the velocity of its last step. Numbers use %.17g.
///
/// Optional binary twin (little-endian): magic "CRWDTRJ1" followed by records
///   uint64 step, float64 time, uint64 id, float64 x, y, ux, uy, r, uint8 exited.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(const std::string& path,
                            const std::optional<std::string>& binary_path = std::nullopt);
  void write(const TrajectoryFrame& frame, bool sampled = true);
  void flush();

 private:
  void row(std::size_t step, double time, std::size_t id, const Vec2& x, const Vec2& u, double r,
           bool exited);

  std::ofstream text_;
  std::ofstream binary_;
  bool has_binary_ = false;
};

/// Pressure network text file, one row per contact with lambda > 0 per sampled frame:
///   step,i,j,lambda,xi,yi,xj,yj
/// `j` is a disk id, or `w<index>` for a wall (xj, yj is then the closest wall point).
class PressureWriter {
 public:
  explicit PressureWriter(const std::string& path);
  void write(const TrajectoryFrame& frame, bool sampled = true);
  void flush();

 private:
  std::ofstream text_;
};

/// key=value summary: evacuation_time_s (or "none"), steps, final_time_s,
/// initial_count, remaining, exit_<k>_count, max_lambda, mean_solver_iterations,
/// min_gap_m.
void write_metrics(const RunMetrics& metrics, const std::string& path);
std::string format_metrics(const RunMetrics& metrics);

struct TrajectoryRow {
  std::size_t step = 0;
  double time = 0.0;
  std::size_t id = 0;
  Vec2 position{0.0, 0.0};
  Vec2 velocity{0.0, 0.0};
  double radius = 0.0;
  bool exited = false;
};

std::vector<TrajectoryRow> read_trajectory(const std::string& path);
std::vector<TrajectoryRow> read_trajectory_binary(const std::string& path);

struct FeasibilityReport {
  double min_gap = std::numeric_limits<double>::infinity();  // over non-positive gaps
  std::size_t worst_step = 0;
  std::size_t frames = 0;
  bool ok = true;
};

/// Rebuilds each non-exited frame and checks every gap >= -tolerance.
FeasibilityReport check_trajectory_feasibility(std::span<const TrajectoryRow> rows,
                                               std::span<const WallSegment> walls,
                                               double tolerance);

/// True when the lambda > 0 contacts of the frame contain a connected chain of
/// disks touching walls on both sides of the doorway. Only wall contacts within
/// `reach` of the door midpoint count; sides are taken along the door axis.
bool has_spanning_arch(const TrajectoryFrame& frame, const ExitSegment& door, double reach);

std::string format_double(double v);

}  // namespace crowd
