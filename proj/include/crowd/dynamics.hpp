#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "crowd/floor_plan.hpp"
#include "crowd/geometry.hpp"
#include "crowd/projection.hpp"
#include "crowd/velocity_field.hpp"

namespace crowd {

struct StepParams {
  double h = 0.01;                  // [s]
  double tol = 0.0;                 // [m/s]; 0 selects 1e-8 * sqrt(N)
  std::size_t max_iter = 100000;
  std::optional<double> rho;        // empty: 1 / ||B||^2 estimate
  std::optional<double> cutoff;     // [m]; empty: 2 sqrt(2) h v_max
  int max_halvings = 3;
  bool warm_start = true;
  bool accelerate = true;           // extrapolated multiplier iteration
  bool finish = true;               // exact active-set finish of each projection
  bool scale_wall_rows = false;     // scale disk-wall rows to |G| = sqrt(2)
  double overlap_tolerance = 1e-6;  // [m] admissible overlap of the input configuration

  /// Throws ValidationError when h <= 0 or a tolerance is negative.
  void validate() const;
  double tolerance_for(std::size_t num_disks) const;
};

/// One row of the pressure network. For disk-wall contacts `j` is the wall
/// index and `pj` the closest wall point.
struct FrameContact {
  ContactKind kind = ContactKind::DiskDisk;
  std::size_t i = 0;  // persistent disk id
  std::size_t j = 0;  // persistent disk id or wall index
  double gap = 0.0;
  double lambda = 0.0;
  Vec2 pi{0.0, 0.0};
  Vec2 pj{0.0, 0.0};
};

struct ExitEvent {
  std::size_t id = 0;
  std::size_t exit = 0;
  Vec2 position{0.0, 0.0};
  double time = 0.0;
};

struct TrajectoryFrame {
  std::size_t step = 0;
  double time = 0.0;
  Configuration config;            // q^n
  Eigen::VectorXd velocity;        // u^n
  Eigen::VectorXd spontaneous;     // U(q^n)
  std::vector<FrameContact> contacts;
  std::size_t iterations = 0;
  SolveStatus status = SolveStatus::Converged;
  double h_used = 0.0;             // q^{n+1} = q^n + h_used u^n
  int halvings = 0;
  double next_min_gap = std::numeric_limits<double>::infinity();  // min non-positive gap at q^{n+1}
  bool applied = true;             // false for the T = 0 frame (velocity not integrated)
  std::vector<ExitEvent> exited;   // disks removed at the end of this step
};

struct StepOutcome {
  TrajectoryFrame frame;
  Configuration next;
};

/// Prediction-correction stepper. Keeps the previous multipliers (keyed by
/// contact identity) for warm starting when enabled.
class Stepper {
 public:
  Stepper(std::vector<WallSegment> walls, StepParams params);

  /// u^n = P_{C^h}(U(q^n)), q^{n+1} = q^n + h u^n. Retries with h / 2 (and a
  /// doubled cutoff) when the solve fails or a gap at q^{n+1} falls below
  /// -10 tol h. Throws ValidationError on infeasible input and SolverError
  /// once the retry budget is exhausted.
  /// `max_h` caps the first attempt's step (used to land on the horizon).
  StepOutcome step(const Configuration& cfg, const VelocityField& field, std::size_t index = 0,
                   double max_h = std::numeric_limits<double>::infinity());

  const StepParams& params() const noexcept { return params_; }
  const std::vector<WallSegment>& walls() const noexcept { return walls_; }
  void reset_warm_start() { warm_.clear(); }

 private:
  using Key = std::tuple<int, std::size_t, std::size_t>;

  std::vector<WallSegment> walls_;
  StepParams params_;
  std::map<Key, double> warm_;
};

/// Stateless single step (cold start).
StepOutcome step(const Configuration& cfg, const VelocityField& field, const StepParams& params,
                 std::span<const WallSegment> walls = {});

struct RunMetrics {
  std::size_t steps = 0;
  double final_time = 0.0;
  std::size_t initial_count = 0;
  std::size_t remaining = 0;
  std::optional<double> evacuation_time;  // first time all disks are gone
  std::vector<std::size_t> exit_counts;   // per exit segment
  double max_lambda = 0.0;
  double mean_iterations = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();  // over all frames
};

struct RunOptions {
  double horizon = 0.0;  // T [s]
  std::size_t stride = 1;
  bool keep_frames = false;
  /// Invoked on every step; `sampled` is true on stride multiples.
  std::function<void(const TrajectoryFrame&, bool sampled)> on_frame;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<TrajectoryFrame> frames;  // sampled frames when keep_frames
  Configuration final_config;
};

/// Time loop over Stepper::step until t >= T or the population is evacuated.
/// A disk is removed when its center path crosses an exit segment or ends within
/// `capture_radius` of one.
class Simulation {
 public:
  Simulation(Configuration initial, FloorPlan plan, std::shared_ptr<const VelocityField> field,
             StepParams params, double capture_radius = 0.0);

  RunResult run(const RunOptions& options);

 private:
  Configuration initial_;
  FloorPlan plan_;
  std::shared_ptr<const VelocityField> field_;
  StepParams params_;
  double capture_radius_;
};

}  // namespace crowd
