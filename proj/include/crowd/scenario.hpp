#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crowd/distance_grid.hpp"
#include "crowd/dynamics.hpp"
#include "crowd/floor_plan.hpp"
#include "crowd/geometry.hpp"
#include "crowd/velocity_field.hpp"

namespace crowd {

inline constexpr int kScenarioVersion = 1;

struct PlacementSpec {
  enum class Kind { Explicit, Random };
  Kind kind = Kind::Random;
  std::vector<Vec2> positions;  // explicit
  std::uint64_t seed = 0;       // random
  std::optional<Box> region;    // random; defaults to the floor-plan bounds
};

struct PopulationSpec {
  std::size_t count = 0;
  double radius = 0.25;               // [m], used when radii is empty
  std::vector<double> radii;          // optional per-disk radii [m]
  /// Random placement only: radii drawn uniformly from [lo, hi] with the placement seed.
  std::optional<std::array<double, 2>> radius_range;
  PlacementSpec placement;

  /// Nominal radius of disk k; the upper bound when radii are drawn from a range.
  double radius_of(std::size_t k) const {
    if (radius_range) return (*radius_range)[1];
    return radii.empty() ? radius : radii[k];
  }
};

struct FieldSpec {
  enum class Kind { Geodesic, Constant, PointSink, Corridor1d, Affine, PerDisk, Regions };
  Kind kind = Kind::Geodesic;
  double spacing = 0.1;            // geodesic grid spacing [m]
  double speed = 1.4;              // [m/s]
  bool inflate_obstacles = true;   // dilate obstacle mask by the largest radius
  Vec2 vector{0.0, 0.0};           // constant velocity, sink target or affine offset
  Eigen::Matrix2d matrix = Eigen::Matrix2d::Zero();  // affine [1/s]
  std::vector<Vec2> per_disk;      // velocity of disk id k
  Vec2 fallback{0.0, 0.0};         // per-disk fallback
  struct Region;
  std::vector<Region> regions;
  std::shared_ptr<FieldSpec> region_fallback;
};

struct FieldSpec::Region {
  Box box;
  FieldSpec field;
};

struct OutputSpec {
  std::size_t stride = 1;
  std::string directory;  // empty: $CROWD_OUTPUT_DIR, else "out"
  bool binary_trajectory = false;
};

struct Scenario {
  int version = kScenarioVersion;
  std::string name;
  FloorPlan plan;
  PopulationSpec population;
  FieldSpec field;
  StepParams step;
  double horizon = 10.0;  // T [s]
  OutputSpec output;
};

/// Parses the JSON scenario text. Missing optional fields take their defaults.
/// Throws ValidationError naming the line/column (syntax) or the field path.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

/// Canonical JSON text (every field written, fixed key order).
std::string scenario_to_json(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::string& path);

/// Field-by-field comparison of two scenarios after normalization.
bool equivalent(const Scenario& a, const Scenario& b);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
  std::string str() const;
};

/// Static checks (parameters, exits, explicit placements, density bound).
ValidationReport validate_scenario(const Scenario& scenario);

/// Initial configuration. Random placement is rejection sampling seeded by the
/// scenario; it gives up after 10^4 N rejected draws. Throws ValidationError.
Configuration place_population(const Scenario& scenario);

/// Total disk area above pi / sqrt(12) of the free placement area.
bool exceeds_packing_bound(const Scenario& scenario);

struct FieldBundle {
  std::shared_ptr<const VelocityField> field;
  std::shared_ptr<const DistanceGrid> grid;  // geodesic fields only
  double capture_radius = 0.0;
};

FieldBundle build_field(const Scenario& scenario);

}  // namespace crowd
