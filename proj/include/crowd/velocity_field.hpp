#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "crowd/distance_grid.hpp"
#include "crowd/floor_plan.hpp"
#include "crowd/geometry.hpp"

namespace crowd {

/// Spontaneous velocity U_i(q) of each disk.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Vec2 evaluate(const Configuration& cfg, std::size_t i) const = 0;

  /// Packs U(q) as (U_0x, U_0y, U_1x, ...).
  Eigen::VectorXd evaluate_all(const Configuration& cfg) const;
};

class ConstantField final : public VelocityField {
 public:
  explicit ConstantField(Vec2 velocity) : velocity_(std::move(velocity)) {}
  Vec2 evaluate(const Configuration&, std::size_t) const override { return velocity_; }

 private:
  Vec2 velocity_;
};

/// s (target - x) / |target - x|, zero at the target.
class PointSinkField final : public VelocityField {
 public:
  PointSinkField(Vec2 target, double speed) : target_(std::move(target)), speed_(speed) {}
  Vec2 evaluate(const Configuration& cfg, std::size_t i) const override;

 private:
  Vec2 target_;
  double speed_;
};

/// (s, 0) everywhere.
class Corridor1dField final : public VelocityField {
 public:
  explicit Corridor1dField(double speed) : speed_(speed) {}
  Vec2 evaluate(const Configuration&, std::size_t) const override { return {speed_, 0.0}; }

 private:
  double speed_;
};

/// offset + matrix * x.
class AffineField final : public VelocityField {
 public:
  AffineField(Vec2 offset, Eigen::Matrix2d matrix)
    : offset_(std::move(offset)), matrix_(std::move(matrix)) {}
  Vec2 evaluate(const Configuration& cfg, std::size_t i) const override {
    return offset_ + matrix_ * cfg.positions[i];
  }

 private:
  Vec2 offset_;
  Eigen::Matrix2d matrix_;
};

/// Explicit constant velocity per persistent disk id; unknown ids get `fallback`.
class PerDiskField final : public VelocityField {
 public:
  explicit PerDiskField(std::map<std::size_t, Vec2> velocities, Vec2 fallback = Vec2::Zero())
    : velocities_(std::move(velocities)), fallback_(std::move(fallback)) {}
  Vec2 evaluate(const Configuration& cfg, std::size_t i) const override;

 private:
  std::map<std::size_t, Vec2> velocities_;
  Vec2 fallback_;
};

/// U_0(x) = -s grad D(x) from a Fast Marching distance grid.
class GeodesicField final : public VelocityField {
 public:
  GeodesicField(std::shared_ptr<const DistanceGrid> grid, double speed)
    : grid_(std::move(grid)), speed_(speed) {}
  Vec2 evaluate(const Configuration& cfg, std::size_t i) const override {
    return geodesic_velocity(*grid_, speed_, cfg.positions[i]);
  }
  const DistanceGrid& grid() const noexcept { return *grid_; }
  double speed() const noexcept { return speed_; }

 private:
  std::shared_ptr<const DistanceGrid> grid_;
  double speed_;
};

/// First region (axis-aligned box) containing the disk center decides the field;
/// centers outside every region use the fallback.
class RegionField final : public VelocityField {
 public:
  RegionField(std::vector<std::pair<Box, std::shared_ptr<const VelocityField>>> regions,
              std::shared_ptr<const VelocityField> fallback)
    : regions_(std::move(regions)), fallback_(std::move(fallback)) {}
  Vec2 evaluate(const Configuration& cfg, std::size_t i) const override;

 private:
  std::vector<std::pair<Box, std::shared_ptr<const VelocityField>>> regions_;
  std::shared_ptr<const VelocityField> fallback_;
};

}  // namespace crowd
