#include "crowd/velocity_field.hpp"

namespace crowd {

Eigen::VectorXd VelocityField::evaluate_all(const Configuration& cfg) const {
  Eigen::VectorXd u(static_cast<Eigen::Index>(2 * cfg.size()));
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const Vec2 v = evaluate(cfg, i);
    u[static_cast<Eigen::Index>(2 * i)] = v.x();
    u[static_cast<Eigen::Index>(2 * i + 1)] = v.y();
  }
  return u;
}

Vec2 PointSinkField::evaluate(const Configuration& cfg, std::size_t i) const {
  const Vec2 d = target_ - cfg.positions[i];
  const double n = d.norm();
  if (n == 0.0) return Vec2::Zero();
  return speed_ * d / n;
}

Vec2 PerDiskField::evaluate(const Configuration& cfg, std::size_t i) const {
  const auto it = velocities_.find(cfg.ids[i]);
  return it == velocities_.end() ? fallback_ : it->second;
}

Vec2 RegionField::evaluate(const Configuration& cfg, std::size_t i) const {
  for (const auto& [box, field] : regions_) {
    if (box.contains(cfg.positions[i])) return field->evaluate(cfg, i);
  }
  return fallback_ ? fallback_->evaluate(cfg, i) : Vec2::Zero();
}

}  // namespace crowd
