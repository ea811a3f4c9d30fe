#include "crowd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "crowd/errors.hpp"

namespace crowd {

Configuration Configuration::make(std::vector<Vec2> positions, std::vector<double> radii,
                                  double time) {
  Configuration cfg;
  cfg.positions = std::move(positions);
  cfg.radii = std::move(radii);
  cfg.ids.resize(cfg.positions.size());
  for (std::size_t k = 0; k < cfg.ids.size(); ++k) cfg.ids[k] = k;
  cfg.time = time;
  cfg.validate();
  return cfg;
}

Configuration Configuration::make(std::vector<Vec2> positions, double radius, double time) {
  std::vector<double> radii(positions.size(), radius);
  return make(std::move(positions), std::move(radii), time);
}

void Configuration::validate() const {
  if (radii.size() != positions.size() || ids.size() != positions.size()) {
    throw ValidationError("configuration: positions, radii and ids differ in length");
  }
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0) || !std::isfinite(radii[k])) {
      throw ValidationError("configuration: radius of disk " + std::to_string(k) +
                            " must be positive");
    }
    if (!positions[k].allFinite()) {
      throw ValidationError("configuration: position of disk " + std::to_string(k) +
                            " is not finite");
    }
  }
}

Eigen::VectorXd Configuration::flat_positions() const {
  Eigen::VectorXd q(2 * size());
  for (std::size_t k = 0; k < size(); ++k) {
    q[2 * k] = positions[k].x();
    q[2 * k + 1] = positions[k].y();
  }
  return q;
}

void Configuration::remove(std::size_t index) {
  positions.erase(positions.begin() + static_cast<std::ptrdiff_t>(index));
  radii.erase(radii.begin() + static_cast<std::ptrdiff_t>(index));
  ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(index));
}

double ContactConstraint::dot(std::span<const double> v) const noexcept {
  if (kind == ContactKind::DiskDisk) {
    return normal.x() * (v[2 * j] - v[2 * i]) + normal.y() * (v[2 * j + 1] - v[2 * i + 1]);
  }
  return scale * (normal.x() * v[2 * i] + normal.y() * v[2 * i + 1]);
}

void ContactConstraint::add_scaled(double alpha, std::span<double> out) const noexcept {
  if (kind == ContactKind::DiskDisk) {
    out[2 * i] -= alpha * normal.x();
    out[2 * i + 1] -= alpha * normal.y();
    out[2 * j] += alpha * normal.x();
    out[2 * j + 1] += alpha * normal.y();
  } else {
    out[2 * i] += alpha * scale * normal.x();
    out[2 * i + 1] += alpha * scale * normal.y();
  }
}

double ContactConstraint::norm_sq() const noexcept {
  const double n2 = normal.squaredNorm();
  return kind == ContactKind::DiskDisk ? 2.0 * n2 : scale * scale * n2;
}

Eigen::VectorXd ContactConstraint::dense(std::size_t num_disks) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * num_disks));
  add_scaled(1.0, std::span<double>(g.data(), static_cast<std::size_t>(g.size())));
  return g;
}

namespace {

void check_index(const Configuration& cfg, std::size_t i) {
  if (i >= cfg.size()) {
    throw GeometryError("disk index " + std::to_string(i) + " out of range (N = " +
                        std::to_string(cfg.size()) + ")");
  }
}

}  // namespace

double gap_disk_disk(const Configuration& cfg, std::size_t i, std::size_t j) {
  check_index(cfg, i);
  check_index(cfg, j);
  const double dist = (cfg.positions[j] - cfg.positions[i]).norm();
  if (dist == 0.0) {
    throw GeometryError("coincident centers for disks " + std::to_string(i) + " and " +
                        std::to_string(j));
  }
  return dist - (cfg.radii[i] + cfg.radii[j]);
}

ContactConstraint gradient_disk_disk(const Configuration& cfg, std::size_t i, std::size_t j) {
  check_index(cfg, i);
  check_index(cfg, j);
  if (!(i < j)) {
    throw GeometryError("disk pair must satisfy i < j");
  }
  const Vec2 d = cfg.positions[j] - cfg.positions[i];
  const double dist = d.norm();
  if (dist == 0.0) {
    throw GeometryError("coincident centers for disks " + std::to_string(i) + " and " +
                        std::to_string(j));
  }
  ContactConstraint c;
  c.kind = ContactKind::DiskDisk;
  c.i = i;
  c.j = j;
  c.gap = dist - (cfg.radii[i] + cfg.radii[j]);
  c.normal = d / dist;
  return c;
}

Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + t * ab;
}

ContactConstraint gap_and_gradient_disk_wall(const Configuration& cfg, std::size_t i,
                                             const WallSegment& wall, std::size_t wall_index) {
  check_index(cfg, i);
  if (wall.a == wall.b) {
    throw GeometryError("wall " + std::to_string(wall_index) + " has coincident endpoints");
  }
  const Vec2& p = cfg.positions[i];
  const Vec2 foot = closest_point_on_segment(p, wall.a, wall.b);
  const Vec2 d = p - foot;
  const double dist = d.norm();
  if (dist == 0.0) {
    throw GeometryError("center of disk " + std::to_string(i) + " lies on wall " +
                        std::to_string(wall_index));
  }
  ContactConstraint c;
  c.kind = ContactKind::DiskWall;
  c.i = i;
  c.j = wall_index;
  c.gap = dist - cfg.radii[i];
  c.normal = d / dist;
  c.wall_point = foot;
  return c;
}

namespace {

/// Disk pairs (i < j) within `cutoff` gap, found through a dense bucket grid.
void collect_pairs(const Configuration& cfg, double cutoff,
                   std::vector<ContactConstraint>& out) {
  const std::size_t n = cfg.size();
  if (n < 2) return;

  auto consider = [&](std::size_t a, std::size_t b) {
    const std::size_t i = std::min(a, b);
    const std::size_t j = std::max(a, b);
    const Vec2 d = cfg.positions[j] - cfg.positions[i];
    const double reach = cfg.radii[i] + cfg.radii[j] + cutoff;
    if (d.squaredNorm() > reach * reach) return;
    ContactConstraint c = gradient_disk_disk(cfg, i, j);
    if (c.gap <= cutoff) out.push_back(c);
  };

  if (!std::isfinite(cutoff)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        ContactConstraint c = gradient_disk_disk(cfg, i, j);
        out.push_back(c);
      }
    }
    return;
  }

  const double max_r = *std::max_element(cfg.radii.begin(), cfg.radii.end());
  Vec2 lo = cfg.positions[0];
  Vec2 hi = cfg.positions[0];
  for (const Vec2& p : cfg.positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double cell = 2.0 * max_r + cutoff;
  const Vec2 extent = hi - lo;
  // Keep the bucket array O(N); a larger cell only widens the candidate set.
  const double budget = 4.0 * static_cast<double>(n) + 64.0;
  while ((std::floor(extent.x() / cell) + 1.0) * (std::floor(extent.y() / cell) + 1.0) > budget) {
    cell *= 2.0;
  }
  const auto nx = static_cast<std::size_t>(std::floor(extent.x() / cell)) + 1;
  const auto ny = static_cast<std::size_t>(std::floor(extent.y() / cell)) + 1;

  auto cell_of = [&](const Vec2& p) {
    auto cx = static_cast<std::size_t>((p.x() - lo.x()) / cell);
    auto cy = static_cast<std::size_t>((p.y() - lo.y()) / cell);
    return std::pair{std::min(cx, nx - 1), std::min(cy, ny - 1)};
  };

  // Counting sort of disks into buckets.
  std::vector<std::size_t> start(nx * ny + 1, 0);
  std::vector<std::size_t> bucket_of(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [cx, cy] = cell_of(cfg.positions[k]);
    bucket_of[k] = cy * nx + cx;
    ++start[bucket_of[k] + 1];
  }
  for (std::size_t b = 0; b < nx * ny; ++b) start[b + 1] += start[b];
  std::vector<std::size_t> members(n);
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t k = 0; k < n; ++k) members[fill[bucket_of[k]]++] = k;
  }

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t cx = bucket_of[k] % nx;
    const std::size_t cy = bucket_of[k] / nx;
    for (std::size_t y = (cy == 0 ? 0 : cy - 1); y <= std::min(cy + 1, ny - 1); ++y) {
      for (std::size_t x = (cx == 0 ? 0 : cx - 1); x <= std::min(cx + 1, nx - 1); ++x) {
        const std::size_t b = y * nx + x;
        for (std::size_t s = start[b]; s < start[b + 1]; ++s) {
          const std::size_t other = members[s];
          if (other > k) consider(k, other);
        }
      }
    }
  }
}

void collect_walls(const Configuration& cfg, std::span<const WallSegment> walls, double cutoff,
                   std::vector<ContactConstraint>& out) {
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const Vec2& p = cfg.positions[i];
    const double reach = cfg.radii[i] + cutoff;
    for (std::size_t w = 0; w < walls.size(); ++w) {
      const WallSegment& wall = walls[w];
      if (std::isfinite(reach)) {
        const Vec2 lo = wall.a.cwiseMin(wall.b).array() - reach;
        const Vec2 hi = wall.a.cwiseMax(wall.b).array() + reach;
        if (p.x() < lo.x() || p.y() < lo.y() || p.x() > hi.x() || p.y() > hi.y()) continue;
      }
      ContactConstraint c = gap_and_gradient_disk_wall(cfg, i, wall, w);
      if (c.gap <= cutoff) out.push_back(c);
    }
  }
}

}  // namespace

std::vector<ContactConstraint> active_constraints(const Configuration& cfg,
                                                  std::span<const WallSegment> walls,
                                                  double cutoff) {
  if (cutoff < 0.0 || std::isnan(cutoff)) {
    throw ValidationError("active_constraints: cutoff must be >= 0");
  }
  std::vector<ContactConstraint> out;
  collect_pairs(cfg, cutoff, out);
  collect_walls(cfg, walls, cutoff, out);
  std::sort(out.begin(), out.end(), [](const ContactConstraint& a, const ContactConstraint& b) {
    return std::tuple(a.kind, a.i, a.j) < std::tuple(b.kind, b.i, b.j);
  });
  // Segments sharing a vertex give the same row when that vertex is the closest point.
  std::vector<ContactConstraint> unique;
  unique.reserve(out.size());
  for (const ContactConstraint& c : out) {
    bool duplicate = false;
    if (c.kind == ContactKind::DiskWall) {
      for (auto it = unique.rbegin(); it != unique.rend() && it->kind == c.kind && it->i == c.i;
           ++it) {
        if ((it->normal - c.normal).norm() <= 1e-12 && std::abs(it->gap - c.gap) <= 1e-12) {
          duplicate = true;
          break;
        }
      }
    }
    if (!duplicate) unique.push_back(c);
  }
  return unique;
}

double min_gap(const Configuration& cfg, std::span<const WallSegment> walls, double cutoff) {
  double best = std::numeric_limits<double>::infinity();
  for (const ContactConstraint& c : active_constraints(cfg, walls, cutoff)) {
    best = std::min(best, c.gap);
  }
  return best;
}

}  // namespace crowd
