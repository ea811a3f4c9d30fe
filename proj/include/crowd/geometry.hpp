#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace crowd {

using Vec2 = Eigen::Vector2d;

/// Positions and radii of N rigid disks. `ids` is a persistent identity that
/// survives removal of evacuated disks; warm starts and output rows key on it.
struct Configuration {
  std::vector<Vec2> positions;  // [m]
  std::vector<double> radii;    // [m]
  std::vector<std::size_t> ids;
  double time = 0.0;            // [s]

  std::size_t size() const noexcept { return positions.size(); }

  /// Builds a configuration with ids 0..N-1. Throws ValidationError on
  /// mismatched lengths or non-positive radii.
  static Configuration make(std::vector<Vec2> positions, std::vector<double> radii,
                            double time = 0.0);

  /// Uniform-radius convenience.
  static Configuration make(std::vector<Vec2> positions, double radius, double time = 0.0);

  /// Throws ValidationError if the invariants (sizes, radii > 0) are broken.
  void validate() const;

  /// Packs positions as (x0, y0, x1, y1, ...).
  Eigen::VectorXd flat_positions() const;

  void remove(std::size_t index);
};

struct WallSegment {
  Vec2 a;
  Vec2 b;
  int group = 0;  // polyline the segment belongs to
};

enum class ContactKind { DiskDisk, DiskWall };

/// One gap constraint D + h G.v >= 0.
///
/// Disk-disk rows carry blocks (-normal at `i`, +normal at `j`), so |G| = sqrt(2).
/// Disk-wall rows carry the single block `scale * normal` at `i`, where `normal`
/// points from the closest wall point toward the center; `j` holds the wall index.
struct ContactConstraint {
  ContactKind kind = ContactKind::DiskDisk;
  std::size_t i = 0;
  std::size_t j = 0;
  double gap = 0.0;        // [m]
  Vec2 normal{0.0, 0.0};   // unit vector
  Vec2 wall_point{0.0, 0.0};
  double scale = 1.0;      // disk-wall row scaling (1 by default)

  /// G . v for v packed as (x0, y0, x1, y1, ...).
  double dot(std::span<const double> v) const noexcept;

  /// out += alpha * G.
  void add_scaled(double alpha, std::span<double> out) const noexcept;

  double norm_sq() const noexcept;

  /// Dense gradient row of length 2 * num_disks.
  Eigen::VectorXd dense(std::size_t num_disks) const;
};

/// |q_i - q_j| - (r_i + r_j). Throws GeometryError on coincident centers
/// or out-of-range indices.
double gap_disk_disk(const Configuration& cfg, std::size_t i, std::size_t j);

/// Full disk-disk constraint with e_ij = (q_j - q_i) / |q_j - q_i|. Requires i < j.
ContactConstraint gradient_disk_disk(const Configuration& cfg, std::size_t i, std::size_t j);

/// Closest point on the segment [a, b] to p.
Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b);

/// Disk-wall constraint: gap = dist(q_i, segment) - r_i. Throws GeometryError
/// when the center lies on the segment.
ContactConstraint gap_and_gradient_disk_wall(const Configuration& cfg, std::size_t i,
                                             const WallSegment& wall, std::size_t wall_index = 0);

/// Every disk-disk and disk-wall constraint whose gap is <= cutoff, sorted by
/// (kind, i, j). Disk pairs are found with a uniform hash grid of cell size
/// 2 * max radius + cutoff; an infinite cutoff enumerates all pairs. Disk-wall rows
/// with the same normal and gap (a shared segment vertex) are kept once.
std::vector<ContactConstraint> active_constraints(const Configuration& cfg,
                                                  std::span<const WallSegment> walls,
                                                  double cutoff);

/// Smallest gap over disk pairs and disk-wall pairs. Only gaps <= cutoff are
/// inspected; returns +inf when none qualifies.
double min_gap(const Configuration& cfg, std::span<const WallSegment> walls,
               double cutoff = std::numeric_limits<double>::infinity());

}  // namespace crowd
