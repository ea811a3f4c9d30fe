#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "crowd/geometry.hpp"
#include "crowd/projection.hpp"

namespace crowd::testing {

struct Instance {
  Configuration cfg;
  std::vector<WallSegment> walls;
  ConstraintSystem sys;
  Eigen::VectorXd target;
};

/// Feasible cluster of 2..6 disks packed near the origin (gaps >= 0, many small),
/// optionally a wall below; m is capped at `max_rows`, U is Gaussian.
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_rows = 10) {
  std::uniform_int_distribution<std::size_t> count(2, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  while (true) {
    Instance inst;
    const std::size_t n = count(rng);
    std::vector<Vec2> pos;
    std::vector<double> rad;
    while (pos.size() < n) {
      const double r = 0.3 + 0.2 * unit(rng);
      Vec2 p;
      if (pos.empty()) {
        p = Vec2::Zero();
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, pos.size() - 1);
        const std::size_t k = pick(rng);
        const double th = 2.0 * 3.141592653589793 * unit(rng);
        const double gap = unit(rng) < 0.5 ? 0.0 : 0.05 * unit(rng);
        p = pos[k] + (rad[k] + r + gap) * Vec2(std::cos(th), std::sin(th));
      }
      bool ok = true;
      for (std::size_t k = 0; k < pos.size(); ++k) {
        if ((pos[k] - p).norm() - rad[k] - r < -1e-12) ok = false;
      }
      if (ok) {
        pos.push_back(p);
        rad.push_back(r);
      }
    }
    inst.cfg = Configuration::make(pos, rad);
    if (unit(rng) < 0.3) {
      double ymin = 1e9;
      for (std::size_t k = 0; k < n; ++k) ymin = std::min(ymin, pos[k].y() - rad[k]);
      inst.walls.push_back({{-5.0, ymin - 0.02 * unit(rng)}, {5.0, ymin - 0.02 * unit(rng)}, 0});
    }
    inst.sys.num_disks = n;
    inst.sys.h = 0.05 + 0.2 * unit(rng);
    inst.sys.constraints = active_constraints(inst.cfg, inst.walls, 0.1);
    if (inst.sys.rows() == 0 || inst.sys.rows() > max_rows) continue;
    inst.target.resize(static_cast<Eigen::Index>(2 * n));
    for (Eigen::Index k = 0; k < inst.target.size(); ++k) inst.target(k) = 2.0 * gauss(rng);
    return inst;
  }
}

/// Two touching unit-spaced disks on the x axis (r = 0.5) with one constraint.
inline ConstraintSystem touching_pair(double h) {
  const auto cfg = Configuration::make({{0.0, 0.0}, {1.0, 0.0}}, 0.5);
  ConstraintSystem sys;
  sys.num_disks = 2;
  sys.h = h;
  sys.constraints = active_constraints(cfg, {}, 0.0);
  return sys;
}

inline Eigen::VectorXd packed(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

/// Three disks with both contacts active and an angle `phi` at the middle disk
/// (phi = pi is a straight chain). Radii 0.5, middle disk at the origin.
inline Configuration chain3(double phi) {
  const Vec2 a(-1.0, 0.0);
  const Vec2 c(-std::cos(phi), std::sin(phi));
  return Configuration::make({a, {0.0, 0.0}, c}, 0.5);
}

inline double ternary_min(const std::function<double(double)>& f, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double a = lo + (hi - lo) / 3.0;
    const double b = hi - (hi - lo) / 3.0;
    if (f(a) < f(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return f(0.5 * (lo + hi));
}

// Brute-force minimum of lambda^T C lambda over the simplex for m <= 3.
inline double simplex_min(const Eigen::MatrixXd& c) {
  const auto q = [&](const Eigen::VectorXd& l) { return l.dot(c * l); };
  if (c.rows() == 1) return c(0, 0);
  if (c.rows() == 2) {
    return ternary_min([&](double t) { return q(packed({t, 1.0 - t})); }, 0.0, 1.0);
  }
  return ternary_min(
      [&](double a) {
        return ternary_min([&](double b) { return q(packed({a, b, 1.0 - a - b})); }, 0.0,
                           1.0 - a);
      },
      0.0, 1.0);
}

}  // namespace crowd::testing
