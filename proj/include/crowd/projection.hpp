#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "crowd/geometry.hpp"

namespace crowd {

/// The discrete feasible-velocity set {v : D + h G v >= 0}, stored as the
/// matrix-free map B v = -h (G_k . v)_k together with the gap vector D.
struct ConstraintSystem {
  std::size_t num_disks = 0;
  std::vector<ContactConstraint> constraints;
  double h = 1.0;  // [s]

  std::size_t rows() const noexcept { return constraints.size(); }
  std::size_t cols() const noexcept { return 2 * num_disks; }

  Eigen::VectorXd gaps() const;

  /// out = B v, length m.
  void apply(const Eigen::VectorXd& v, Eigen::VectorXd& out) const;
  /// out = B^T mu, length 2N.
  void apply_transpose(const Eigen::VectorXd& mu, Eigen::VectorXd& out) const;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& mu) const;

  Eigen::MatrixXd dense() const;

  /// Throws ValidationError on h <= 0, indices out of range or a size mismatch.
  void validate() const;
};

enum class SolveStatus { Converged, MaxIterations, Diverged };

const char* to_string(SolveStatus status) noexcept;

struct ProjectionResult {
  Eigen::VectorXd velocity;     // u [m/s]
  Eigen::VectorXd multipliers;  // lambda >= 0
  std::size_t iterations = 0;
  SolveStatus status = SolveStatus::Converged;
  double rho = 0.0;             // step actually used (0 for the oracle)
  double primal_residual = 0.0;   // max(0, max_k (B u - D)_k)
  double complementarity = 0.0;   // |lambda . (B u - D)|
  double stationarity = 0.0;      // |u + B^T lambda - U|

  bool converged() const noexcept { return status == SolveStatus::Converged; }
};

/// Recomputes the three residual fields of `res` from its velocity and multipliers.
void compute_residuals(const ConstraintSystem& sys, const Eigen::VectorXd& target,
                       ProjectionResult& res);

struct UzawaOptions {
  /// Fixed dual step. Empty selects rho = 1 / ||B||^2 estimated by power iteration.
  std::optional<double> rho;
  /// Stop when |v^{k+1} - v^k| <= tol [m/s] and max(B u - D) <= tol * h [m].
  double tol = 1e-8;
  std::size_t max_iter = 100000;
  int power_iterations = 50;
  /// Initial multipliers (warm start); must have one entry per constraint.
  std::optional<Eigen::VectorXd> initial_multipliers;
  /// An iterate change larger than this factor times the problem scale flags divergence.
  double divergence_factor = 1e8;
  /// Nesterov extrapolation of the multipliers with gradient-based restart. The
  /// fixed point and stopping rule are unchanged; the admissible rho window is not.
  bool accelerate = false;
  /// Periodically try an exact active-set solve seeded from the current support and
  /// return it once it satisfies every KKT condition at the stopping tolerance.
  bool finish = false;
  std::size_t finish_after = 100;  // iterations before the first attempt; doubles after
};

/// Power-iteration estimate of ||B||^2 = lambda_max(B^T B) from a fixed start vector.
double estimate_norm_sq(const ConstraintSystem& sys, int iterations = 50);

/// Active-set solve of the dual problem min_{lambda >= 0} |U - B^T lambda|^2 / 2 + D . lambda,
/// started from a linearly independent part of the support of `start`. Returns the result
/// only when it is primal feasible to `primal_tol` with complementarity <= 1e-9; empty when
/// a working-set Gram block is singular or the pass cap is hit.
std::optional<ProjectionResult> active_set_refine(const ConstraintSystem& sys,
                                                  const Eigen::VectorXd& target,
                                                  const Eigen::VectorXd& start, double primal_tol,
                                                  std::size_t max_passes = 0);

/// Projects `target` onto {v : B v <= D} by Uzawa iteration:
///   mu^0 given (0 by default), v^{k+1} = U - B^T mu^k,
///   mu^{k+1} = max(0, mu^k + rho (B v^{k+1} - D)).
/// The returned velocity is U - B^T lambda for the returned multipliers.
/// A non-converged or diverged solve is reported in `status`, not thrown.
/// Throws ValidationError for rho <= 0, tol <= 0 or a malformed system.
ProjectionResult uzawa_project(const ConstraintSystem& sys, const Eigen::VectorXd& target,
                               const UzawaOptions& options = {});

}  // namespace crowd
