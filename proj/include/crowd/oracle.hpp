#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "crowd/projection.hpp"

namespace crowd {

inline constexpr std::size_t kOracleMaxConstraints = 20;

/// Exact minimizer of |v - U|^2 over {B v <= D} by enumerating every active
/// set (2^m subsets), solving the equality-constrained least-squares problem
/// for each and keeping the best candidate passing the KKT sign checks.
/// Meant for verification on small systems; throws ValidationError when
/// m > kOracleMaxConstraints.
ProjectionResult qp_oracle_project(const ConstraintSystem& sys, const Eigen::VectorXd& target);

struct KktReport {
  double stationarity = 0.0;     // |u + B^T lambda - U|
  double primal = 0.0;           // max(0, max(B u - D))
  double dual = 0.0;             // max(0, -min(lambda))
  double complementarity = 0.0;  // |lambda . (B u - D)|
  bool stationarity_ok = false;
  bool primal_ok = false;
  bool dual_ok = false;
  bool complementarity_ok = false;

  bool passed() const noexcept {
    return stationarity_ok && primal_ok && dual_ok && complementarity_ok;
  }
  std::string summary() const;
};

KktReport kkt_check(const ConstraintSystem& sys, const ProjectionResult& res,
                    const Eigen::VectorXd& target, double tol);

}  // namespace crowd
