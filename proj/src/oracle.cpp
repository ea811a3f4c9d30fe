#include "crowd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "crowd/errors.hpp"

namespace crowd {

ProjectionResult qp_oracle_project(const ConstraintSystem& sys, const Eigen::VectorXd& target) {
  sys.validate();
  const std::size_t m = sys.rows();
  if (m > kOracleMaxConstraints) {
    throw ValidationError("qp oracle: too many constraints (" + std::to_string(m) + " > " +
                          std::to_string(kOracleMaxConstraints) + ")");
  }
  if (static_cast<std::size_t>(target.size()) != sys.cols()) {
    throw ValidationError("qp oracle: target velocity has the wrong length");
  }

  const Eigen::MatrixXd b = sys.dense();
  const Eigen::VectorXd d = sys.gaps();
  const double scale = 1.0 + target.norm() + (m ? d.cwiseAbs().maxCoeff() / sys.h : 0.0);
  const double eps = 1e-10 * scale * std::max(1.0, sys.h);

  ProjectionResult best;
  best.status = SolveStatus::Diverged;  // overwritten on the first valid candidate
  double best_obj = std::numeric_limits<double>::infinity();

  std::vector<Eigen::Index> rows;
  const std::uint32_t subsets = 1u << m;
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    rows.clear();
    for (std::size_t k = 0; k < m; ++k) {
      if (mask & (1u << k)) rows.push_back(static_cast<Eigen::Index>(k));
    }
    const auto s = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    Eigen::VectorXd v = target;
    if (s > 0) {
      Eigen::MatrixXd bs(s, b.cols());
      Eigen::VectorXd ds(s);
      for (Eigen::Index r = 0; r < s; ++r) {
        bs.row(r) = b.row(rows[static_cast<std::size_t>(r)]);
        ds[r] = d[rows[static_cast<std::size_t>(r)]];
      }
      const Eigen::MatrixXd gram = bs * bs.transpose();
      const Eigen::VectorXd rhs = bs * target - ds;
      const Eigen::VectorXd ls = gram.completeOrthogonalDecomposition().solve(rhs);
      v = target - bs.transpose() * ls;
      if ((bs * v - ds).cwiseAbs().maxCoeff() > eps) continue;  // inconsistent equalities
      if (ls.minCoeff() < -eps) continue;
      for (Eigen::Index r = 0; r < s; ++r) lambda[rows[static_cast<std::size_t>(r)]] = ls[r];
    }
    if (m > 0 && (b * v - d).maxCoeff() > eps) continue;
    const double obj = (v - target).squaredNorm();
    if (obj < best_obj) {
      best_obj = obj;
      best.velocity = v;
      best.multipliers = lambda.cwiseMax(0.0);
      best.status = SolveStatus::Converged;
    }
  }
  if (!best.converged()) {
    throw SolverError("qp oracle: no KKT point found (infeasible system?)");
  }
  best.iterations = subsets;
  compute_residuals(sys, target, best);
  return best;
}

std::string KktReport::summary() const {
  std::ostringstream os;
  os << "stationarity=" << stationarity << (stationarity_ok ? "" : " (FAIL)")
     << " primal=" << primal << (primal_ok ? "" : " (FAIL)")
     << " dual=" << dual << (dual_ok ? "" : " (FAIL)")
     << " complementarity=" << complementarity << (complementarity_ok ? "" : " (FAIL)");
  return os.str();
}

KktReport kkt_check(const ConstraintSystem& sys, const ProjectionResult& res,
                    const Eigen::VectorXd& target, double tol) {
  KktReport rep;
  if (sys.rows() == 0) {
    rep.stationarity = (res.velocity - target).norm();
  } else {
    const Eigen::VectorXd slack = sys.apply(res.velocity) - sys.gaps();
    rep.stationarity = (res.velocity + sys.apply_transpose(res.multipliers) - target).norm();
    rep.primal = std::max(0.0, slack.maxCoeff());
    rep.dual = std::max(0.0, -res.multipliers.minCoeff());
    rep.complementarity = std::abs(res.multipliers.dot(slack));
  }
  rep.stationarity_ok = rep.stationarity <= tol;
  rep.primal_ok = rep.primal <= tol;
  rep.dual_ok = rep.dual <= tol;
  rep.complementarity_ok = rep.complementarity <= tol;
  return rep;
}

}  // namespace crowd
