#include "crowd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "crowd/errors.hpp"

namespace crowd {

namespace {

/// Re-solves the equality-constrained projection on the multiplier support so
/// the decomposition is exact up to rounding when the support is right.
bool polish(const ConstraintSystem& sys, const Eigen::VectorXd& target, ProjectionResult& res) {
  std::vector<Eigen::Index> support;
  const double cut = 1e-12 * (1.0 + res.multipliers.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < res.multipliers.size(); ++k) {
    if (res.multipliers[k] > cut) support.push_back(k);
  }
  if (support.empty()) return false;
  const Eigen::MatrixXd b = sys.dense();
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd bs(s, b.cols());
  for (Eigen::Index r = 0; r < s; ++r) bs.row(r) = b.row(support[static_cast<std::size_t>(r)]);
  const Eigen::VectorXd ls =
      (bs * bs.transpose()).completeOrthogonalDecomposition().solve(bs * target);
  if (ls.minCoeff() < 0.0) return false;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(res.multipliers.size());
  for (Eigen::Index r = 0; r < s; ++r) lambda[support[static_cast<std::size_t>(r)]] = ls[r];

  ProjectionResult cand = res;
  cand.multipliers = lambda;
  cand.velocity = target - sys.apply_transpose(lambda);
  compute_residuals(sys, target, cand);
  if (cand.primal_residual > res.primal_residual + 1e-14 ||
      cand.complementarity > res.complementarity + 1e-14) {
    return false;
  }
  res = std::move(cand);
  return true;
}

}  // namespace

ConeDecomposition cone_project_contact(const Configuration& cfg,
                                       std::span<const ContactConstraint> contacts,
                                       const Eigen::VectorXd& target) {
  if (static_cast<std::size_t>(target.size()) != 2 * cfg.size()) {
    throw ValidationError("cone projection: target velocity has the wrong length");
  }
  ConstraintSystem sys;
  sys.num_disks = cfg.size();
  sys.h = 1.0;
  sys.constraints.assign(contacts.begin(), contacts.end());
  for (ContactConstraint& c : sys.constraints) {
    if (std::abs(c.gap) > kContactGapTolerance) {
      throw ValidationError("cone projection: contact with nonzero gap " + std::to_string(c.gap));
    }
    c.gap = 0.0;
  }

  ConeDecomposition out;
  if (sys.rows() == 0) {
    out.tangential = target;
    out.normal = Eigen::VectorXd::Zero(target.size());
    out.multipliers.resize(0);
    return out;
  }
  UzawaOptions opt;
  opt.tol = 1e-13 * (1.0 + target.norm());
  opt.max_iter = 1000000;
  ProjectionResult res = uzawa_project(sys, target, opt);
  polish(sys, target, res);
  out.tangential = res.velocity;
  out.normal = target - res.velocity;
  out.multipliers = res.multipliers;
  return out;
}

Eigen::MatrixXd contact_gram(std::span<const ContactConstraint> contacts) {
  const auto m = static_cast<Eigen::Index>(contacts.size());
  // Sparse blocks: (disk slot, 2-vector) pairs.
  auto blocks = [](const ContactConstraint& c) {
    std::vector<std::pair<std::size_t, Vec2>> out;
    if (c.kind == ContactKind::DiskDisk) {
      out.emplace_back(c.i, -c.normal);
      out.emplace_back(c.j, c.normal);
    } else {
      out.emplace_back(c.i, c.scale * c.normal);
    }
    return out;
  };
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto ba = blocks(contacts[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = a; b < m; ++b) {
      const auto bb = blocks(contacts[static_cast<std::size_t>(b)]);
      double s = 0.0;
      for (const auto& [slot_a, va] : ba) {
        for (const auto& [slot_b, vb] : bb) {
          if (slot_a == slot_b) s += va.dot(vb);
        }
      }
      gram(a, b) = s;
      gram(b, a) = s;
    }
  }
  return gram;
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  std::vector<double> sorted(x.data(), x.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumulative += sorted[static_cast<std::size_t>(k)];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  return (x.array() - theta).cwiseMax(0.0).matrix();
}

namespace {

double quad(const Eigen::MatrixXd& c, const Eigen::VectorXd& l) { return l.dot(c * l); }

Eigen::VectorXd descend(const Eigen::MatrixXd& c, Eigen::VectorXd l, double lipschitz) {
  const double step = 1.0 / lipschitz;
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd next = project_to_simplex(l - step * 2.0 * (c * l));
    const double delta = (next - l).lpNorm<Eigen::Infinity>();
    l = std::move(next);
    if (delta < 1e-15) break;
  }
  return l;
}

/// Minimum over every face of the simplex (KKT system C_S l = nu 1, sum l = 1).
void enumerate_faces(const Eigen::MatrixXd& c, double& best, Eigen::VectorXd& arg) {
  const Eigen::Index m = c.rows();
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (mask & (1u << k)) idx.push_back(k);
    }
    const auto s = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
    for (Eigen::Index a = 0; a < s; ++a) {
      for (Eigen::Index b = 0; b < s; ++b) {
        kkt(a, b) = c(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
      }
      kkt(a, s) = -1.0;
      kkt(s, a) = 1.0;
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
    rhs[s] = 1.0;
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    if ((kkt * sol - rhs).norm() > 1e-9) continue;
    Eigen::VectorXd l = Eigen::VectorXd::Zero(m);
    bool ok = true;
    for (Eigen::Index a = 0; a < s; ++a) {
      if (sol[a] < -1e-14) ok = false;
      l[idx[static_cast<std::size_t>(a)]] = std::max(0.0, sol[a]);
    }
    if (!ok) continue;
    l /= l.sum();
    const double v = quad(c, l);
    if (v < best) {
      best = v;
      arg = l;
    }
  }
}

}  // namespace

ProxRegularity prox_regularity_diagnostic(std::span<const ContactConstraint> contacts,
                                          std::optional<double> radius) {
  if (contacts.empty()) {
    throw ValidationError("prox-regularity diagnostic: empty contact list");
  }
  const Eigen::MatrixXd c = contact_gram(contacts);
  const Eigen::Index m = c.rows();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  const double eta_min = eig.eigenvalues().minCoeff();
  const double eta_max = eig.eigenvalues().maxCoeff();

  ProxRegularity out;
  out.condition_number = (eta_min > 1e-12 * eta_max) ? eta_max / eta_min
                                                     : std::numeric_limits<double>::infinity();

  const double lipschitz = 2.0 * std::max(eta_max, 1e-300);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd arg;
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(m, 16); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e[k] = 1.0;
    starts.push_back(e);
  }
  for (const Eigen::VectorXd& s : starts) {
    Eigen::VectorXd l = descend(c, s, lipschitz);
    const double v = quad(c, l);
    if (v < best) {
      best = v;
      arg = l;
    }
  }
  if (m <= 3) enumerate_faces(c, best, arg);

  out.min_quadratic = std::max(best, 0.0);
  out.minimizer = arg;
  out.gamma = out.min_quadratic > 0.0 ? std::sqrt(2.0 / out.min_quadratic)
                                      : std::numeric_limits<double>::infinity();
  if (radius) out.eta = *radius * std::sqrt(2.0) / out.gamma;
  return out;
}

}  // namespace crowd
