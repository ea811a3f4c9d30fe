#include "crowd/projection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "crowd/errors.hpp"

namespace crowd {

namespace {

std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::span<double> view(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

Eigen::VectorXd ConstraintSystem::gaps() const {
  Eigen::VectorXd d(static_cast<Eigen::Index>(rows()));
  for (std::size_t k = 0; k < rows(); ++k) d[static_cast<Eigen::Index>(k)] = constraints[k].gap;
  return d;
}

void ConstraintSystem::apply(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  out.resize(static_cast<Eigen::Index>(rows()));
  const auto vs = view(v);
  for (std::size_t k = 0; k < rows(); ++k) {
    out[static_cast<Eigen::Index>(k)] = -h * constraints[k].dot(vs);
  }
}

void ConstraintSystem::apply_transpose(const Eigen::VectorXd& mu, Eigen::VectorXd& out) const {
  out.setZero(static_cast<Eigen::Index>(cols()));
  auto os = view(out);
  // Fixed row order keeps the reduction bitwise reproducible.
  for (std::size_t k = 0; k < rows(); ++k) {
    const double m = mu[static_cast<Eigen::Index>(k)];
    if (m != 0.0) constraints[k].add_scaled(-h * m, os);
  }
}

Eigen::VectorXd ConstraintSystem::apply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out;
  apply(v, out);
  return out;
}

Eigen::VectorXd ConstraintSystem::apply_transpose(const Eigen::VectorXd& mu) const {
  Eigen::VectorXd out;
  apply_transpose(mu, out);
  return out;
}

Eigen::MatrixXd ConstraintSystem::dense() const {
  Eigen::MatrixXd b(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  for (std::size_t k = 0; k < rows(); ++k) {
    b.row(static_cast<Eigen::Index>(k)) = -h * constraints[k].dense(num_disks).transpose();
  }
  return b;
}

void ConstraintSystem::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ValidationError("constraint system: h must be positive");
  }
  for (std::size_t k = 0; k < rows(); ++k) {
    const ContactConstraint& c = constraints[k];
    const bool bad = c.i >= num_disks || (c.kind == ContactKind::DiskDisk && c.j >= num_disks);
    if (bad) {
      throw ValidationError("constraint system: row " + std::to_string(k) +
                            " references a disk outside 0.." + std::to_string(num_disks));
    }
  }
}

const char* to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max-iterations-exceeded";
    case SolveStatus::Diverged: return "diverged";
  }
  return "unknown";
}

void compute_residuals(const ConstraintSystem& sys, const Eigen::VectorXd& target,
                       ProjectionResult& res) {
  if (sys.rows() == 0) {
    res.primal_residual = 0.0;
    res.complementarity = 0.0;
    res.stationarity = (res.velocity - target).norm();
    return;
  }
  const Eigen::VectorXd slack = sys.apply(res.velocity) - sys.gaps();
  res.primal_residual = std::max(0.0, slack.maxCoeff());
  res.complementarity = std::abs(res.multipliers.dot(slack));
  res.stationarity = (res.velocity + sys.apply_transpose(res.multipliers) - target).norm();
}

double estimate_norm_sq(const ConstraintSystem& sys, int iterations) {
  if (sys.rows() == 0) return 0.0;
  // Deterministic, generic start vector (splitmix64 stream).
  Eigen::VectorXd x(static_cast<Eigen::Index>(sys.cols()));
  std::uint64_t state = 0x9E3779B97F4A7C15ULL;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    x[k] = 0.5 + static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  x.normalize();
  Eigen::VectorXd bx;
  Eigen::VectorXd y;
  double estimate = 0.0;
  for (int it = 0; it < std::max(iterations, 1); ++it) {
    sys.apply(x, bx);
    sys.apply_transpose(bx, y);
    estimate = x.dot(y);
    const double n = y.norm();
    if (n == 0.0) break;
    x = y / n;
  }
  return estimate;
}

namespace {

ProjectionResult uzawa_run(const ConstraintSystem& sys, const Eigen::VectorXd& target,
                           const UzawaOptions& options, double rho) {
  const auto m = static_cast<Eigen::Index>(sys.rows());
  const Eigen::VectorXd gaps = sys.gaps();

  ProjectionResult res;
  res.rho = rho;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  if (options.initial_multipliers) {
    if (options.initial_multipliers->size() != m) {
      throw ValidationError("uzawa: warm-start multipliers have the wrong length");
    }
    mu = options.initial_multipliers->cwiseMax(0.0);
  }

  const double primal_tol = options.tol * sys.h;
  const double scale = 1.0 + target.norm() + gaps.cwiseAbs().maxCoeff() / sys.h;
  const double blowup = options.divergence_factor * scale;

  Eigen::VectorXd v;
  sys.apply_transpose(mu, v);
  v = target - v;
  Eigen::VectorXd slack;
  Eigen::VectorXd btmu;
  double change = std::numeric_limits<double>::infinity();
  Eigen::VectorXd y = mu;
  double t = 1.0;

  res.status = SolveStatus::MaxIterations;
  std::size_t k = 0;
  for (; k <= options.max_iter; ++k) {
    sys.apply(v, slack);
    slack -= gaps;
    if (change <= options.tol && slack.maxCoeff() <= primal_tol) {
      res.status = SolveStatus::Converged;
      break;
    }
    if (k == options.max_iter) break;
    if (!options.accelerate) {
      mu = (mu + rho * slack).cwiseMax(0.0);
    } else {
      if (t > 1.0) {
        sys.apply_transpose(y, btmu);
        sys.apply(target - btmu, slack);
        slack -= gaps;
      }
      Eigen::VectorXd next_mu = (y + rho * slack).cwiseMax(0.0);
      if ((next_mu - mu).dot(slack) < 0.0) {
        t = 1.0;
        y = next_mu;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next_mu + ((t - 1.0) / t_next) * (next_mu - mu);
        t = t_next;
      }
      mu = std::move(next_mu);
    }
    sys.apply_transpose(mu, btmu);
    Eigen::VectorXd next = target - btmu;
    change = (next - v).norm();
    v = std::move(next);
    if (!std::isfinite(change) || change > blowup) {
      ++k;
      res.status = SolveStatus::Diverged;
      break;
    }
  }
  res.iterations = k;
  res.velocity = std::move(v);
  res.multipliers = std::move(mu);
  compute_residuals(sys, target, res);
  return res;
}

struct RowEntries {
  std::array<Eigen::Index, 4> col{};
  std::array<double, 4> val{};
  int count = 0;
};

std::vector<RowEntries> row_entries(const ConstraintSystem& sys) {
  std::vector<double> scratch(sys.cols(), 0.0);
  std::vector<RowEntries> rows(sys.rows());
  for (std::size_t k = 0; k < sys.rows(); ++k) {
    const ContactConstraint& c = sys.constraints[k];
    c.add_scaled(-sys.h, scratch);
    RowEntries& r = rows[k];
    const auto take = [&](std::size_t disk) {
      for (std::size_t d = 0; d < 2; ++d) {
        const std::size_t col = 2 * disk + d;
        r.col[static_cast<std::size_t>(r.count)] = static_cast<Eigen::Index>(col);
        r.val[static_cast<std::size_t>(r.count)] = scratch[col];
        scratch[col] = 0.0;
        ++r.count;
      }
    };
    take(c.i);
    if (c.kind == ContactKind::DiskDisk) take(c.j);
  }
  return rows;
}

using Sparse = Eigen::SparseMatrix<double>;

Sparse stacked_rows(const std::vector<RowEntries>& entries, const std::vector<Eigen::Index>& idx,
                    Eigen::Index cols) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(idx.size() * 4);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const RowEntries& r = entries[static_cast<std::size_t>(idx[a])];
    for (std::size_t e = 0; e < static_cast<std::size_t>(r.count); ++e) {
      trip.emplace_back(static_cast<Eigen::Index>(a), r.col[e], r.val[e]);
    }
  }
  Sparse out(static_cast<Eigen::Index>(idx.size()), cols);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// Factored Gram block of the rows currently free in the active-set solve.
class WorkingSet {
 public:
  WorkingSet(const std::vector<RowEntries>& entries, Eigen::Index cols)
      : entries_(entries), cols_(cols) {}

  bool factor(const std::vector<char>& free) {
    idx_.clear();
    for (std::size_t k = 0; k < free.size(); ++k) {
      if (free[k]) idx_.push_back(static_cast<Eigen::Index>(k));
    }
    if (idx_.empty()) return true;
    rows_ = stacked_rows(entries_, idx_, cols_);
    gram_ = rows_ * rows_.transpose();
    ldlt_.compute(gram_);
    if (ldlt_.info() != Eigen::Success) return false;
    const Eigen::VectorXd& d = ldlt_.vectorD();
    return d.minCoeff() > 0.0;
  }

  // z = 0 off the free set; C_FF z_F = b_F with one refinement step.
  bool solve(const Eigen::VectorXd& b, Eigen::VectorXd& z) const {
    z.setZero(b.size());
    if (idx_.empty()) return true;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(idx_.size()));
    for (std::size_t a = 0; a < idx_.size(); ++a) rhs[static_cast<Eigen::Index>(a)] = b[idx_[a]];
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    sol += ldlt_.solve(rhs - gram_ * sol);
    if (!sol.allFinite()) return false;
    for (std::size_t a = 0; a < idx_.size(); ++a) z[idx_[a]] = sol[static_cast<Eigen::Index>(a)];
    return true;
  }

  // Coefficients c (full length) with row k ~ sum_a c_a row_a over the free set, and the
  // squared residual relative to |row k|^2.
  double express(Eigen::Index k, Eigen::VectorXd& c, Eigen::Index m) const {
    c.setZero(m);
    if (idx_.empty()) return 1.0;
    Eigen::VectorXd bk = Eigen::VectorXd::Zero(cols_);
    const RowEntries& r = entries_[static_cast<std::size_t>(k)];
    for (std::size_t e = 0; e < static_cast<std::size_t>(r.count); ++e) bk[r.col[e]] = r.val[e];
    const Eigen::VectorXd g = rows_ * bk;
    const Eigen::VectorXd sol = ldlt_.solve(g);
    for (std::size_t a = 0; a < idx_.size(); ++a) c[idx_[a]] = sol[static_cast<Eigen::Index>(a)];
    const double nk = bk.squaredNorm();
    return (nk - g.dot(sol)) / nk;
  }

 private:
  const std::vector<RowEntries>& entries_;
  Eigen::Index cols_;
  std::vector<Eigen::Index> idx_;
  Sparse rows_;
  Sparse gram_;
  Eigen::SimplicialLDLT<Sparse> ldlt_;
};

double row_dot(const RowEntries& x, const RowEntries& y) {
  double sum = 0.0;
  for (std::size_t e = 0; e < static_cast<std::size_t>(x.count); ++e) {
    for (std::size_t f = 0; f < static_cast<std::size_t>(y.count); ++f) {
      if (x.col[e] == y.col[f]) sum += x.val[e] * y.val[f];
    }
  }
  return sum;
}

constexpr double kDependentRow = 1e-10;  // squared residual relative to |row|^2

// Greedy linearly independent subset of the rows with positive start multipliers,
// taken in order of decreasing multiplier.
std::vector<char> independent_support(const std::vector<RowEntries>& entries,
                                      const Eigen::VectorXd& start, Eigen::Index cols) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < start.size(); ++k) {
    if (start[k] > 0.0) idx.push_back(k);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return start[x] > start[y]; });
  std::vector<char> free(static_cast<std::size_t>(start.size()), 0);
  const auto cap = std::min<Eigen::Index>(static_cast<Eigen::Index>(idx.size()), cols);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(cap, cap);
  std::vector<std::vector<Eigen::Index>> by_column(static_cast<std::size_t>(cols));
  std::vector<Eigen::Index> chosen;
  Eigen::VectorXd g;
  for (Eigen::Index k : idx) {
    const auto count = static_cast<Eigen::Index>(chosen.size());
    if (count == cap) break;
    const RowEntries& r = entries[static_cast<std::size_t>(k)];
    g.setZero(count);
    for (std::size_t e = 0; e < static_cast<std::size_t>(r.count); e += 2) {
      for (Eigen::Index a : by_column[static_cast<std::size_t>(r.col[e])]) {
        if (g[a] == 0.0) g[a] = row_dot(r, entries[static_cast<std::size_t>(chosen[static_cast<std::size_t>(a)])]);
      }
    }
    const double nk = row_dot(r, r);
    Eigen::VectorXd y = l.topLeftCorner(count, count).triangularView<Eigen::Lower>().solve(g);
    const double d = nk - y.squaredNorm();
    if (!(d > kDependentRow * nk)) continue;
    l.row(count).head(count) = y.transpose();
    l(count, count) = std::sqrt(d);
    for (std::size_t e = 0; e < static_cast<std::size_t>(r.count); e += 2) {
      by_column[static_cast<std::size_t>(r.col[e])].push_back(count);
    }
    chosen.push_back(k);
    free[static_cast<std::size_t>(k)] = 1;
  }
  return free;
}

constexpr std::size_t kFinishPasses = 400;

}  // namespace

std::optional<ProjectionResult> active_set_refine(const ConstraintSystem& sys,
                                                  const Eigen::VectorXd& target,
                                                  const Eigen::VectorXd& start, double primal_tol,
                                                  std::size_t max_passes) {
  sys.validate();
  const auto m = static_cast<Eigen::Index>(sys.rows());
  if (start.size() != m || static_cast<std::size_t>(target.size()) != sys.cols()) {
    throw ValidationError("active-set refine: size mismatch");
  }
  if (max_passes == 0) max_passes = 2 * sys.rows() + 10;
  const auto cols = static_cast<Eigen::Index>(sys.cols());

  const Eigen::VectorXd b = sys.apply(target) - sys.gaps();
  const std::vector<RowEntries> entries = row_entries(sys);
  std::vector<char> free = independent_support(entries, start, cols);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (free[static_cast<std::size_t>(k)]) lambda[k] = start[k];
  }

  WorkingSet ws(entries, cols);
  Eigen::VectorXd z;
  Eigen::VectorXd coeff;
  Eigen::VectorXd velocity;
  Eigen::VectorXd slack;
  std::size_t passes = 0;
  for (;;) {
    // Minimize over the free set, stepping back to the boundary while any entry goes negative.
    for (;;) {
      if (++passes > max_passes) return std::nullopt;
      if (!ws.factor(free) || !ws.solve(b, z)) return std::nullopt;
      double alpha = 1.0;
      Eigen::Index block = -1;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (!free[static_cast<std::size_t>(k)] || z[k] > 0.0) continue;
        const double a = lambda[k] / (lambda[k] - z[k]);
        if (a < alpha) {
          alpha = a;
          block = k;
        }
      }
      if (block < 0) {
        lambda = z;
        break;
      }
      lambda += alpha * (z - lambda);
      for (Eigen::Index k = 0; k < m; ++k) {
        if (k == block || lambda[k] <= 0.0) {
          free[static_cast<std::size_t>(k)] = 0;
          lambda[k] = 0.0;
        }
      }
    }
    velocity = target - sys.apply_transpose(lambda);
    sys.apply(velocity, slack);
    slack -= sys.gaps();
    Eigen::Index worst = -1;
    double worst_slack = primal_tol;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (!free[static_cast<std::size_t>(k)] && slack[k] > worst_slack) {
        worst_slack = slack[k];
        worst = k;
      }
    }
    if (worst < 0) break;
    if (ws.express(worst, coeff, m) > kDependentRow) {
      free[static_cast<std::size_t>(worst)] = 1;
      continue;
    }
    // The violated row is a combination of free rows: move along the null direction
    // e_worst - coeff until a free multiplier reaches zero, then swap the rows.
    double t = std::numeric_limits<double>::infinity();
    Eigen::Index block = -1;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (free[static_cast<std::size_t>(k)] && coeff[k] > 0.0 && lambda[k] / coeff[k] < t) {
        t = lambda[k] / coeff[k];
        block = k;
      }
    }
    if (block < 0) return std::nullopt;
    lambda -= t * coeff;
    lambda[worst] = t;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (free[static_cast<std::size_t>(k)] && (k == block || lambda[k] <= 0.0)) {
        free[static_cast<std::size_t>(k)] = 0;
        lambda[k] = 0.0;
      }
    }
    free[static_cast<std::size_t>(worst)] = 1;
  }

  ProjectionResult res;
  res.velocity = std::move(velocity);
  res.multipliers = std::move(lambda);
  res.iterations = passes;
  res.status = SolveStatus::Converged;
  compute_residuals(sys, target, res);
  if (res.primal_residual > primal_tol || !(res.complementarity <= 1e-9)) return std::nullopt;
  return res;
}

namespace {

ProjectionResult solve_with_rho(const ConstraintSystem& sys, const Eigen::VectorXd& target,
                                const UzawaOptions& options, double rho) {
  if (!options.finish) return uzawa_run(sys, target, options, rho);
  UzawaOptions chunk = options;
  std::size_t used = 0;
  std::size_t budget = std::max<std::size_t>(options.finish_after, 1);
  for (;;) {
    chunk.max_iter = std::min(budget, options.max_iter - used);
    ProjectionResult res = uzawa_run(sys, target, chunk, rho);
    used += res.iterations;
    res.iterations = used;
    if (res.status == SolveStatus::Diverged) return res;
    if (auto fin = active_set_refine(sys, target, res.multipliers, options.tol * sys.h,
                                     kFinishPasses)) {
      fin->iterations = used;
      fin->rho = rho;
      return *fin;
    }
    if (res.converged() || used >= options.max_iter) return res;
    chunk.initial_multipliers = res.multipliers;
    budget *= 2;
  }
}

}  // namespace

ProjectionResult uzawa_project(const ConstraintSystem& sys, const Eigen::VectorXd& target,
                               const UzawaOptions& options) {
  sys.validate();
  if (static_cast<std::size_t>(target.size()) != sys.cols()) {
    throw ValidationError("uzawa: target velocity has length " + std::to_string(target.size()) +
                          ", expected " + std::to_string(sys.cols()));
  }
  if (!(options.tol > 0.0)) throw ValidationError("uzawa: tol must be positive");
  if (options.rho && (!(*options.rho > 0.0) || !std::isfinite(*options.rho))) {
    throw ValidationError("uzawa: invalid rho (must be finite and > 0)");
  }

  if (sys.rows() == 0) {
    ProjectionResult res;
    res.velocity = target;
    res.multipliers.resize(0);
    res.iterations = 1;
    res.status = SolveStatus::Converged;
    compute_residuals(sys, target, res);
    return res;
  }

  if (options.rho) return solve_with_rho(sys, target, options, *options.rho);

  double rho = 1.0 / estimate_norm_sq(sys, options.power_iterations);
  ProjectionResult res = solve_with_rho(sys, target, options, rho);
  // A poor power-iteration estimate can overshoot the admissible window; back off.
  for (int attempt = 0; attempt < 6 && res.status == SolveStatus::Diverged; ++attempt) {
    rho *= 0.5;
    res = solve_with_rho(sys, target, options, rho);
  }
  return res;
}

}  // namespace crowd
