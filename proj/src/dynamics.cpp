#include "crowd/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "crowd/errors.hpp"

namespace crowd {

void StepParams::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("step: h must be positive");
  if (tol < 0.0) throw ValidationError("step: tolerance must be >= 0");
  if (cutoff && *cutoff < 0.0) throw ValidationError("step: cutoff must be >= 0");
  if (max_halvings < 0) throw ValidationError("step: max_halvings must be >= 0");
  if (max_iter == 0) throw ValidationError("step: max_iter must be positive");
  if (rho && !(*rho > 0.0)) throw ValidationError("step: rho must be positive");
}

double StepParams::tolerance_for(std::size_t num_disks) const {
  if (tol > 0.0) return tol;
  return 1e-8 * std::sqrt(static_cast<double>(std::max<std::size_t>(num_disks, 1)));
}

Stepper::Stepper(std::vector<WallSegment> walls, StepParams params)
  : walls_(std::move(walls)), params_(std::move(params)) {
  params_.validate();
}

StepOutcome Stepper::step(const Configuration& cfg, const VelocityField& field, std::size_t index,
                          double max_h) {
  cfg.validate();
  const std::size_t n = cfg.size();

  const double initial_gap = min_gap(cfg, walls_, 0.0);
  if (initial_gap < -params_.overlap_tolerance) {
    std::ostringstream os;
    os << "step " << index << ": infeasible input configuration (min gap " << initial_gap << " m)";
    throw ValidationError(os.str());
  }

  const Eigen::VectorXd target = field.evaluate_all(cfg);
  double vmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vmax = std::max(vmax, target.segment<2>(static_cast<Eigen::Index>(2 * i)).norm());
  }
  const double tol = params_.tolerance_for(n);

  auto key_of = [&](const ContactConstraint& c) {
    return c.kind == ContactKind::DiskDisk ? Key{0, cfg.ids[c.i], cfg.ids[c.j]}
                                           : Key{1, cfg.ids[c.i], c.j};
  };

  double h = std::min(params_.h, max_h);
  std::string last_failure;
  for (int attempt = 0; attempt <= params_.max_halvings; ++attempt, h *= 0.5) {
    const double widen = std::ldexp(1.0, attempt);
    const double cutoff =
        (params_.cutoff ? *params_.cutoff : 2.0 * std::sqrt(2.0) * h * vmax) * widen;

    ConstraintSystem sys;
    sys.num_disks = n;
    sys.h = h;
    sys.constraints = active_constraints(cfg, walls_, cutoff);
    if (params_.scale_wall_rows) {
      for (ContactConstraint& c : sys.constraints) {
        if (c.kind == ContactKind::DiskWall) c.scale = std::sqrt(2.0);
      }
    }

    UzawaOptions opt;
    opt.tol = tol;
    opt.max_iter = params_.max_iter;
    opt.rho = params_.rho;
    opt.accelerate = params_.accelerate;
    opt.finish = params_.finish;
    if (params_.warm_start && !warm_.empty()) {
      // Stored as impulses lambda * h so that a halved retry starts at scale.
      Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.rows()));
      for (std::size_t k = 0; k < sys.rows(); ++k) {
        const auto it = warm_.find(key_of(sys.constraints[k]));
        if (it != warm_.end()) mu0[static_cast<Eigen::Index>(k)] = it->second / h;
      }
      opt.initial_multipliers = std::move(mu0);
    }

    ProjectionResult res = uzawa_project(sys, target, opt);
    if (!res.converged()) {
      std::ostringstream os;
      os << "projection " << to_string(res.status) << " after " << res.iterations
         << " iterations (h = " << h << ", m = " << sys.rows() << ")";
      last_failure = os.str();
      continue;
    }

    Configuration next = cfg;
    for (std::size_t i = 0; i < n; ++i) {
      next.positions[i] = cfg.positions[i] + h * res.velocity.segment<2>(static_cast<Eigen::Index>(2 * i));
    }
    next.time = cfg.time + h;

    const double feas = -10.0 * tol * h;
    const double gap_after = min_gap(next, walls_, 0.0);
    if (gap_after < feas) {
      std::ostringstream os;
      os << "gap " << gap_after << " m after step below " << feas << " m (h = " << h << ")";
      last_failure = os.str();
      continue;
    }

    StepOutcome out;
    TrajectoryFrame& f = out.frame;
    f.step = index;
    f.time = cfg.time;
    f.config = cfg;
    f.velocity = res.velocity;
    f.spontaneous = target;
    f.iterations = res.iterations;
    f.status = res.status;
    f.h_used = h;
    f.halvings = attempt;
    f.next_min_gap = gap_after;
    f.contacts.reserve(sys.rows());
    if (params_.warm_start) warm_.clear();
    for (std::size_t k = 0; k < sys.rows(); ++k) {
      const ContactConstraint& c = sys.constraints[k];
      const double lambda = res.multipliers[static_cast<Eigen::Index>(k)];
      FrameContact fc;
      fc.kind = c.kind;
      fc.i = cfg.ids[c.i];
      fc.j = c.kind == ContactKind::DiskDisk ? cfg.ids[c.j] : c.j;
      fc.gap = c.gap;
      fc.lambda = lambda;
      fc.pi = cfg.positions[c.i];
      fc.pj = c.kind == ContactKind::DiskDisk ? cfg.positions[c.j] : c.wall_point;
      f.contacts.push_back(fc);
      if (params_.warm_start && lambda > 0.0) warm_[key_of(c)] = lambda * h;
    }
    out.next = std::move(next);
    return out;
  }
  std::ostringstream os;
  os << "step " << index << ": no admissible step after " << params_.max_halvings
     << " halvings: " << last_failure;
  throw SolverError(os.str());
}

StepOutcome step(const Configuration& cfg, const VelocityField& field, const StepParams& params,
                 std::span<const WallSegment> walls) {
  StepParams cold = params;
  cold.warm_start = false;
  Stepper stepper(std::vector<WallSegment>(walls.begin(), walls.end()), cold);
  return stepper.step(cfg, field);
}

Simulation::Simulation(Configuration initial, FloorPlan plan,
                       std::shared_ptr<const VelocityField> field, StepParams params,
                       double capture_radius)
  : initial_(std::move(initial)),
    plan_(std::move(plan)),
    field_(std::move(field)),
    params_(std::move(params)),
    capture_radius_(capture_radius) {
  initial_.validate();
  params_.validate();
}

RunResult Simulation::run(const RunOptions& options) {
  if (options.stride == 0) throw ValidationError("run: stride must be positive");
  Stepper stepper(plan_.segments(), params_);

  RunResult result;
  RunMetrics& m = result.metrics;
  m.initial_count = initial_.size();
  m.exit_counts.assign(plan_.exits.size(), 0);
  m.min_gap = min_gap(initial_, stepper.walls(), 0.0);

  Configuration cfg = initial_;
  const double t_end = options.horizon;
  double iterations_total = 0.0;

  auto emit = [&](const TrajectoryFrame& f) {
    const bool sampled = f.step % options.stride == 0;
    for (const FrameContact& c : f.contacts) m.max_lambda = std::max(m.max_lambda, c.lambda);
    if (options.on_frame) options.on_frame(f, sampled);
    if (options.keep_frames && sampled) result.frames.push_back(f);
  };

  const double eps_time = 1e-12 * std::max(1.0, std::abs(t_end));
  if (!(cfg.time < t_end - eps_time)) {
    // Degenerate horizon: report the initial state and the velocity it would take.
    StepOutcome out = stepper.step(cfg, *field_, 0);
    out.frame.applied = false;
    out.frame.h_used = 0.0;
    emit(out.frame);
    m.final_time = cfg.time;
    m.remaining = cfg.size();
    result.final_config = cfg;
    return result;
  }

  std::size_t n = 0;
  while (cfg.time < t_end - eps_time && cfg.size() > 0) {
    StepOutcome out = stepper.step(cfg, *field_, n, t_end - cfg.time);
    Configuration& next = out.next;

    // Exit crossings, scanned backwards to erase in place.
    for (std::size_t k = next.size(); k-- > 0;) {
      for (std::size_t e = 0; e < plan_.exits.size(); ++e) {
        const ExitSegment& ex = plan_.exits[e];
        const bool crossed = path_crosses_segment(cfg.positions[k], next.positions[k], ex.a, ex.b);
        const bool captured =
            capture_radius_ > 0.0 && distance_to_segment(next.positions[k], ex.a, ex.b) <= capture_radius_;
        if (crossed || captured) {
          out.frame.exited.push_back({next.ids[k], e, next.positions[k], next.time});
          ++m.exit_counts[e];
          next.remove(k);
          break;
        }
      }
    }
    std::reverse(out.frame.exited.begin(), out.frame.exited.end());

    iterations_total += static_cast<double>(out.frame.iterations);
    m.min_gap = std::min(m.min_gap, out.frame.next_min_gap);
    emit(out.frame);
    cfg = std::move(next);
    ++n;
    if (cfg.size() == 0 && m.initial_count > 0 && !plan_.exits.empty()) {
      m.evacuation_time = cfg.time;
    }
  }
  m.steps = n;
  m.final_time = cfg.time;
  m.remaining = cfg.size();
  m.mean_iterations = n ? iterations_total / static_cast<double>(n) : 0.0;
  result.final_config = std::move(cfg);
  return result;
}

}  // namespace crowd
