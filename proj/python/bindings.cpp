#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crowd/cli.hpp"
#include "crowd/diagnostics.hpp"
#include "crowd/distance_grid.hpp"
#include "crowd/dynamics.hpp"
#include "crowd/errors.hpp"
#include "crowd/geometry.hpp"
#include "crowd/oracle.hpp"
#include "crowd/output.hpp"
#include "crowd/projection.hpp"
#include "crowd/scenario.hpp"

namespace py = pybind11;
using namespace crowd;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

std::vector<Vec2> to_points(const Points& p) {
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index k = 0; k < p.rows(); ++k) out.emplace_back(p(k, 0), p(k, 1));
  return out;
}

Points from_packed(const Eigen::VectorXd& v) {
  Points out(v.size() / 2, 2);
  for (Eigen::Index k = 0; k < out.rows(); ++k) {
    out(k, 0) = v(2 * k);
    out(k, 1) = v(2 * k + 1);
  }
  return out;
}

Eigen::VectorXd to_packed(const Points& p) {
  Eigen::VectorXd out(2 * p.rows());
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    out(2 * k) = p(k, 0);
    out(2 * k + 1) = p(k, 1);
  }
  return out;
}

Configuration make_config(const Points& positions, const std::vector<double>& radii) {
  const auto pts = to_points(positions);
  if (radii.size() == 1) return Configuration::make(pts, radii.front());
  return Configuration::make(pts, radii);
}

std::vector<WallSegment> make_walls(const std::vector<Points>& polylines) {
  FloorPlan plan;
  for (const auto& p : polylines) plan.walls.push_back(to_points(p));
  return plan.segments();
}

ConstraintSystem make_system(const Configuration& cfg, const std::vector<WallSegment>& walls,
                             double h, double cutoff) {
  cfg.validate();
  ConstraintSystem sys;
  sys.num_disks = cfg.size();
  sys.h = h;
  sys.constraints = active_constraints(cfg, walls, cutoff);
  return sys;
}

py::dict result_dict(const ConstraintSystem& sys, const ProjectionResult& res,
                     const Eigen::VectorXd& target) {
  py::dict d;
  d["velocity"] = from_packed(res.velocity);
  d["multipliers"] = res.multipliers;
  d["iterations"] = res.iterations;
  d["status"] = std::string(to_string(res.status));
  d["converged"] = res.converged();
  d["rho"] = res.rho;
  d["primal_residual"] = res.primal_residual;
  d["complementarity"] = res.complementarity;
  d["stationarity"] = res.stationarity;
  py::list rows;
  for (const auto& c : sys.constraints) {
    py::dict r;
    r["kind"] = c.kind == ContactKind::DiskDisk ? "disk_disk" : "disk_wall";
    r["i"] = c.i;
    r["j"] = c.j;
    r["gap"] = c.gap;
    rows.append(r);
  }
  d["constraints"] = rows;
  d["kkt_passed"] = kkt_check(sys, res, target, 1e-6).passed();
  return d;
}

py::dict metrics_dict(const RunMetrics& m) {
  py::dict d;
  d["steps"] = m.steps;
  d["final_time"] = m.final_time;
  d["initial_count"] = m.initial_count;
  d["remaining"] = m.remaining;
  d["evacuation_time"] = m.evacuation_time;
  d["exit_counts"] = m.exit_counts;
  d["max_lambda"] = m.max_lambda;
  d["mean_iterations"] = m.mean_iterations;
  d["min_gap"] = m.min_gap;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hard-disk crowd motion by projection onto the feasible velocity set";

  static py::exception<Error> base(m, "CrowdError");
  static py::exception<GeometryError> geometry(m, "GeometryError", base.ptr());
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  static py::exception<SolverError> solver(m, "SolverError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const GeometryError& e) {
      geometry(e.what());
    } catch (const ValidationError& e) {
      validation(e.what());
    } catch (const SolverError& e) {
      solver(e.what());
    } catch (const IoError& e) {
      io(e.what());
    } catch (const Error& e) {
      base(e.what());
    }
  });

  m.def(
      "project",
      [](const Points& positions, const std::vector<double>& radii, const Points& target, double h,
         const std::vector<Points>& walls, double cutoff, double tol, std::optional<double> rho,
         std::size_t max_iter, bool accelerate, bool finish) {
        const Configuration cfg = make_config(positions, radii);
        const ConstraintSystem sys = make_system(cfg, make_walls(walls), h, cutoff);
        UzawaOptions opt;
        opt.tol = tol;
        opt.rho = rho;
        opt.max_iter = max_iter;
        opt.accelerate = accelerate;
        opt.finish = finish;
        const Eigen::VectorXd u = to_packed(target);
        return result_dict(sys, uzawa_project(sys, u, opt), u);
      },
      py::arg("positions"), py::arg("radii"), py::arg("target"), py::arg("h"),
      py::arg("walls") = std::vector<Points>{}, py::arg("cutoff") = 0.0, py::arg("tol") = 1e-8,
      py::arg("rho") = std::nullopt, py::arg("max_iter") = 100000, py::arg("accelerate") = false,
      py::arg("finish") = false,
      "Uzawa projection of the spontaneous velocities onto {v : D + h G v >= 0}.");

  m.def(
      "oracle_project",
      [](const Points& positions, const std::vector<double>& radii, const Points& target, double h,
         const std::vector<Points>& walls, double cutoff) {
        const Configuration cfg = make_config(positions, radii);
        const ConstraintSystem sys = make_system(cfg, make_walls(walls), h, cutoff);
        const Eigen::VectorXd u = to_packed(target);
        return result_dict(sys, qp_oracle_project(sys, u), u);
      },
      py::arg("positions"), py::arg("radii"), py::arg("target"), py::arg("h"),
      py::arg("walls") = std::vector<Points>{}, py::arg("cutoff") = 0.0,
      "Exhaustive active-set solution of the same projection (small systems only).");

  m.def(
      "min_gap",
      [](const Points& positions, const std::vector<double>& radii, const std::vector<Points>& walls) {
        const Configuration cfg = make_config(positions, radii);
        return min_gap(cfg, make_walls(walls), std::numeric_limits<double>::infinity());
      },
      py::arg("positions"), py::arg("radii"), py::arg("walls") = std::vector<Points>{});

  m.def(
      "prox_regularity",
      [](const Points& positions, const std::vector<double>& radii, const std::vector<Points>& walls,
         double contact_tol) {
        const Configuration cfg = make_config(positions, radii);
        const auto contacts = active_constraints(cfg, make_walls(walls), contact_tol);
        const auto d = prox_regularity_diagnostic(contacts);
        py::dict out;
        out["min_quadratic"] = d.min_quadratic;
        out["minimizer"] = d.minimizer;
        out["gamma"] = d.gamma;
        out["condition_number"] = d.condition_number;
        out["contacts"] = contacts.size();
        return out;
      },
      py::arg("positions"), py::arg("radii"), py::arg("walls") = std::vector<Points>{},
      py::arg("contact_tol") = 1e-9);

  m.def(
      "distance_field",
      [](const std::string& scenario_path, std::optional<double> spacing) {
        Scenario s = load_scenario(scenario_path);
        GridOptions opt;
        opt.spacing = spacing.value_or(s.field.spacing);
        const DistanceGrid g = fmm_solve(s.plan, opt);
        Eigen::MatrixXd values(static_cast<Eigen::Index>(g.ny), static_cast<Eigen::Index>(g.nx));
        for (std::size_t iy = 0; iy < g.ny; ++iy) {
          for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const std::size_t k = g.index(ix, iy);
            values(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) =
                g.reached(k) ? g.values[k] : std::numeric_limits<double>::infinity();
          }
        }
        py::dict out;
        out["values"] = values;
        out["origin"] = std::vector<double>{g.origin.x(), g.origin.y()};
        out["spacing"] = g.spacing;
        out["residual"] = eikonal_residual(g);
        return out;
      },
      py::arg("scenario"), py::arg("spacing") = std::nullopt,
      "Fast Marching distance to the exits of a scenario's floor plan, indexed [iy, ix].");

  m.def(
      "canonical_scenario",
      [](const std::string& path) { return scenario_to_json(load_scenario(path)); },
      py::arg("path"), "Scenario file with every default filled in, as JSON text.");

  m.def(
      "run",
      [](const std::string& path, std::optional<double> horizon, std::optional<double> h,
         std::size_t stride) {
        Scenario s = load_scenario(path);
        if (h) s.step.h = *h;
        const Configuration initial = place_population(s);
        const FieldBundle bundle = build_field(s);
        Simulation sim(initial, s.plan, bundle.field, s.step, bundle.capture_radius);
        RunOptions opt;
        opt.horizon = horizon.value_or(s.horizon);
        opt.stride = stride;
        py::list times;
        py::list frames;
        opt.on_frame = [&](const TrajectoryFrame& f, bool sampled) {
          if (!sampled) return;
          Points p(static_cast<Eigen::Index>(f.config.size()), 2);
          for (std::size_t i = 0; i < f.config.size(); ++i) {
            p(static_cast<Eigen::Index>(i), 0) = f.config.positions[i].x();
            p(static_cast<Eigen::Index>(i), 1) = f.config.positions[i].y();
          }
          times.append(f.time);
          frames.append(p);
        };
        const RunResult res = sim.run(opt);
        py::dict out = metrics_dict(res.metrics);
        out["times"] = times;
        out["positions"] = frames;
        return out;
      },
      py::arg("scenario"), py::arg("horizon") = std::nullopt, py::arg("h") = std::nullopt,
      py::arg("stride") = 1,
      "Runs a scenario and returns the metrics with the sampled positions.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli_main(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (code, stdout, stderr).");
}
