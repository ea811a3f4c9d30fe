#include "crowd/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowd/distance_grid.hpp"
#include "crowd/dynamics.hpp"
#include "crowd/oracle.hpp"
#include "crowd/output.hpp"
#include "crowd/scenario.hpp"

namespace crowd {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Validation: return kExitValidation;
    case ErrorKind::Geometry: return kExitSolver;
    case ErrorKind::Solver: return kExitSolver;
    case ErrorKind::Io: return kExitIo;
  }
  return kExitSolver;
}

namespace {

using Json = nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string resolve_output_dir(const std::string& flag, const Scenario& s) {
  if (!flag.empty()) return flag;
  if (!s.output.directory.empty()) return s.output.directory;
  if (const char* env = std::getenv("CROWD_OUTPUT_DIR"); env && *env) return env;
  return "out";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir);
  }
}

Vec2 json_vec2(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(what + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k + 1 < v.size(); k += 2) a.push_back(Json::array({v[k], v[k + 1]}));
  return a;
}

struct RunArgs {
  std::string scenario;
  std::optional<double> h;
  std::optional<double> horizon;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<double> tol;
  bool cold_start = false;
  bool plain = false;
  bool verbose = false;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  Scenario s = load_scenario(a.scenario);
  if (a.h) s.step.h = *a.h;
  if (a.horizon) s.horizon = *a.horizon;
  if (a.seed) s.population.placement.seed = *a.seed;
  if (a.tol) s.step.tol = *a.tol;
  if (a.cold_start) s.step.warm_start = false;
  if (a.plain) {
    s.step.accelerate = false;
    s.step.finish = false;
  }

  const ValidationReport rep = validate_scenario(s);
  if (!rep.ok()) {
    err << "invalid scenario:\n" << rep.str();
    return kExitValidation;
  }
  Configuration initial = place_population(s);
  FieldBundle bundle = build_field(s);

  const std::string dir = resolve_output_dir(a.out_dir, s);
  ensure_dir(dir);
  const std::filesystem::path base(dir);
  std::optional<std::string> bin;
  if (s.output.binary_trajectory) bin = (base / "trajectory.bin").string();
  TrajectoryWriter traj((base / "trajectory.csv").string(), bin);
  PressureWriter pressure((base / "pressure.csv").string());

  Simulation sim(std::move(initial), s.plan, bundle.field, s.step, bundle.capture_radius);
  RunOptions opt;
  opt.horizon = s.horizon;
  opt.stride = s.output.stride;
  opt.on_frame = [&](const TrajectoryFrame& f, bool sampled) {
    traj.write(f, sampled);
    pressure.write(f, sampled);
    if (a.verbose && f.step % 100 == 0) {
      err << "step " << f.step << " t=" << f.time << " n=" << f.config.size()
          << " iters=" << f.iterations << '\n';
    }
  };
  const RunResult res = sim.run(opt);
  traj.flush();
  pressure.flush();
  write_metrics(res.metrics, (base / "metrics.txt").string());
  out << format_metrics(res.metrics);
  return kExitOk;
}

int cmd_field(const std::string& path, const std::string& out_flag,
              std::optional<double> spacing, std::ostream& out) {
  Scenario s = load_scenario(path);
  if (spacing) s.field.spacing = *spacing;
  if (!(s.field.spacing > 0.0)) throw ValidationError("field spacing must be positive");
  if (s.plan.exits.empty()) throw ValidationError("floor plan has no exit");

  GridOptions opt;
  opt.spacing = s.field.spacing;
  double rmax = s.population.radius;
  for (double r : s.population.radii) rmax = std::max(rmax, r);
  opt.inflation = s.field.inflate_obstacles ? rmax : 0.0;
  const DistanceGrid grid = fmm_solve(s.plan, opt);

  const std::string dir = resolve_output_dir(out_flag, s);
  ensure_dir(dir);
  const std::filesystem::path base(dir);
  save_grid(grid, (base / "distance.grid").string());
  save_grid(grid, (base / "distance.txt").string());

  std::ofstream csv(base / "field.csv");
  if (!csv) throw IoError("cannot write field.csv");
  csv << "ix,iy,x,y,distance,ux,uy,obstacle,exit\n";
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const std::size_t k = grid.index(ix, iy);
      const Vec2 x = grid.node(ix, iy);
      Vec2 u(0.0, 0.0);
      if (grid.reached(k)) {
        try {
          u = geodesic_velocity(grid, s.field.speed, x);
        } catch (const GeometryError&) {
        }
      }
      csv << ix << ',' << iy << ',' << format_double(x.x()) << ',' << format_double(x.y()) << ','
          << format_double(grid.values[k]) << ',' << format_double(u.x()) << ','
          << format_double(u.y()) << ',' << int(grid.obstacle[k]) << ',' << int(grid.exit[k])
          << '\n';
    }
  }
  if (!csv) throw IoError("field.csv write failed");

  double dmax = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid.reached(k)) dmax = std::max(dmax, grid.values[k]);
  }
  out << "nodes=" << grid.nx << "x" << grid.ny << '\n'
      << "unreached=" << grid.unreached_count() << '\n'
      << "max_distance_m=" << format_double(dmax) << '\n'
      << "eikonal_residual=" << format_double(eikonal_residual(grid)) << '\n';
  return kExitOk;
}

int cmd_project(const std::string& path, std::optional<double> tol, std::optional<double> rho,
                std::optional<std::size_t> max_iter, bool cold, std::ostream& out) {
  SystemFile sf = parse_system(read_file(path));
  if (tol) sf.options.tol = *tol;
  if (rho) sf.options.rho = *rho;
  if (max_iter) sf.options.max_iter = *max_iter;
  if (cold) sf.options.initial_multipliers.reset();

  const ProjectionResult res = uzawa_project(sf.system, sf.target, sf.options);
  const KktReport kkt = kkt_check(sf.system, res, sf.target, 1e-6);

  Json j;
  j["status"] = to_string(res.status);
  j["iterations"] = res.iterations;
  j["rho"] = res.rho;
  j["velocity_m_per_s"] = vec_json(res.velocity);
  j["multipliers"] = std::vector<double>(res.multipliers.data(),
                                         res.multipliers.data() + res.multipliers.size());
  j["primal_residual_m"] = res.primal_residual;
  j["complementarity"] = res.complementarity;
  j["stationarity"] = res.stationarity;
  j["kkt"] = {{"stationarity", kkt.stationarity},
              {"primal", kkt.primal},
              {"dual", kkt.dual},
              {"complementarity", kkt.complementarity},
              {"passed", kkt.passed()}};
  out << j.dump(2) << '\n';
  return res.converged() ? kExitOk : kExitSolver;
}

int cmd_check(const std::string& path, std::ostream& out, std::ostream& err) {
  const Scenario s = load_scenario(path);
  const ValidationReport rep = validate_scenario(s);
  if (!rep.ok()) {
    err << rep.str();
    return kExitValidation;
  }
  const Configuration cfg = place_population(s);
  out << "ok: " << cfg.size() << " disks placed\n";
  return kExitOk;
}

}  // namespace

SystemFile parse_system(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("system file: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("system file: expected an object");
  SystemFile sf;
  try {
    sf.system.h = j.value("h_s", 1.0);
    if (j.contains("rho")) sf.options.rho = j.at("rho").get<double>();
    sf.options.tol = j.value("tol_m_per_s", sf.options.tol);
    sf.options.max_iter = j.value("max_iter", sf.options.max_iter);
    sf.options.accelerate = j.value("accelerate", sf.options.accelerate);
    sf.options.finish = j.value("finish", sf.options.finish);

    if (j.contains("positions")) {
      std::vector<Vec2> pos;
      for (const auto& p : j.at("positions")) pos.push_back(json_vec2(p, "positions"));
      Configuration cfg;
      if (j.contains("radii")) {
        cfg = Configuration::make(pos, j.at("radii").get<std::vector<double>>());
      } else {
        cfg = Configuration::make(pos, j.value("radius_m", 0.25));
      }
      std::vector<WallSegment> walls;
      if (j.contains("walls")) {
        for (const auto& w : j.at("walls")) {
          walls.push_back({json_vec2(w.at(0), "walls"), json_vec2(w.at(1), "walls"),
                           static_cast<int>(walls.size())});
        }
      }
      const double cutoff = j.value("cutoff_m", std::numeric_limits<double>::infinity());
      sf.system.num_disks = cfg.size();
      sf.system.constraints = active_constraints(cfg, walls, cutoff);
    } else {
      sf.system.num_disks = j.at("num_disks").get<std::size_t>();
      for (const auto& c : j.at("constraints")) {
        ContactConstraint cc;
        const std::string kind = c.value("kind", std::string("disk_disk"));
        if (kind == "disk_disk") {
          cc.kind = ContactKind::DiskDisk;
          cc.j = c.at("j").get<std::size_t>();
        } else if (kind == "disk_wall") {
          cc.kind = ContactKind::DiskWall;
          cc.j = c.value("wall", std::size_t{0});
          cc.scale = c.value("scale", 1.0);
        } else {
          throw ValidationError("system file: unknown constraint kind '" + kind + "'");
        }
        cc.i = c.at("i").get<std::size_t>();
        cc.gap = c.at("gap_m").get<double>();
        cc.normal = json_vec2(c.at("normal"), "normal");
        const double n = cc.normal.norm();
        if (!(n > 0.0)) throw ValidationError("system file: zero normal");
        cc.normal /= n;
        sf.system.constraints.push_back(cc);
      }
    }

    const auto& t = j.at("target_m_per_s");
    if (!t.is_array() || t.size() != sf.system.num_disks) {
      throw ValidationError("system file: target_m_per_s needs one [ux, uy] per disk");
    }
    sf.target.resize(static_cast<Eigen::Index>(2 * sf.system.num_disks));
    for (std::size_t k = 0; k < t.size(); ++k) {
      sf.target.segment<2>(static_cast<Eigen::Index>(2 * k)) = json_vec2(t[k], "target_m_per_s");
    }
    if (j.contains("initial_multipliers")) {
      const auto mu = j.at("initial_multipliers").get<std::vector<double>>();
      sf.options.initial_multipliers =
          Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("system file: ") + e.what());
  }
  sf.system.validate();
  return sf;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"crowd: hard-disk crowd motion simulator", "crowd"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "simulate a scenario and write trajectory, pressure and metrics");
  run_cmd->add_option("scenario", run.scenario, "scenario JSON file")->required();
  run_cmd->add_option("--dt,--time-step", run.h, "time step h [s]");
  run_cmd->add_option("--T,--horizon", run.horizon, "horizon T [s]");
  run_cmd->add_option("--seed", run.seed, "placement seed");
  run_cmd->add_option("--out", run.out_dir, "output directory");
  run_cmd->add_option("--tol", run.tol, "projection tolerance [m/s]");
  run_cmd->add_flag("--cold-start", run.cold_start, "disable multiplier warm start");
  run_cmd->add_flag("--plain", run.plain, "plain multiplier iteration without finish");
  run_cmd->add_flag("-v,--verbose", run.verbose, "progress on stderr");

  std::string field_path;
  std::string field_out;
  std::optional<double> field_spacing;
  auto* field_cmd = app.add_subcommand("field", "solve the distance field and export the grid");
  field_cmd->add_option("scenario", field_path, "scenario JSON file")->required();
  field_cmd->add_option("--out", field_out, "output directory");
  field_cmd->add_option("--spacing", field_spacing, "grid spacing [m]");

  std::string sys_path;
  std::optional<double> p_tol;
  std::optional<double> p_rho;
  std::optional<std::size_t> p_iter;
  bool p_cold = false;
  auto* proj_cmd = app.add_subcommand("project", "project a velocity onto a feasible set");
  proj_cmd->add_option("system", sys_path, "system JSON file")->required();
  proj_cmd->add_option("--tol", p_tol, "tolerance [m/s]");
  proj_cmd->add_option("--rho", p_rho, "dual step");
  proj_cmd->add_option("--max-iter", p_iter, "iteration cap");
  proj_cmd->add_flag("--cold-start", p_cold, "ignore initial_multipliers");

  std::string check_path;
  auto* check_cmd = app.add_subcommand("check", "validate a scenario and its placement");
  check_cmd->add_option("scenario", check_path, "scenario JSON file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run_cmd) return cmd_run(run, out, err);
    if (*field_cmd) return cmd_field(field_path, field_out, field_spacing, out);
    if (*proj_cmd) return cmd_project(sys_path, p_tol, p_rho, p_iter, p_cold, out);
    if (*check_cmd) return cmd_check(check_path, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitValidation;
}

}  // namespace crowd
