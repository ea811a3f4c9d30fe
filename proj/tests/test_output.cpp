#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "crowd/dynamics.hpp"
#include "crowd/errors.hpp"
#include "crowd/oracle.hpp"
#include "crowd/output.hpp"
#include "crowd/velocity_field.hpp"

using namespace crowd;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "crowd_output_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::string> lines_of(const std::filesystem::path& path) {
  std::ifstream is(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

struct Written {
  RunResult result;
  std::filesystem::path trajectory;
  std::filesystem::path binary;
  std::filesystem::path pressure;
};

Written run_and_write(const std::string& tag, Configuration cfg,
                      std::shared_ptr<const VelocityField> field, double h, double horizon,
                      FloorPlan plan = {}) {
  Written w;
  w.trajectory = scratch(tag + ".csv");
  w.binary = scratch(tag + ".bin");
  w.pressure = scratch(tag + "_pressure.csv");
  StepParams p;
  p.h = h;
  Simulation sim(std::move(cfg), std::move(plan), std::move(field), p);
  TrajectoryWriter traj(w.trajectory.string(), w.binary.string());
  PressureWriter pres(w.pressure.string());
  RunOptions opt;
  opt.horizon = horizon;
  opt.keep_frames = true;
  opt.on_frame = [&](const TrajectoryFrame& f, bool sampled) {
    traj.write(f, sampled);
    pres.write(f, sampled);
  };
  w.result = sim.run(opt);
  traj.flush();
  pres.flush();
  return w;
}

FrameContact wall_contact(std::size_t i, Vec2 point, double lambda) {
  FrameContact c;
  c.kind = ContactKind::DiskWall;
  c.i = i;
  c.pj = point;
  c.lambda = lambda;
  return c;
}

FrameContact pair_contact(std::size_t i, std::size_t j, double lambda) {
  FrameContact c;
  c.i = i;
  c.j = j;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST_CASE("one disk, two steps") {
  const auto w = run_and_write("one", Configuration::make({{0, 0}}, 0.5),
                               std::make_shared<ConstantField>(Vec2(1, 0)), 0.1, 0.2);
  const auto lines = lines_of(w.trajectory);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "step,time,id,x,y,ux,uy,r,exited");
  CHECK(lines[1] == "0,0,0,0,0,1,0,0.5,0");
  CHECK(lines[2].rfind("1,0.10000000000000001,0,0.10000000000000001,0,1,0,0.5,0", 0) == 0);
  const auto rows = read_trajectory(w.trajectory.string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].position.x() == 0.1);
  CHECK(lines_of(w.pressure).size() == 1);
}

TEST_CASE("head-on pressure matches the oracle multiplier") {
  const double h = 0.1;
  const auto cfg = Configuration::make({{0, 0}, {1, 0}}, 0.5);
  const auto field = std::make_shared<PerDiskField>(std::map<std::size_t, Vec2>{{0, {1, 0}}, {1, {-1, 0}}});
  const auto w = run_and_write("headon", cfg, field, h, 3 * h);

  ConstraintSystem sys;
  sys.num_disks = 2;
  sys.h = h;
  sys.constraints = active_constraints(cfg, {}, 1e-9);
  const auto oracle = qp_oracle_project(sys, field->evaluate_all(cfg));
  CHECK(oracle.multipliers[0] == doctest::Approx(1.0 / h));

  const auto lines = lines_of(w.pressure);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "step,i,j,lambda,xi,yi,xj,yj");
  for (std::size_t k = 1; k < lines.size(); ++k) {
    std::stringstream row(lines[k]);
    std::vector<std::string> cells;
    for (std::string c; std::getline(row, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 8);
    CHECK(cells[1] == "0");
    CHECK(cells[2] == "1");
    CHECK(std::stod(cells[3]) > 0.0);
    CHECK(std::stod(cells[3]) == doctest::Approx(oracle.multipliers[0]).epsilon(1e-6));
  }
}

TEST_CASE("no contacts leaves only the pressure header") {
  const auto cfg = Configuration::make({{0, 0}, {5, 0}}, 0.5);
  const auto w = run_and_write("free", cfg, std::make_shared<ConstantField>(Vec2(0, 1)), 0.1, 0.5);
  CHECK(lines_of(w.pressure) == std::vector<std::string>{"step,i,j,lambda,xi,yi,xj,yj"});
}

TEST_CASE("binary and text trajectories agree, exits are recorded") {
  FloorPlan plan;
  plan.walls.push_back({{0, 2}, {4, 2}, {4, -2}, {0, -2}});
  plan.exits.push_back({{0, -2}, {0, 2}});
  const auto cfg = Configuration::make({{0.5, 0}, {1.6, 0}, {2.7, 0.3}}, 0.5);
  const auto w = run_and_write("exit", cfg, std::make_shared<ConstantField>(Vec2(-1, 0)), 0.05, 5.0,
                               plan);
  const auto text = read_trajectory(w.trajectory.string());
  const auto bin = read_trajectory_binary(w.binary.string());
  REQUIRE(text.size() == bin.size());
  for (std::size_t k = 0; k < text.size(); ++k) {
    CHECK(text[k].step == bin[k].step);
    CHECK(text[k].time == bin[k].time);
    CHECK(text[k].id == bin[k].id);
    CHECK(text[k].position == bin[k].position);
    CHECK(text[k].velocity == bin[k].velocity);
    CHECK(text[k].radius == bin[k].radius);
    CHECK(text[k].exited == bin[k].exited);
  }
  std::size_t exits = 0;
  for (const auto& r : text) exits += r.exited ? 1 : 0;
  CHECK(exits == 3);
  REQUIRE(w.result.metrics.evacuation_time.has_value());
  CHECK(w.result.metrics.remaining == 0);

  const auto rep = check_trajectory_feasibility(text, plan.segments(), 1e-9);
  CHECK(rep.ok);
  CHECK(rep.frames == w.result.metrics.steps);

  CHECK_THROWS_AS(read_trajectory(scratch("absent.csv").string()), IoError);
  std::ofstream(scratch("junk.bin")) << "NOTATRAJ";
  CHECK_THROWS_AS(read_trajectory_binary(scratch("junk.bin").string()), IoError);
}

TEST_CASE("feasibility validator flags overlapping frames") {
  std::vector<TrajectoryRow> rows(4);
  rows[0] = {0, 0.0, 0, {0, 0}, {0, 0}, 0.5, false};
  rows[1] = {0, 0.0, 1, {1, 0}, {0, 0}, 0.5, false};
  rows[2] = {1, 0.1, 0, {0, 0}, {0, 0}, 0.5, false};
  rows[3] = {1, 0.1, 1, {0.99, 0}, {0, 0}, 0.5, false};
  const auto rep = check_trajectory_feasibility(rows, {}, 1e-6);
  CHECK(!rep.ok);
  CHECK(rep.worst_step == 1);
  CHECK(rep.min_gap == doctest::Approx(-0.01));
  CHECK(rep.frames == 2);
  CHECK(check_trajectory_feasibility(rows, {}, 0.02).ok);
}

TEST_CASE("arch detection across a doorway") {
  const ExitSegment door{{0, -0.5}, {0, 0.5}};
  TrajectoryFrame f;
  f.contacts = {wall_contact(1, {0, -0.6}, 2.0), pair_contact(1, 2, 1.0), pair_contact(2, 3, 1.0),
                wall_contact(3, {0, 0.7}, 2.0)};
  CHECK(has_spanning_arch(f, door, 1.0));
  CHECK(!has_spanning_arch(f, door, 0.65));

  TrajectoryFrame broken = f;
  broken.contacts[2].lambda = 0.0;
  CHECK(!has_spanning_arch(broken, door, 1.0));

  TrajectoryFrame one_side = f;
  one_side.contacts[3].pj = {0, -0.8};
  CHECK(!has_spanning_arch(one_side, door, 1.0));
}

TEST_CASE("metrics text") {
  RunMetrics m;
  m.steps = 3;
  m.initial_count = 2;
  m.exit_counts = {2};
  m.evacuation_time = 0.25;
  const std::string s = format_metrics(m);
  CHECK(s.find("evacuation_time_s=0.25\n") != std::string::npos);
  CHECK(s.find("exit_0_count=2\n") != std::string::npos);
  m.evacuation_time.reset();
  CHECK(format_metrics(m).rfind("evacuation_time_s=none\n", 0) == 0);
}
