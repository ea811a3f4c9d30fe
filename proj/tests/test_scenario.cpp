#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "crowd/errors.hpp"
#include "crowd/scenario.hpp"

using namespace crowd;

namespace {

const std::string kSource = CROWD_SOURCE_DIR;

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool mentions(const ValidationReport& rep, const std::string& needle) {
  return rep.str().find(needle) != std::string::npos;
}

std::string error_text(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

const char* kSmallRoom = R"({
  "version": 1,
  "floor_plan": {
    "walls": [[[0, 1], [0, 2], [2, 2], [2, 0], [0, 0], [0, 0.5]]],
    "exits": [{"a": [0, 0.5], "b": [0, 1]}]
  },
  "population": {"count": 2, "radius_m": 0.2,
                 "placement": {"kind": "explicit", "positions": [[1, 1], [1.5, 1.5]]}},
  "field": {"kind": "constant", "velocity_m_per_s": [-1, 0]},
  "step": {"h_s": 0.05, "horizon_s": 1}
})";

}  // namespace

TEST_CASE("golden scenario loads with defaults filled in") {
  const Scenario s = load_scenario(kSource + "/scenarios/square_room.json");
  CHECK(s.name == "square room");
  CHECK(s.population.count == 20);
  CHECK(s.population.radius == 0.25);
  CHECK(s.population.placement.kind == PlacementSpec::Kind::Random);
  CHECK(s.population.placement.seed == 1);
  CHECK(s.field.kind == FieldSpec::Kind::Geodesic);
  CHECK(s.field.spacing == 0.1);
  CHECK(s.field.speed == 1.4);
  CHECK(s.step.h == 0.01);
  CHECK(s.horizon == 10.0);
  CHECK(s.step.tolerance_for(s.population.count) == doctest::Approx(1e-8 * std::sqrt(20.0)));
  CHECK(s.plan.exits.size() == 1);
  CHECK(s.plan.segments().size() == 5);
  CHECK(validate_scenario(s).ok());
  CHECK(scenario_to_json(s) == read_file(kSource + "/tests/data/square_room.canonical.json"));
}

TEST_CASE("save and load round trip") {
  for (const char* name : {"square_room.json", "evacuation_200.json"}) {
    const Scenario s = load_scenario(kSource + "/scenarios/" + name);
    const auto path = std::filesystem::temp_directory_path() / ("crowd_rt_" + std::string(name));
    save_scenario(s, path.string());
    const Scenario back = load_scenario(path.string());
    CHECK(equivalent(s, back));
    CHECK(scenario_to_json(back) == scenario_to_json(s));
  }
  Scenario a = parse_scenario(kSmallRoom);
  Scenario b = a;
  b.step.h = 0.1;
  CHECK(!equivalent(a, b));
}

TEST_CASE("random placement is feasible and seeded") {
  const Scenario s = load_scenario(kSource + "/scenarios/evacuation_200.json");
  const Configuration a = place_population(s);
  const Configuration b = place_population(s);
  REQUIRE(a.size() == 200);
  CHECK(a.positions == b.positions);
  CHECK(a.radii == b.radii);
  for (double r : a.radii) {
    CHECK(r >= 0.22);
    CHECK(r <= 0.28);
  }
  CHECK(min_gap(a, s.plan.segments()) > 0.0);

  Scenario other = s;
  other.population.placement.seed = 43;
  CHECK(place_population(other).positions != a.positions);
}

TEST_CASE("validation failures") {
  Scenario s = parse_scenario(kSmallRoom);
  CHECK(validate_scenario(s).ok());
  CHECK(place_population(s).size() == 2);

  Scenario dup = s;
  dup.population.placement.positions = {{1, 1}, {1, 1}};
  const auto rep = validate_scenario(dup);
  CHECK(!rep.ok());
  CHECK(mentions(rep, "overlap between disks 0 and 1"));
  CHECK_THROWS_AS(place_population(dup), ValidationError);

  Scenario wall = s;
  wall.population.placement.positions = {{0.1, 1.5}, {1.5, 1.5}};
  CHECK(mentions(validate_scenario(wall), "wall"));

  Scenario bad_h = s;
  bad_h.step.h = 0.0;
  CHECK(mentions(validate_scenario(bad_h), "step.h_s"));

  Scenario blocked = s;
  blocked.plan.obstacles.push_back({{-0.2, 0.3}, {0.3, 0.3}, {0.3, 1.2}, {-0.2, 1.2}});
  CHECK(mentions(validate_scenario(blocked), "exit inside obstacle"));

  Scenario range = s;
  range.population.radius_range = std::array<double, 2>{0.3, 0.2};
  CHECK(mentions(validate_scenario(range), "radius_range_m"));
}

TEST_CASE("density above hexagonal packing is rejected") {
  Scenario s = parse_scenario(kSmallRoom);
  s.population.placement = PlacementSpec{};
  s.population.placement.kind = PlacementSpec::Kind::Random;
  s.population.radius = 0.1;
  s.population.count = 200;
  CHECK(exceeds_packing_bound(s));
  CHECK(mentions(validate_scenario(s), "hexagonal packing"));

  // Below the packing bound but far above what rejection sampling reaches.
  s.population.count = 100;
  CHECK(!exceeds_packing_bound(s));
  try {
    place_population(s);
    FAIL("placement should fail");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("placement failed") != std::string::npos);
  }
}

TEST_CASE("parse errors name the position or the field") {
  const std::string syntax = error_text("{\n  \"version\": 1,\n  \"floor_plan\": [\n}");
  CHECK(syntax.find("line 4") != std::string::npos);
  CHECK(syntax.find("column") != std::string::npos);

  const std::string kind = error_text(R"({"version": 1, "floor_plan": {"walls": []},
    "population": {"count": 0}, "field": {"kind": "vortex"}})");
  CHECK(kind.find("field.kind") != std::string::npos);

  const std::string type = error_text(R"({"version": 1, "floor_plan": {"walls": []},
    "population": {"count": "many"}, "field": {"kind": "constant"}})");
  CHECK(type.find("population.count") != std::string::npos);

  CHECK_THROWS_AS(load_scenario(kSource + "/scenarios/missing.json"), IoError);
}

TEST_CASE("field bundle") {
  const Scenario s = load_scenario(kSource + "/scenarios/square_room.json");
  const FieldBundle b = build_field(s);
  REQUIRE(b.grid);
  CHECK(b.capture_radius == doctest::Approx(0.05));
  const auto cfg = place_population(s);
  const Eigen::VectorXd u = b.field->evaluate_all(cfg);
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    CHECK(u.segment<2>(static_cast<Eigen::Index>(2 * i)).norm() == doctest::Approx(1.4).epsilon(1e-6));
  }

  const Scenario small = parse_scenario(kSmallRoom);
  const FieldBundle c = build_field(small);
  CHECK(!c.grid);
  CHECK(c.field->evaluate(place_population(small), 0) == Vec2(-1, 0));
}
