#include "crowd/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "crowd/errors.hpp"

namespace crowd {

using Json = nlohmann::ordered_json;

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ValidationError("scenario field '" + path + "': " + what);
}

const Json* child(const Json& j, const char* key) {
  if (!j.is_object()) return nullptr;
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

double get_number(const Json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  return j.get<double>();
}

double number_or(const Json& j, const char* key, double fallback, const std::string& path) {
  const Json* c = child(j, key);
  return c ? get_number(*c, path + "." + key) : fallback;
}

std::uint64_t get_unsigned(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    field_error(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

bool bool_or(const Json& j, const char* key, bool fallback, const std::string& path) {
  const Json* c = child(j, key);
  if (!c) return fallback;
  if (!c->is_boolean()) field_error(path + "." + key, "expected true or false");
  return c->get<bool>();
}

Vec2 get_vec2(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    field_error(path, "expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2> get_points(const Json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected a list of [x, y] points");
  std::vector<Vec2> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    out.push_back(get_vec2(j[k], path + "[" + std::to_string(k) + "]"));
  }
  return out;
}

Box get_box(const Json& j, const std::string& path) {
  const Json* lo = child(j, "lo");
  const Json* hi = child(j, "hi");
  if (!lo || !hi) field_error(path, "expected {\"lo\": [x, y], \"hi\": [x, y]}");
  Box b{get_vec2(*lo, path + ".lo"), get_vec2(*hi, path + ".hi")};
  if (b.lo.x() > b.hi.x() || b.lo.y() > b.hi.y()) field_error(path, "lo must not exceed hi");
  return b;
}

Json vec2_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

Json points_json(const std::vector<Vec2>& pts) {
  Json a = Json::array();
  for (const Vec2& p : pts) a.push_back(vec2_json(p));
  return a;
}

Json box_json(const Box& b) {
  Json j = Json::object();
  j["lo"] = vec2_json(b.lo);
  j["hi"] = vec2_json(b.hi);
  return j;
}

const std::map<std::string, FieldSpec::Kind>& field_kinds() {
  static const std::map<std::string, FieldSpec::Kind> kinds{
      {"geodesic", FieldSpec::Kind::Geodesic},   {"constant", FieldSpec::Kind::Constant},
      {"point_sink", FieldSpec::Kind::PointSink}, {"corridor_1d", FieldSpec::Kind::Corridor1d},
      {"affine", FieldSpec::Kind::Affine},       {"per_disk", FieldSpec::Kind::PerDisk},
      {"regions", FieldSpec::Kind::Regions}};
  return kinds;
}

std::string field_kind_name(FieldSpec::Kind kind) {
  for (const auto& [name, k] : field_kinds()) {
    if (k == kind) return name;
  }
  return "unknown";
}

FieldSpec parse_field(const Json& j, const std::string& path) {
  FieldSpec f;
  if (!j.is_object()) field_error(path, "expected an object");
  const Json* kind = child(j, "kind");
  if (!kind || !kind->is_string()) field_error(path + ".kind", "expected a string");
  const auto it = field_kinds().find(kind->get<std::string>());
  if (it == field_kinds().end()) field_error(path + ".kind", "unknown field kind");
  f.kind = it->second;
  f.spacing = number_or(j, "spacing_m", f.spacing, path);
  f.speed = number_or(j, "speed_m_per_s", f.speed, path);
  f.inflate_obstacles = bool_or(j, "inflate_obstacles", f.inflate_obstacles, path);
  switch (f.kind) {
    case FieldSpec::Kind::Constant:
      if (const Json* v = child(j, "velocity_m_per_s")) f.vector = get_vec2(*v, path + ".velocity_m_per_s");
      break;
    case FieldSpec::Kind::PointSink:
      if (const Json* v = child(j, "target_m")) f.vector = get_vec2(*v, path + ".target_m");
      break;
    case FieldSpec::Kind::Affine: {
      if (const Json* v = child(j, "offset_m_per_s")) f.vector = get_vec2(*v, path + ".offset_m_per_s");
      if (const Json* m = child(j, "matrix_per_s")) {
        if (!m->is_array() || m->size() != 2) field_error(path + ".matrix_per_s", "expected [[a, b], [c, d]]");
        const Vec2 r0 = get_vec2((*m)[0], path + ".matrix_per_s[0]");
        const Vec2 r1 = get_vec2((*m)[1], path + ".matrix_per_s[1]");
        f.matrix << r0.x(), r0.y(), r1.x(), r1.y();
      }
      break;
    }
    case FieldSpec::Kind::PerDisk:
      if (const Json* v = child(j, "velocities_m_per_s")) f.per_disk = get_points(*v, path + ".velocities_m_per_s");
      if (const Json* v = child(j, "fallback_m_per_s")) f.fallback = get_vec2(*v, path + ".fallback_m_per_s");
      break;
    case FieldSpec::Kind::Regions: {
      const Json* regions = child(j, "regions");
      if (!regions || !regions->is_array()) field_error(path + ".regions", "expected a list");
      for (std::size_t k = 0; k < regions->size(); ++k) {
        const std::string rp = path + ".regions[" + std::to_string(k) + "]";
        const Json* sub = child((*regions)[k], "field");
        if (!sub) field_error(rp + ".field", "missing");
        f.regions.push_back({get_box((*regions)[k], rp), parse_field(*sub, rp + ".field")});
      }
      if (const Json* fb = child(j, "fallback")) {
        f.region_fallback = std::make_shared<FieldSpec>(parse_field(*fb, path + ".fallback"));
      }
      break;
    }
    case FieldSpec::Kind::Geodesic:
    case FieldSpec::Kind::Corridor1d:
      break;
  }
  return f;
}

Json field_json(const FieldSpec& f) {
  Json j = Json::object();
  j["kind"] = field_kind_name(f.kind);
  switch (f.kind) {
    case FieldSpec::Kind::Geodesic:
      j["spacing_m"] = f.spacing;
      j["speed_m_per_s"] = f.speed;
      j["inflate_obstacles"] = f.inflate_obstacles;
      break;
    case FieldSpec::Kind::Constant:
      j["velocity_m_per_s"] = vec2_json(f.vector);
      break;
    case FieldSpec::Kind::PointSink:
      j["target_m"] = vec2_json(f.vector);
      j["speed_m_per_s"] = f.speed;
      break;
    case FieldSpec::Kind::Corridor1d:
      j["speed_m_per_s"] = f.speed;
      break;
    case FieldSpec::Kind::Affine:
      j["offset_m_per_s"] = vec2_json(f.vector);
      j["matrix_per_s"] = Json::array({Json::array({f.matrix(0, 0), f.matrix(0, 1)}),
                                       Json::array({f.matrix(1, 0), f.matrix(1, 1)})});
      break;
    case FieldSpec::Kind::PerDisk:
      j["velocities_m_per_s"] = points_json(f.per_disk);
      j["fallback_m_per_s"] = vec2_json(f.fallback);
      break;
    case FieldSpec::Kind::Regions: {
      Json regions = Json::array();
      for (const auto& r : f.regions) {
        Json rj = box_json(r.box);
        rj["field"] = field_json(r.field);
        regions.push_back(rj);
      }
      j["regions"] = regions;
      if (f.region_fallback) j["fallback"] = field_json(*f.region_fallback);
      break;
    }
  }
  return j;
}

}  // namespace

namespace {

Scenario parse_document(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("scenario parse error: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("scenario: top level must be an object");

  Scenario s;
  const Json* version = child(root, "version");
  if (!version) field_error("version", "missing");
  s.version = static_cast<int>(get_unsigned(*version, "version"));
  if (s.version != kScenarioVersion) {
    field_error("version", "unsupported version " + std::to_string(s.version));
  }
  if (const Json* n = child(root, "name")) s.name = n->get<std::string>();
  if (const Json* units = child(root, "units")) {
    const Json* len = child(*units, "length");
    const Json* time = child(*units, "time");
    if ((len && *len != "m") || (time && *time != "s")) {
      field_error("units", "only meters and seconds are supported");
    }
  }

  if (const Json* plan = child(root, "floor_plan")) {
    if (const Json* walls = child(*plan, "walls")) {
      if (!walls->is_array()) field_error("floor_plan.walls", "expected a list of polylines");
      for (std::size_t k = 0; k < walls->size(); ++k) {
        s.plan.walls.push_back(get_points((*walls)[k], "floor_plan.walls[" + std::to_string(k) + "]"));
      }
    }
    if (const Json* obs = child(*plan, "obstacles")) {
      if (!obs->is_array()) field_error("floor_plan.obstacles", "expected a list of polygons");
      for (std::size_t k = 0; k < obs->size(); ++k) {
        s.plan.obstacles.push_back(get_points((*obs)[k], "floor_plan.obstacles[" + std::to_string(k) + "]"));
      }
    }
    if (const Json* exits = child(*plan, "exits")) {
      if (!exits->is_array()) field_error("floor_plan.exits", "expected a list");
      for (std::size_t k = 0; k < exits->size(); ++k) {
        const std::string p = "floor_plan.exits[" + std::to_string(k) + "]";
        const Json* a = child((*exits)[k], "a");
        const Json* b = child((*exits)[k], "b");
        if (!a || !b) field_error(p, "expected {\"a\": [x, y], \"b\": [x, y]}");
        s.plan.exits.push_back({get_vec2(*a, p + ".a"), get_vec2(*b, p + ".b")});
      }
    }
  }

  const Json* pop = child(root, "population");
  if (!pop) field_error("population", "missing");
  s.population.radius = number_or(*pop, "radius_m", s.population.radius, "population");
  if (const Json* radii = child(*pop, "radii_m")) {
    if (!radii->is_array()) field_error("population.radii_m", "expected a list");
    for (std::size_t k = 0; k < radii->size(); ++k) {
      s.population.radii.push_back(get_number((*radii)[k], "population.radii_m[" + std::to_string(k) + "]"));
    }
  }
  if (const Json* range = child(*pop, "radius_range_m")) {
    const Vec2 lh = get_vec2(*range, "population.radius_range_m");
    s.population.radius_range = std::array<double, 2>{lh.x(), lh.y()};
  }
  if (const Json* pl = child(*pop, "placement")) {
    const Json* kind = child(*pl, "kind");
    const std::string k = kind && kind->is_string() ? kind->get<std::string>() : "";
    if (k == "explicit") {
      s.population.placement.kind = PlacementSpec::Kind::Explicit;
      const Json* pos = child(*pl, "positions");
      if (!pos) field_error("population.placement.positions", "missing");
      s.population.placement.positions = get_points(*pos, "population.placement.positions");
    } else if (k == "random") {
      s.population.placement.kind = PlacementSpec::Kind::Random;
      if (const Json* seed = child(*pl, "seed")) s.population.placement.seed = get_unsigned(*seed, "population.placement.seed");
      if (const Json* region = child(*pl, "region")) s.population.placement.region = get_box(*region, "population.placement.region");
    } else {
      field_error("population.placement.kind", "expected \"explicit\" or \"random\"");
    }
  }
  if (const Json* count = child(*pop, "count")) {
    s.population.count = static_cast<std::size_t>(get_unsigned(*count, "population.count"));
  } else if (s.population.placement.kind == PlacementSpec::Kind::Explicit) {
    s.population.count = s.population.placement.positions.size();
  } else {
    field_error("population.count", "missing");
  }

  if (const Json* f = child(root, "field")) s.field = parse_field(*f, "field");

  if (const Json* st = child(root, "step")) {
    s.step.h = number_or(*st, "h_s", s.step.h, "step");
    s.horizon = number_or(*st, "horizon_s", s.horizon, "step");
    s.step.tol = number_or(*st, "tol_m_per_s", s.step.tol, "step");
    if (const Json* mi = child(*st, "max_iter")) s.step.max_iter = static_cast<std::size_t>(get_unsigned(*mi, "step.max_iter"));
    if (const Json* rho = child(*st, "rho")) s.step.rho = get_number(*rho, "step.rho");
    if (const Json* c = child(*st, "cutoff_m")) s.step.cutoff = get_number(*c, "step.cutoff_m");
    if (const Json* mh = child(*st, "max_halvings")) s.step.max_halvings = static_cast<int>(get_unsigned(*mh, "step.max_halvings"));
    s.step.warm_start = bool_or(*st, "warm_start", s.step.warm_start, "step");
    s.step.accelerate = bool_or(*st, "accelerate", s.step.accelerate, "step");
    s.step.finish = bool_or(*st, "finish", s.step.finish, "step");
    s.step.scale_wall_rows = bool_or(*st, "scale_wall_rows", s.step.scale_wall_rows, "step");
    s.step.overlap_tolerance = number_or(*st, "overlap_tolerance_m", s.step.overlap_tolerance, "step");
  }

  if (const Json* out = child(root, "output")) {
    if (const Json* stride = child(*out, "stride")) s.output.stride = static_cast<std::size_t>(get_unsigned(*stride, "output.stride"));
    if (const Json* dir = child(*out, "directory")) {
      if (!dir->is_string()) field_error("output.directory", "expected a string");
      s.output.directory = dir->get<std::string>();
    }
    s.output.binary_trajectory = bool_or(*out, "binary_trajectory", s.output.binary_trajectory, "output");
  }
  return s;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  try {
    return parse_document(text);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open scenario " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  Json root = Json::object();
  root["version"] = s.version;
  root["name"] = s.name;
  root["units"] = Json{{"length", "m"}, {"time", "s"}};

  Json plan = Json::object();
  Json walls = Json::array();
  for (const auto& w : s.plan.walls) walls.push_back(points_json(w));
  Json obs = Json::array();
  for (const auto& o : s.plan.obstacles) obs.push_back(points_json(o));
  Json exits = Json::array();
  for (const auto& e : s.plan.exits) exits.push_back(Json{{"a", vec2_json(e.a)}, {"b", vec2_json(e.b)}});
  plan["walls"] = walls;
  plan["obstacles"] = obs;
  plan["exits"] = exits;
  root["floor_plan"] = plan;

  Json pop = Json::object();
  pop["count"] = s.population.count;
  pop["radius_m"] = s.population.radius;
  if (!s.population.radii.empty()) pop["radii_m"] = s.population.radii;
  if (s.population.radius_range) {
    pop["radius_range_m"] = {(*s.population.radius_range)[0], (*s.population.radius_range)[1]};
  }
  Json pl = Json::object();
  if (s.population.placement.kind == PlacementSpec::Kind::Explicit) {
    pl["kind"] = "explicit";
    pl["positions"] = points_json(s.population.placement.positions);
  } else {
    pl["kind"] = "random";
    pl["seed"] = s.population.placement.seed;
    if (s.population.placement.region) pl["region"] = box_json(*s.population.placement.region);
  }
  pop["placement"] = pl;
  root["population"] = pop;

  root["field"] = field_json(s.field);

  Json st = Json::object();
  st["h_s"] = s.step.h;
  st["horizon_s"] = s.horizon;
  st["tol_m_per_s"] = s.step.tol;
  st["max_iter"] = s.step.max_iter;
  st["rho"] = s.step.rho ? Json(*s.step.rho) : Json(nullptr);
  st["cutoff_m"] = s.step.cutoff ? Json(*s.step.cutoff) : Json(nullptr);
  st["max_halvings"] = s.step.max_halvings;
  st["warm_start"] = s.step.warm_start;
  st["accelerate"] = s.step.accelerate;
  st["finish"] = s.step.finish;
  st["scale_wall_rows"] = s.step.scale_wall_rows;
  st["overlap_tolerance_m"] = s.step.overlap_tolerance;
  root["step"] = st;

  Json out = Json::object();
  out["stride"] = s.output.stride;
  out["directory"] = s.output.directory;
  out["binary_trajectory"] = s.output.binary_trajectory;
  root["output"] = out;
  return root.dump(2) + "\n";
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << scenario_to_json(scenario);
  if (!os) throw IoError("write failed: " + path);
}

bool equivalent(const Scenario& a, const Scenario& b) {
  return Json::parse(scenario_to_json(a)) == Json::parse(scenario_to_json(b));
}

std::string ValidationReport::str() const {
  std::string out;
  for (const auto& v : violations) out += v + "\n";
  return out;
}

namespace {

Box placement_region(const Scenario& s) {
  if (s.population.placement.region) return *s.population.placement.region;
  return s.plan.bounds();
}

double max_radius(const Scenario& s) {
  double r = s.population.radius;
  for (double x : s.population.radii) r = std::max(r, x);
  if (s.population.radius_range) r = std::max(r, (*s.population.radius_range)[1]);
  return r;
}

}  // namespace

bool exceeds_packing_bound(const Scenario& s) {
  double disk_area = 0.0;
  for (std::size_t k = 0; k < s.population.count; ++k) {
    const double r = s.population.radius_of(k);
    disk_area += std::numbers::pi * r * r;
  }
  Box region = placement_region(s);
  double free_area = region.area();
  for (const auto& o : s.plan.obstacles) free_area -= std::abs(polygon_area(o));
  return disk_area > std::numbers::pi / std::sqrt(12.0) * std::max(free_area, 0.0);
}

ValidationReport validate_scenario(const Scenario& s) {
  ValidationReport rep;
  auto fail = [&](const std::string& what) { rep.violations.push_back(what); };

  if (s.version != kScenarioVersion) fail("version: unsupported");
  if (!(s.step.h > 0.0)) fail("step.h_s: must be > 0");
  if (!(s.horizon >= 0.0)) fail("step.horizon_s: must be >= 0");
  if (s.step.tol < 0.0) fail("step.tol_m_per_s: must be >= 0");
  if (s.step.max_iter == 0) fail("step.max_iter: must be > 0");
  if (s.step.rho && !(*s.step.rho > 0.0)) fail("step.rho: must be > 0");
  if (s.step.cutoff && *s.step.cutoff < 0.0) fail("step.cutoff_m: must be >= 0");
  if (s.output.stride == 0) fail("output.stride: must be > 0");
  if (!(s.population.radius > 0.0)) fail("population.radius_m: must be > 0");
  if (!s.population.radii.empty() && s.population.radii.size() != s.population.count) {
    fail("population.radii_m: length differs from count");
  }
  for (double r : s.population.radii) {
    if (!(r > 0.0)) fail("population.radii_m: radii must be > 0");
  }
  if (const auto& range = s.population.radius_range) {
    if (!((*range)[0] > 0.0) || !((*range)[1] >= (*range)[0])) {
      fail("population.radius_range_m: need 0 < lo <= hi");
    }
    if (!s.population.radii.empty()) fail("population.radius_range_m: conflicts with radii_m");
    if (s.population.placement.kind == PlacementSpec::Kind::Explicit) {
      fail("population.radius_range_m: needs random placement");
    }
  }

  for (const auto& w : s.plan.walls) {
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      if (w[k] == w[k + 1]) fail("floor_plan.walls: zero-length segment");
    }
  }
  for (const auto& o : s.plan.obstacles) {
    if (o.size() < 3) fail("floor_plan.obstacles: polygon needs at least 3 vertices");
  }
  for (std::size_t e = 0; e < s.plan.exits.size(); ++e) {
    const ExitSegment& ex = s.plan.exits[e];
    const Vec2 mid = 0.5 * (ex.a + ex.b);
    if (s.plan.inside_obstacle(ex.a) || s.plan.inside_obstacle(ex.b) || s.plan.inside_obstacle(mid)) {
      fail("floor_plan.exits[" + std::to_string(e) + "]: exit inside obstacle");
    }
  }

  if (s.field.kind == FieldSpec::Kind::Geodesic) {
    if (s.plan.exits.empty()) fail("field: geodesic field needs at least one exit");
    if (!(s.field.spacing > 0.0)) fail("field.spacing_m: must be > 0");
    if (!(s.field.speed >= 0.0)) fail("field.speed_m_per_s: must be >= 0");
  }

  const auto& pl = s.population.placement;
  if (pl.kind == PlacementSpec::Kind::Explicit) {
    if (pl.positions.size() != s.population.count) {
      fail("population.placement.positions: length differs from count");
    } else if (rep.ok()) {
      std::vector<double> radii(s.population.count);
      for (std::size_t k = 0; k < radii.size(); ++k) radii[k] = s.population.radius_of(k);
      Configuration cfg;
      cfg.positions = pl.positions;
      cfg.radii = radii;
      cfg.ids.resize(radii.size());
      for (std::size_t i = 0; i < cfg.size(); ++i) {
        if (s.plan.inside_obstacle(cfg.positions[i])) {
          fail("population: disk " + std::to_string(i) + " inside obstacle");
        }
        for (std::size_t j = i + 1; j < cfg.size(); ++j) {
          const double d = (cfg.positions[j] - cfg.positions[i]).norm();
          if (d - (radii[i] + radii[j]) < 0.0) {
            fail("population: overlap between disks " + std::to_string(i) + " and " + std::to_string(j));
          }
        }
        for (const WallSegment& w : s.plan.segments()) {
          if (distance_to_segment(cfg.positions[i], w.a, w.b) - radii[i] < 0.0) {
            fail("population: overlap between disk " + std::to_string(i) + " and a wall");
            break;
          }
        }
      }
    }
  } else if (s.population.count > 0 && exceeds_packing_bound(s)) {
    fail("population: density above hexagonal packing of the free area");
  }
  return rep;
}

Configuration place_population(const Scenario& s) {
  const ValidationReport rep = validate_scenario(s);
  if (!rep.ok()) throw ValidationError("invalid scenario:\n" + rep.str());

  const std::size_t n = s.population.count;
  std::vector<double> radii(n);
  for (std::size_t k = 0; k < n; ++k) radii[k] = s.population.radius_of(k);
  if (s.population.placement.kind == PlacementSpec::Kind::Explicit) {
    return Configuration::make(s.population.placement.positions, radii);
  }

  const Box region = placement_region(s);
  const std::vector<WallSegment> walls = s.plan.segments();
  std::mt19937_64 rng(s.population.placement.seed);
  if (const auto& range = s.population.radius_range) {
    std::uniform_real_distribution<double> draw((*range)[0], (*range)[1]);
    for (double& r : radii) r = draw(rng);
  }
  std::vector<Vec2> placed;
  placed.reserve(n);

  // Bucket grid over the region for overlap queries.
  const double cell = 2.0 * max_radius(s);
  const auto gx = static_cast<std::size_t>(std::max(1.0, std::ceil((region.hi.x() - region.lo.x()) / cell)));
  const auto gy = static_cast<std::size_t>(std::max(1.0, std::ceil((region.hi.y() - region.lo.y()) / cell)));
  std::vector<std::vector<std::size_t>> buckets(gx * gy);
  auto bucket = [&](const Vec2& p) {
    const auto cx = std::min(gx - 1, static_cast<std::size_t>(std::max(0.0, (p.x() - region.lo.x()) / cell)));
    const auto cy = std::min(gy - 1, static_cast<std::size_t>(std::max(0.0, (p.y() - region.lo.y()) / cell)));
    return std::pair{cx, cy};
  };

  const std::size_t budget = 10000 * std::max<std::size_t>(n, 1);
  std::size_t failures = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = radii[k];
    std::uniform_real_distribution<double> ux(region.lo.x() + r, region.hi.x() - r);
    std::uniform_real_distribution<double> uy(region.lo.y() + r, region.hi.y() - r);
    bool done = false;
    while (!done) {
      if (failures >= budget) {
        throw ValidationError("placement failed after " + std::to_string(failures) +
                              " rejected draws (density too high): placed " + std::to_string(k) +
                              " of " + std::to_string(n));
      }
      const Vec2 p(ux(rng), uy(rng));
      bool ok = !s.plan.inside_obstacle(p);
      for (std::size_t w = 0; ok && w < walls.size(); ++w) {
        ok = distance_to_segment(p, walls[w].a, walls[w].b) > r;
      }
      if (ok) {
        const auto [cx, cy] = bucket(p);
        for (std::size_t y = (cy ? cy - 1 : 0); ok && y <= std::min(cy + 1, gy - 1); ++y) {
          for (std::size_t x = (cx ? cx - 1 : 0); ok && x <= std::min(cx + 1, gx - 1); ++x) {
            for (std::size_t other : buckets[y * gx + x]) {
              if ((placed[other] - p).norm() <= r + radii[other]) {
                ok = false;
                break;
              }
            }
          }
        }
      }
      if (!ok) {
        ++failures;
        continue;
      }
      const auto [cx, cy] = bucket(p);
      buckets[cy * gx + cx].push_back(k);
      placed.push_back(p);
      done = true;
    }
  }
  return Configuration::make(std::move(placed), std::move(radii));
}

namespace {

std::shared_ptr<const VelocityField> make_field(const FieldSpec& f, const Scenario& s,
                                                FieldBundle& bundle) {
  switch (f.kind) {
    case FieldSpec::Kind::Geodesic: {
      GridOptions opt;
      opt.spacing = f.spacing;
      opt.inflation = f.inflate_obstacles ? max_radius(s) : 0.0;
      auto grid = std::make_shared<DistanceGrid>(fmm_solve(s.plan, opt));
      bundle.grid = grid;
      bundle.capture_radius = std::max(bundle.capture_radius, 0.5 * f.spacing);
      return std::make_shared<GeodesicField>(grid, f.speed);
    }
    case FieldSpec::Kind::Constant:
      return std::make_shared<ConstantField>(f.vector);
    case FieldSpec::Kind::PointSink:
      return std::make_shared<PointSinkField>(f.vector, f.speed);
    case FieldSpec::Kind::Corridor1d:
      return std::make_shared<Corridor1dField>(f.speed);
    case FieldSpec::Kind::Affine:
      return std::make_shared<AffineField>(f.vector, f.matrix);
    case FieldSpec::Kind::PerDisk: {
      std::map<std::size_t, Vec2> table;
      for (std::size_t k = 0; k < f.per_disk.size(); ++k) table[k] = f.per_disk[k];
      return std::make_shared<PerDiskField>(std::move(table), f.fallback);
    }
    case FieldSpec::Kind::Regions: {
      std::vector<std::pair<Box, std::shared_ptr<const VelocityField>>> regions;
      for (const auto& r : f.regions) regions.emplace_back(r.box, make_field(r.field, s, bundle));
      std::shared_ptr<const VelocityField> fallback;
      if (f.region_fallback) fallback = make_field(*f.region_fallback, s, bundle);
      return std::make_shared<RegionField>(std::move(regions), std::move(fallback));
    }
  }
  throw ValidationError("unknown field kind");
}

}  // namespace

FieldBundle build_field(const Scenario& s) {
  FieldBundle bundle;
  bundle.field = make_field(s.field, s, bundle);
  return bundle;
}

}  // namespace crowd
