#include <doctest.h>

#include <cmath>
#include <memory>

#include "crowd/velocity_field.hpp"

using namespace crowd;

TEST_CASE("analytic fields") {
  const auto cfg = Configuration::make({{3, 4}, {0, 0}, {-1, 2}}, 0.25);

  const ConstantField constant({1, 2});
  CHECK(constant.evaluate(cfg, 2) == Vec2(1, 2));

  const PointSinkField sink({0, 0}, 2.0);
  const Vec2 v = sink.evaluate(cfg, 0);
  CHECK(v.x() == doctest::Approx(-1.2));
  CHECK(v.y() == doctest::Approx(-1.6));
  CHECK(sink.evaluate(cfg, 1).norm() == 0.0);

  const Corridor1dField corridor(1.5);
  CHECK(corridor.evaluate(cfg, 1) == Vec2(1.5, 0));

  Eigen::Matrix2d a;
  a << -1, 0, 0, 0.5;
  const AffineField affine({2, 0}, a);
  CHECK(affine.evaluate(cfg, 2) == Vec2(3, 1));
}

TEST_CASE("packed evaluation") {
  const auto cfg = Configuration::make({{3, 4}, {6, 8}}, 0.25);
  const PointSinkField sink({0, 0}, 1.0);
  const Eigen::VectorXd u = sink.evaluate_all(cfg);
  REQUIRE(u.size() == 4);
  CHECK(u[0] == doctest::Approx(-0.6));
  CHECK(u[1] == doctest::Approx(-0.8));
  CHECK(u[2] == doctest::Approx(-0.6));
  CHECK(u[3] == doctest::Approx(-0.8));
}

TEST_CASE("per-disk field follows persistent ids") {
  auto cfg = Configuration::make({{0, 0}, {2, 0}, {4, 0}}, 0.25);
  const PerDiskField field({{0, {1, 0}}, {2, {0, -1}}}, {9, 9});
  CHECK(field.evaluate(cfg, 0) == Vec2(1, 0));
  CHECK(field.evaluate(cfg, 1) == Vec2(9, 9));
  cfg.remove(0);
  CHECK(field.evaluate(cfg, 1) == Vec2(0, -1));
  CHECK(field.evaluate(cfg, 0) == Vec2(9, 9));
}

TEST_CASE("region field picks the first containing box") {
  const auto right = std::make_shared<ConstantField>(Vec2(1, 0));
  const auto up = std::make_shared<ConstantField>(Vec2(0, 1));
  const auto rest = std::make_shared<ConstantField>(Vec2(-1, -1));
  const RegionField field({{Box{{0, 0}, {2, 2}}, right}, {Box{{1, 1}, {3, 3}}, up}}, rest);
  const auto cfg = Configuration::make({{0.5, 0.5}, {1.5, 1.5}, {2.5, 2.5}, {5, 5}}, 0.1);
  CHECK(field.evaluate(cfg, 0) == Vec2(1, 0));
  CHECK(field.evaluate(cfg, 1) == Vec2(1, 0));
  CHECK(field.evaluate(cfg, 2) == Vec2(0, 1));
  CHECK(field.evaluate(cfg, 3) == Vec2(-1, -1));
}

TEST_CASE("geodesic field wraps the grid gradient") {
  FloorPlan p;
  p.walls.push_back({{0, 1}, {1, 1}, {1, 0}, {0, 0}});
  p.exits.push_back({{0, 0}, {0, 1}});
  const auto grid = std::make_shared<DistanceGrid>(fmm_solve(p, {0.05, 0.0, 0.0}));
  const GeodesicField field(grid, 1.4);
  const auto cfg = Configuration::make({{0.5, 0.5}}, 0.1);
  const Vec2 v = field.evaluate(cfg, 0);
  CHECK(v.x() == doctest::Approx(-1.4).epsilon(1e-6));
  CHECK(std::abs(v.y()) <= 1e-6);
  CHECK(field.speed() == 1.4);
}
