#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "crowd/errors.hpp"
#include "crowd/oracle.hpp"
#include "crowd/projection.hpp"
#include "support.hpp"

using namespace crowd;
using crowd::testing::chain3;
using crowd::testing::packed;
using crowd::testing::random_instance;
using crowd::testing::touching_pair;

namespace {

double exact_norm_sq(const ConstraintSystem& sys) {
  const Eigen::MatrixXd b = sys.dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.transpose() * b);
  return es.eigenvalues().maxCoeff();
}

ConstraintSystem chain_system(double phi, double h) {
  const auto cfg = chain3(phi);
  ConstraintSystem sys;
  sys.num_disks = 3;
  sys.h = h;
  sys.constraints = active_constraints(cfg, {}, 1e-12);
  return sys;
}

Eigen::VectorXd compressive_chain_target(double phi) {
  const auto cfg = chain3(phi);
  const Vec2 u1 = (cfg.positions[1] - cfg.positions[0]).normalized();
  const Vec2 u3 = (cfg.positions[1] - cfg.positions[2]).normalized();
  return packed({u1.x(), u1.y(), 0.0, 0.0, u3.x(), u3.y()});
}

}  // namespace

TEST_CASE("no constraints returns the target") {
  ConstraintSystem sys;
  sys.num_disks = 2;
  sys.h = 0.1;
  const Eigen::VectorXd u = packed({1, 2, 3, 4});
  const auto res = uzawa_project(sys, u);
  CHECK(res.converged());
  CHECK(res.iterations == 1);
  CHECK(res.multipliers.size() == 0);
  CHECK(res.velocity == u);
}

TEST_CASE("head-on pair is annihilated") {
  for (double h : {0.01, 0.1, 1.0}) {
    const auto sys = touching_pair(h);
    const auto res = uzawa_project(sys, packed({1, 0, -1, 0}));
    REQUIRE(res.converged());
    CHECK(res.velocity.norm() <= 1e-8);
    CHECK(res.multipliers(0) == doctest::Approx(1.0 / h).epsilon(1e-6));
    const auto oracle = qp_oracle_project(sys, packed({1, 0, -1, 0}));
    CHECK((oracle.velocity - res.velocity).norm() <= 1e-8);
  }
}

TEST_CASE("pushing pair moves at the mean speed") {
  const auto sys = touching_pair(0.1);
  const Eigen::VectorXd target = packed({2, 0, 1, 0});
  const auto res = uzawa_project(sys, target);
  REQUIRE(res.converged());
  CHECK((res.velocity - packed({1.5, 0, 1.5, 0})).norm() <= 1e-8);
  CHECK(res.multipliers(0) == doctest::Approx(0.5 / 0.1).epsilon(1e-6));
  const auto oracle = qp_oracle_project(sys, target);
  CHECK((oracle.velocity - packed({1.5, 0, 1.5, 0})).norm() <= 1e-12);
  CHECK((oracle.velocity - res.velocity).norm() <= 1e-8);
}

TEST_CASE("oracle leaves a feasible target unchanged") {
  const auto sys = touching_pair(0.1);
  const Eigen::VectorXd target = packed({-1, 0.3, 1, 2});
  const auto res = qp_oracle_project(sys, target);
  CHECK(res.velocity == target);
  CHECK(res.multipliers.cwiseAbs().maxCoeff() == 0.0);
  const auto uz = uzawa_project(sys, target);
  CHECK((uz.velocity - target).norm() <= 1e-12);
}

TEST_CASE("oracle rejects large systems") {
  ConstraintSystem sys;
  sys.num_disks = 30;
  sys.h = 1.0;
  std::vector<Vec2> pos;
  for (int k = 0; k < 30; ++k) pos.emplace_back(k, 0.0);
  sys.constraints = active_constraints(Configuration::make(pos, 0.5), {}, 0.0);
  REQUIRE(sys.rows() > kOracleMaxConstraints);
  CHECK_THROWS_AS(qp_oracle_project(sys, Eigen::VectorXd::Zero(60)), ValidationError);
}

TEST_CASE("uzawa agrees with the active-set oracle on random clusters") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_instance(rng);
    const auto uz = uzawa_project(inst.sys, inst.target);
    REQUIRE(uz.converged());
    const auto oracle = qp_oracle_project(inst.sys, inst.target);
    CHECK((uz.velocity - oracle.velocity).norm() <= 1e-6 * (1.0 + inst.target.norm()));
    CHECK(kkt_check(inst.sys, oracle, inst.target, 1e-8).passed());
    CHECK(kkt_check(inst.sys, uz, inst.target, 1e-6).passed());
  }
}

TEST_CASE("kkt report flags constructed failures") {
  const auto sys = touching_pair(0.1);
  ProjectionResult bogus;
  bogus.velocity = packed({1, 0, -1, 0});
  bogus.multipliers = Eigen::VectorXd::Zero(1);
  const auto primal = kkt_check(sys, bogus, bogus.velocity, 1e-8);
  CHECK(!primal.passed());
  CHECK(!primal.primal_ok);
  CHECK(primal.stationarity_ok);

  // Pushing pair plus a third disk with a slack constraint (lambda = 0 there).
  const auto cfg = Configuration::make({{0, 0}, {1, 0}, {2.05, 0}}, 0.5);
  ConstraintSystem s3;
  s3.num_disks = 3;
  s3.h = 0.1;
  s3.constraints = active_constraints(cfg, {}, 0.1);
  REQUIRE(s3.rows() == 2);
  const Eigen::VectorXd target = packed({2, 0, 1, 0, 1, 0});
  auto good = qp_oracle_project(s3, target);
  const double tol = 1e-8;
  REQUIRE(kkt_check(s3, good, target, tol).passed());
  REQUIRE(good.multipliers(1) == 0.0);
  good.multipliers(1) -= 2.0 * tol;
  const auto dual = kkt_check(s3, good, target, tol);
  CHECK(!dual.dual_ok);
  CHECK(!dual.passed());
  CHECK(!dual.summary().empty());
}

TEST_CASE("projection is 1-Lipschitz and idempotent") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    const auto inst = random_instance(rng);
    Eigen::VectorXd other = inst.target;
    for (Eigen::Index k = 0; k < other.size(); ++k) other(k) += 0.5 * gauss(rng);
    UzawaOptions opt;
    opt.tol = 1e-11;
    const auto p1 = uzawa_project(inst.sys, inst.target, opt);
    const auto p2 = uzawa_project(inst.sys, other, opt);
    REQUIRE(p1.converged());
    REQUIRE(p2.converged());
    CHECK((p1.velocity - p2.velocity).norm() <= (inst.target - other).norm() + 1e-8);
    const auto pp = uzawa_project(inst.sys, p1.velocity, opt);
    CHECK((pp.velocity - p1.velocity).norm() <= 1e-8);
  }
}

TEST_CASE("matrix-free map matches the dense matrix") {
  std::mt19937_64 rng(23);
  const auto inst = random_instance(rng);
  const Eigen::MatrixXd b = inst.sys.dense();
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(b.cols(), -1.0, 2.0);
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(b.rows(), 0.5, 1.5);
  CHECK((inst.sys.apply(v) - b * v).norm() <= 1e-13);
  CHECK((inst.sys.apply_transpose(mu) - b.transpose() * mu).norm() <= 1e-13);
  for (std::size_t k = 0; k < inst.sys.rows(); ++k) {
    const auto& c = inst.sys.constraints[k];
    CHECK(b.row(static_cast<Eigen::Index>(k)).norm() ==
          doctest::Approx(inst.sys.h * std::sqrt(c.norm_sq())));
  }
}

TEST_CASE("power iteration estimate of the operator norm") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 20; ++t) {
    const auto inst = random_instance(rng);
    const double exact = exact_norm_sq(inst.sys);
    const double est = estimate_norm_sq(inst.sys, 50);
    CHECK(est <= exact * (1.0 + 1e-12));
    CHECK(est >= 0.5 * exact);
  }
  const auto chain = chain_system(3.141592653589793, 0.1);
  CHECK(estimate_norm_sq(chain, 50) == doctest::Approx(3.0 * 0.01).epsilon(1e-6));
}

TEST_CASE("rho window: convergence inside, divergence at 4/|B|^2") {
  const auto sys = chain_system(3.141592653589793, 0.1);
  REQUIRE(sys.rows() == 2);
  // One-sided push: the multipliers (2, 1) / 3h excite both eigen-directions of B B^T.
  const Eigen::VectorXd target = packed({1, 0, 0, 0, 0, 0});
  const double nb = exact_norm_sq(sys);
  const auto oracle = qp_oracle_project(sys, target);
  for (double f : {0.05, 0.25, 0.5, 0.75, 0.9, 0.95}) {
    UzawaOptions opt;
    opt.rho = f * 2.0 / nb;
    const auto res = uzawa_project(sys, target, opt);
    CHECK(res.converged());
    CHECK((res.velocity - oracle.velocity).norm() <= 1e-6);
  }
  UzawaOptions bad;
  bad.rho = 4.0 / nb;
  const auto res = uzawa_project(sys, target, bad);
  CHECK(res.status == SolveStatus::Diverged);
  CHECK(!res.converged());
}

TEST_CASE("iteration count is monotone in the tolerance") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 20; ++t) {
    const auto inst = random_instance(rng);
    std::size_t prev = 0;
    for (double tol : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10}) {
      UzawaOptions opt;
      opt.tol = tol;
      const auto res = uzawa_project(inst.sys, inst.target, opt);
      REQUIRE(res.converged());
      CHECK(res.iterations >= prev);
      prev = res.iterations;
    }
  }
}

TEST_CASE("warm start from the converged multipliers") {
  const auto sys = chain_system(2.5, 0.05);
  const Eigen::VectorXd target = compressive_chain_target(2.5);
  const auto cold = uzawa_project(sys, target);
  REQUIRE(cold.converged());
  UzawaOptions warm;
  warm.initial_multipliers = cold.multipliers;
  const auto res = uzawa_project(sys, target, warm);
  CHECK(res.converged());
  CHECK(res.iterations <= cold.iterations);
  CHECK((res.velocity - cold.velocity).norm() <= 1e-7);

  UzawaOptions wrong;
  wrong.initial_multipliers = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(uzawa_project(sys, target, wrong), ValidationError);
}

TEST_CASE("invalid solver input") {
  const auto sys = touching_pair(0.1);
  const Eigen::VectorXd target = packed({1, 0, -1, 0});
  UzawaOptions opt;
  opt.rho = 0.0;
  CHECK_THROWS_AS(uzawa_project(sys, target, opt), ValidationError);
  opt.rho = -1.0;
  CHECK_THROWS_AS(uzawa_project(sys, target, opt), ValidationError);
  opt.rho = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(uzawa_project(sys, target, opt), ValidationError);
  UzawaOptions tol;
  tol.tol = 0.0;
  CHECK_THROWS_AS(uzawa_project(sys, target, tol), ValidationError);
  CHECK_THROWS_AS(uzawa_project(sys, packed({1, 0}), {}), ValidationError);
  auto broken = sys;
  broken.h = 0.0;
  CHECK_THROWS_AS(uzawa_project(broken, target, {}), ValidationError);
}

TEST_CASE("iteration cap is reported, not thrown") {
  const auto sys = chain_system(3.0, 0.1);
  UzawaOptions opt;
  opt.max_iter = 2;
  opt.tol = 1e-14;
  const auto res = uzawa_project(sys, compressive_chain_target(3.0), opt);
  CHECK(res.status == SolveStatus::MaxIterations);
  CHECK(res.iterations == 2);
  CHECK(std::string(to_string(res.status)) == "max-iterations-exceeded");
}

TEST_CASE("accelerated iteration and active-set finish agree with the oracle") {
  std::mt19937_64 rng(123);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_instance(rng);
    const auto oracle = qp_oracle_project(inst.sys, inst.target);
    const double scale = 1e-6 * (1.0 + inst.target.norm());

    UzawaOptions fast;
    fast.accelerate = true;
    const auto acc = uzawa_project(inst.sys, inst.target, fast);
    REQUIRE(acc.converged());
    CHECK((acc.velocity - oracle.velocity).norm() <= scale);

    fast.finish = true;
    fast.finish_after = 5;
    const auto fin = uzawa_project(inst.sys, inst.target, fast);
    REQUIRE(fin.converged());
    CHECK((fin.velocity - oracle.velocity).norm() <= scale);
    CHECK(kkt_check(inst.sys, fin, inst.target, 1e-9).passed());

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inst.sys.rows()));
    const auto cold = active_set_refine(inst.sys, inst.target, zero, 1e-12);
    REQUIRE(cold.has_value());
    CHECK((cold->velocity - oracle.velocity).norm() <= scale);
  }
}

TEST_CASE("active-set finish on a hexagonal cluster with dependent rows") {
  // Hub plus six touching neighbours: 12 contacts, rank at most 11.
  std::vector<Vec2> pos{{0.0, 0.0}};
  for (int k = 0; k < 6; ++k) {
    const double a = k * std::numbers::pi / 3.0;
    pos.emplace_back(std::cos(a), std::sin(a));
  }
  const auto cfg = Configuration::make(pos, 0.5);
  ConstraintSystem sys;
  sys.num_disks = cfg.size();
  sys.h = 0.1;
  sys.constraints = active_constraints(cfg, {}, 1e-9);
  REQUIRE(sys.rows() == 12);
  const Eigen::MatrixXd b = sys.dense();
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(b).rank() < 12);

  Eigen::VectorXd target = Eigen::VectorXd::Zero(14);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 0.3);
  for (std::size_t i = 1; i < cfg.size(); ++i) {
    const Vec2 in = -cfg.positions[i] + Vec2(gauss(rng), gauss(rng));
    target.segment<2>(static_cast<Eigen::Index>(2 * i)) = in;
  }
  const auto oracle = qp_oracle_project(sys, target);
  UzawaOptions opt;
  opt.finish = true;
  opt.finish_after = 10;
  const auto fin = uzawa_project(sys, target, opt);
  REQUIRE(fin.converged());
  CHECK((fin.velocity - oracle.velocity).norm() <= 1e-9 * (1.0 + target.norm()));
  CHECK(kkt_check(sys, fin, target, 1e-9).passed());
  CHECK(fin.iterations <= 10);
}
