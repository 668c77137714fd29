#include <doctest.h>

#include <cmath>

#include "logz/hardness.hpp"
#include "logz/oracles.hpp"
#include "test_util.hpp"

using namespace logz;
using namespace logz::hardness;

TEST_SUITE_BEGIN("hardness");

TEST_CASE("bump polynomial boundary and interior values") {
  for (double x : {-1.0, 1.0}) {
    PDerivs d = p_derivs(x);
    CHECK(d.p == 0.0);
    CHECK(d.dp == 0.0);
    CHECK(d.d2p == 0.0);
  }
  CHECK(p_value(0.0) == 1.0);
  CHECK(p_value(0.5) == doctest::Approx(0.421875).epsilon(1e-15));
  CHECK(p_value(0.5) >= 1.0 / 3.0);
  CHECK_THROWS_AS(p_value(1.5), std::invalid_argument);
  CHECK_THROWS_AS(p_derivs(-1.01), std::invalid_argument);
}

TEST_CASE("q stays in [0,1], is >= 3^-k on the inner half-cube, Hessian <= 36k") {
  RngStream rng = RngStream::from_seed(4);
  const int k = 2;
  Eigen::MatrixXd hess(k, k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  for (int i = 0; i < 2000; ++i) {
    VectorXd y(k);
    for (int j = 0; j < k; ++j) y[j] = 2.0 * rng.uniform() - 1.0;
    double q = q_value(y);
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
    q_hessian(y, hess);
    solver.compute(hess, Eigen::EigenvaluesOnly);
    CHECK(solver.eigenvalues().cwiseAbs().maxCoeff() <= 36.0 * k + 1e-9);
    VectorXd half = 0.5 * y;
    CHECK(q_value(half) >= std::pow(3.0, -k));
  }
}

TEST_CASE("all-type-1 instances are exactly the base quadratic") {
  HardInstance inst = generate(1, 4, TypeRule{{1, 1, 1, 1}}, CellMode::uniform);
  RngStream rng = RngStream::from_seed(9);
  for (int i = 0; i < 200; ++i) {
    VectorXd x(1);
    x << 3.0 * (2.0 * rng.uniform() - 1.0);
    CHECK(inst.value(x) == 0.5 * x.squaredNorm());
    CHECK(inst.grad(x) == x);
  }
  CHECK(inst.construction_log_z() == doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  VerifyReport rep = verify_instance(inst, 2000);
  CHECK(rep.ok);
  CHECK(rep.hessian_min == doctest::Approx(1.0));
  CHECK(rep.hessian_max == doctest::Approx(1.0));
}

TEST_CASE("a type-2 cell strictly lowers Z by at least the proof's margin") {
  HardInstance inst = generate(1, 4, TypeRule{{1, 2, 1, 1}}, CellMode::uniform);
  double l = inst.cell_half_width();
  double dec = inst.cell_decrease(1, inst.c_max());
  CHECK(dec > 0.0);
  // e^{-f0} >= e^{-1} and q >= 1/3 on the inner half of the cell
  double margin = std::exp(-1.0) * (-std::expm1(-inst.c_max() / 3.0)) * l;
  CHECK(dec >= margin);
  CHECK(inst.construction_log_z() < 0.5 * std::log(2.0 * M_PI));
}

TEST_CASE("uniform-mode perturbation keeps the Hessian inside [0.5, 1.5]") {
  HardInstance inst = generate(1, 4, TypeRule{{2, 2, 1, 2}}, CellMode::uniform);
  VerifyReport rep = verify_instance(inst, 10000);
  CHECK(rep.ok);
  CHECK(rep.hessian_min >= 0.5 - 1e-9);
  CHECK(rep.hessian_max <= 1.5 + 1e-9);
  CHECK(rep.boundary_grad_err <= 1e-9);
}

TEST_CASE("equalized mode balances all per-cell decreases") {
  HardInstance inst = generate(2, 4, TypeRule{{2, 2, 2, 2}}, CellMode::equalized);
  std::vector<double> decs;
  for (long long c = 0; c < inst.n(); ++c)
    decs.push_back(inst.cell_decrease(c, inst.coeffs()[c]));
  for (std::size_t i = 1; i < decs.size(); ++i)
    CHECK(std::abs(decs[i] - decs[0]) < 1e-10);
  // at least one cell sits at the maximum coefficient
  double cmax = inst.c_max();
  bool any_max = false;
  for (double c : inst.coeffs()) any_max |= (c == cmax);
  CHECK(any_max);
}

TEST_CASE("adding type-2 cells never increases Z") {
  double prev = 1e300;
  for (int n2 = 0; n2 <= 4; ++n2) {
    std::vector<int> types(4, 1);
    for (int i = 0; i < n2; ++i) types[i] = 2;
    HardInstance inst = generate(1, 4, TypeRule{types}, CellMode::uniform);
    double z = std::exp(inst.construction_log_z());
    CHECK(z < prev + 1e-15);
    prev = z;
  }
}

TEST_CASE("construction Z agrees with the quadrature oracle") {
  HardInstance inst = generate(1, 4, TypeRule{{2, 1, 2, 1}}, CellMode::uniform);
  // grid aligned with the cell faces; box [-6, 6] leaves ~1e-10 tail
  long long intervals = 12LL * 4096;
  double quad = oracles::trapezoid_z_box(
      [&](const VectorXd& x) { return inst.value(x); }, 1, 6.0, intervals);
  double quad_tail = std::sqrt(2.0 * M_PI) * 2.0 * oracles::gaussian_norm_tail(1, 1.0, 6.0) / 2.0;
  (void)quad_tail;
  CHECK(std::abs(quad - std::exp(inst.construction_log_z())) < 1e-6);
}

TEST_CASE("instances satisfy the convexity sandwich with mu = 0.5, L = 1.5") {
  HardInstance inst = generate(2, 4, TypeRule{{2, 1, 1, 2}}, CellMode::uniform);
  auto res = testutil::check_convexity_sandwich(inst, 10000, 31);
  CHECK(res.ok);
}

TEST_CASE("json round trip is bit-exact") {
  HardInstance inst = generate(2, 4, TypeRule{{2, 2, 1, 1}}, CellMode::equalized);
  std::string a = inst.to_json();
  HardInstance back = HardInstance::from_json(a);
  CHECK(back.to_json() == a);
  for (long long c = 0; c < inst.n(); ++c) {
    CHECK(back.coeffs()[c] == inst.coeffs()[c]);
    CHECK(back.types()[c] == inst.types()[c]);
  }
}

TEST_CASE("invalid construction parameters are rejected") {
  CHECK_THROWS_AS(generate(2, 5, TypeRule{{1, 1, 1, 1, 1}}, CellMode::uniform),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate(1, 4, TypeRule{{1, 1}}, CellMode::uniform), std::invalid_argument);
  CHECK_THROWS_AS(generate(1, 4, TypeRule{{1, 3, 1, 1}}, CellMode::uniform),
                  std::invalid_argument);
}

TEST_SUITE_END();
