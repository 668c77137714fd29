#include <doctest.h>

#include <cmath>
#include <limits>

#include "logz/mlmc.hpp"
#include "logz/potentials.hpp"
#include "test_util.hpp"

using namespace logz;

TEST_SUITE_BEGIN("mlmc");

namespace {

const auto unit_horizon = [](double) { return 1.0; };

struct Runners {
  SingleRunner single;
  CoupledRunner coupled;
};

Runners gaussian_runners(const PotentialPtr& stage, SamplerFamily family) {
  VectorXd x0 = VectorXd::Zero(stage->dim());
  Runners r;
  r.single = [stage, x0, family](double eta, double T, RngStream rs) {
    return run_single(family, x0, *stage, eta, T, std::move(rs));
  };
  r.coupled = [stage, x0, family](double eta, double T, RngStream rs) {
    return run_coupled(family, x0, *stage, eta, T, std::move(rs));
  };
  return r;
}

}  // namespace

TEST_CASE("plan_levels reproduces the worked quadratic example") {
  VarianceModel model{{{1.0, 2.0}}};  // F(eta) = eta^2
  LevelPlan plan = plan_levels(model, 1.0, 1.0, 0.1, 0.1, 10.0, unit_horizon, 4.0);
  CHECK(plan.eta0 == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(plan.k == 4);
  CHECK(plan.etas[4] == doctest::Approx(0.03125).epsilon(1e-6));
  CHECK(plan.samples[0] == 400);
  CHECK_FALSE(plan.capped);
}

TEST_CASE("bias budget already met at the coarsest level gives k = 0") {
  VarianceModel model{{{1.0, 2.0}}};
  double eta0 = 0.5;
  double eps_b = 2.0 * 1.0 * std::sqrt(model(eta0));
  LevelPlan plan = plan_levels(model, 1.0, 1.0, eps_b, 0.1, 10.0, unit_horizon);
  CHECK(plan.k == 0);
}

TEST_CASE("uld default-constant model pins eta0 by bisection") {
  auto g = make_gaussian(4, 1.0);
  VarianceModel model = uld_variance_model(*g, 2662.4);
  LevelPlan plan = plan_levels(model, 1.0, 1.0, 0.1, 0.1, 10.0, unit_horizon);
  CHECK(plan.eta0 == doctest::Approx(4.845e-3).epsilon(1e-3));
}

TEST_CASE("unsolvable variance target clamps to eta_max without error") {
  VarianceModel model{{{1e-12, 2.0}}};
  LevelPlan plan = plan_levels(model, 1.0, 1.0, 0.5, 0.5, 2.0, unit_horizon);
  CHECK(plan.eta0 == doctest::Approx(2.0));
}

TEST_CASE("plan rejects bad budgets and pathological depth") {
  VarianceModel model{{{1.0, 2.0}}};
  CHECK_THROWS_AS(plan_levels(model, 1.0, 1.0, 0.0, 0.1, 1.0, unit_horizon),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan_levels(model, 1.0, 1.0, 0.1, -1.0, 1.0, unit_horizon),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan_levels(model, 1.0, 1.0, 1e-30, 0.1, 1.0, unit_horizon),
                  std::invalid_argument);
  VarianceModel bad{{{1.0, 0.9}}};
  CHECK_THROWS_AS(plan_levels(bad, 1.0, 1.0, 0.1, 0.1, 1.0, unit_horizon),
                  std::invalid_argument);
}

TEST_CASE("monotone budgets") {
  VarianceModel model{{{1.0, 2.0}}};
  int prev_k = -1;
  for (double eps_b : {0.4, 0.2, 0.1, 0.05, 0.01}) {
    LevelPlan plan = plan_levels(model, 1.0, 1.0, eps_b, 0.1, 10.0, unit_horizon);
    CHECK(plan.k >= prev_k);
    prev_k = plan.k;
  }
  std::vector<long long> prev;
  for (double eps_s : {0.4, 0.2, 0.1, 0.05}) {
    LevelPlan plan = plan_levels(model, 1.0, 1.0, 0.1, eps_s, 10.0, unit_horizon);
    if (!prev.empty()) {
      for (std::size_t j = 0; j < std::min(prev.size(), plan.samples.size()); ++j)
        CHECK(plan.samples[j] >= prev[j]);
    }
    prev = plan.samples;
  }
}

TEST_CASE("predicted_queries counts chain steps exactly") {
  LevelPlan plan;
  plan.eta0 = 0.1;
  plan.k = 0;
  plan.etas = {0.1};
  plan.samples = {10};
  plan.T = 1.0;
  plan.steps_coarsest = 10;
  CHECK(predicted_queries(plan, 1) == 100);

  LevelPlan plan2;
  plan2.eta0 = 0.5;
  plan2.k = 1;
  plan2.etas = {0.5, 0.25};
  plan2.samples = {4, 2};
  plan2.T = 1.0;
  plan2.steps_coarsest = 2;
  CHECK(predicted_queries(plan2, 1) == 20);
  CHECK(predicted_queries(plan2, 2) == 40);
}

TEST_CASE("constant observables telescope exactly") {
  auto stage = make_gaussian(2, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  LevelPlan plan;
  plan.eta0 = 0.2;
  plan.k = 2;
  plan.etas = {0.2, 0.1, 0.05};
  plan.samples = {8, 4, 2};
  plan.steps_coarsest = 5;
  plan.T = 1.0;
  MlmcEstimate est = mlmc_estimate(r.coupled, r.single, [](const VectorXd&) { return 7.3; },
                                   plan, RngStream::from_seed(1));
  // difference levels cancel exactly; the level-0 mean recovers the constant
  // up to the fixed-order summation rounding
  CHECK(est.level_means[1] == 0.0);
  CHECK(est.level_means[2] == 0.0);
  CHECK(est.level_variances[1] == 0.0);
  CHECK(est.r_hat == doctest::Approx(7.3).epsilon(1e-15));
}

TEST_CASE("k = 0 reduces to plain Monte Carlo") {
  auto stage = make_gaussian(1, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  LevelPlan plan;
  plan.eta0 = 0.1;
  plan.k = 0;
  plan.etas = {0.1};
  plan.samples = {64};
  plan.steps_coarsest = 20;
  plan.T = 2.0;
  RngStream stream = RngStream::from_seed(3);
  MlmcEstimate est = mlmc_estimate(r.coupled, r.single,
                                   [](const VectorXd& x) { return x[0]; }, plan, stream);
  // equals the plain mean over the same per-sample streams
  double acc = 0.0;
  RngStream level0 = stream.child(0);
  for (int i = 0; i < 64; ++i) acc += r.single(0.1, 2.0, level0.child(i))[0];
  CHECK(est.r_hat == doctest::Approx(acc / 64.0).epsilon(1e-15));
}

TEST_CASE("estimator respects the bias + deviation contract on a gaussian") {
  auto stage = make_gaussian(2, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  VarianceModel model = uld_variance_model(*stage, 2662.4);
  auto t_of = [&](double e) { return mixing_time(SamplerFamily::uld, *stage, e); };
  PlanCaps caps;
  caps.max_samples_level0 = 400;
  caps.max_chain_steps = 1200;
  LevelPlan plan = plan_levels(model, 1.0, 1.0, 0.05, 0.05, 0.1, t_of, 4.0, caps);
  int hits = 0;
  const int runs = 100;
  for (int s = 0; s < runs; ++s) {
    MlmcEstimate est = mlmc_estimate(r.coupled, r.single,
                                     [](const VectorXd& x) { return x[0]; }, plan,
                                     RngStream::from_seed(100 + s));
    if (std::abs(est.r_hat) <= 0.05 + 3 * 0.05) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("per-level variance sum stays within the budget on a gaussian") {
  auto stage = make_gaussian(2, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  VarianceModel model = uld_variance_model(*stage, 2662.4);
  auto t_of = [&](double e) { return mixing_time(SamplerFamily::uld, *stage, e); };
  PlanCaps caps;
  caps.max_chain_steps = 1500;
  const double eps_sigma = 0.05;
  LevelPlan plan = plan_levels(model, 1.0, 1.0, 0.1, eps_sigma, 0.1, t_of, 4.0, caps);
  int hits = 0;
  const int runs = 20;
  for (int s = 0; s < runs; ++s) {
    MlmcEstimate est = mlmc_estimate(r.coupled, r.single,
                                     [](const VectorXd& x) { return x[0]; }, plan,
                                     RngStream::from_seed(500 + s));
    double total = 0.0;
    for (int j = 0; j <= plan.k; ++j)
      total += est.level_variances[j] / static_cast<double>(plan.samples[j]);
    if (total <= 2.0 * eps_sigma * eps_sigma) ++hits;
  }
  CHECK(hits >= 19);
}

TEST_CASE("telescoping identity: E r_hat equals the finest-level plain mean") {
  auto stage = make_gaussian(1, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  LevelPlan plan;
  plan.eta0 = 0.4;
  plan.k = 2;
  plan.etas = {0.4, 0.2, 0.1};
  plan.samples = {4, 2, 1};
  plan.steps_coarsest = 5;
  plan.T = 2.0;
  auto g = [](const VectorXd& x) { return x[0] * x[0]; };
  const int reps = 5000;
  std::vector<double> ml(reps), plain(reps);
  RngStream root = RngStream::from_seed(77);
  for (int s = 0; s < reps; ++s) {
    ml[s] = mlmc_estimate(r.coupled, r.single, g, plan, root.child(s)).r_hat;
    plain[s] = g(r.single(0.1, 2.0, root.child(reps + s)));
  }
  double se = std::sqrt(testutil::variance(ml) / reps + testutil::variance(plain) / reps);
  CHECK(std::abs(testutil::mean(ml) - testutil::mean(plain)) < 4.0 * se);
}

TEST_CASE("predicted queries match the counter exactly") {
  auto counted = wrap_counting(make_gaussian(2, 1.0));
  for (SamplerFamily family : {SamplerFamily::uld, SamplerFamily::rmm}) {
    auto before = counted->counter()->grads();
    Runners r = gaussian_runners(counted, family);
    LevelPlan plan;
    plan.eta0 = 0.2;
    plan.k = 2;
    plan.etas = {0.2, 0.1, 0.05};
    plan.samples = {7, 3, 2};
    plan.steps_coarsest = 10;
    plan.T = 2.0;
    mlmc_estimate(r.coupled, r.single, [](const VectorXd& x) { return x[0]; }, plan,
                  RngStream::from_seed(9), 1, counted->counter().get());
    auto used = counted->counter()->grads() - before;
    CHECK(used == static_cast<std::uint64_t>(predicted_queries(plan, grad_cost_per_step(family))));
  }
}

TEST_CASE("non-finite observable aborts with level diagnostics") {
  auto stage = make_gaussian(1, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  LevelPlan plan;
  plan.eta0 = 0.1;
  plan.k = 0;
  plan.etas = {0.1};
  plan.samples = {3};
  plan.steps_coarsest = 2;
  plan.T = 0.2;
  auto bad = [](const VectorXd&) { return std::numeric_limits<double>::infinity(); };
  CHECK_THROWS_WITH_AS(
      mlmc_estimate(r.coupled, r.single, bad, plan, RngStream::from_seed(1)),
      doctest::Contains("level 0"), MlmcError);
}

TEST_CASE("calibrated coefficients land near the observed decay") {
  auto stage = make_gaussian(2, 1.0);
  Runners r = gaussian_runners(stage, SamplerFamily::uld);
  std::vector<double> etas{0.2, 0.1, 0.05};
  auto fitted = calibrate_variance_model(r.coupled, [](const VectorXd& x) { return x[0]; },
                                         etas, 2.0, 400, {2.0}, RngStream::from_seed(4));
  REQUIRE(fitted.size() == 1);
  CHECK(fitted[0] > 0.0);
  // far below the conservative default constant
  CHECK(fitted[0] < 2662.4 * 2.0);
}

TEST_SUITE_END();
