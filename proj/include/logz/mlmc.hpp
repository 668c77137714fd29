#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "logz/potentials.hpp"
#include "logz/rng.hpp"
#include "logz/samplers.hpp"

namespace logz {

// F(eta) = sum_m A_m eta^{beta_m} with A_m >= 0 and beta_m > 1; bounds the
// coupled-difference second moment E ||X^eta - X^0||^2.
struct VarianceModel {
  struct Term {
    double coeff;
    double exponent;
  };
  std::vector<Term> terms;

  double operator()(double eta) const;
  // Largest eta in (0, eta_hi] with F(eta) <= target (F is increasing).
  // Returns eta_hi when even F(eta_hi) <= target.
  double eta_for(double target, double eta_hi) const;
  void validate() const;
};

VarianceModel uld_variance_model(const Potential& stage, double variance_const);
VarianceModel rmm_variance_model(const Potential& stage, double variance_const,
                                 double log_factor);
VarianceModel stage_variance_model(SamplerFamily family, const Potential& stage,
                                   const SamplerSettings& settings, double log_factor = 1.0);

// Desk-scale caps; 0 disables a cap.  Plans touched by a cap are stamped.
struct PlanCaps {
  long long max_samples_level0 = 0;  // scales the whole N_j vector down
  long long max_chain_steps = 0;     // per-chain step budget at the finest level
  int max_levels = 0;                // clamp on k (must be <= 60)
};

struct LevelPlan {
  double eta0 = 0.0;
  int k = 0;
  std::vector<double> etas;       // eta_j = eta0 / 2^j, j = 0..k
  std::vector<long long> samples; // N_j, j = 0..k
  double T = 0.0;                 // shared horizon, integer multiple of eta0
  long long steps_coarsest = 0;   // T / eta0
  double eps_b = 0.0;
  double eps_sigma = 0.0;
  bool capped = false;
  std::vector<std::string> cap_notes;
};

// Plans the multilevel geometry: eta0 solves F(eta) = c/4 by bisection
// (clamped to eta_max), k is the smallest level with
// F(eta_k) <= eps_b^2 / (4 L_g^2), N_j = ceil((4 C_F L_g^2 / eps_sigma^2)
// sqrt(F(eta0) eta_j F(eta_j) / eta0)), and T = t_of_eps(eps_b / L_g)
// rounded up to a multiple of eta0 (every level then takes an integer
// number of steps).  k > 60 without an explicit cap is rejected.
LevelPlan plan_levels(const VarianceModel& model, double L_g, double c_poincare, double eps_b,
                      double eps_sigma, double eta_max,
                      const std::function<double(double)>& t_of_eps, double c_f = 4.0,
                      const PlanCaps& caps = {});

long long predicted_queries(const LevelPlan& plan, int grad_cost_per_step);

struct MlmcEstimate {
  double r_hat = 0.0;
  std::vector<double> level_means;
  std::vector<double> level_variances;  // sample variances of the per-level terms
  std::vector<long long> level_samples;
  std::uint64_t queries = 0;  // gradient queries, when a counter is supplied
};

struct MlmcError : std::runtime_error {
  explicit MlmcError(const std::string& what) : std::runtime_error(what) {}
};

using SingleRunner = std::function<VectorXd(double eta, double T, RngStream)>;
using CoupledRunner = std::function<CoupledPair(double eta_coarse, double T, RngStream)>;
using Observable = std::function<double(const VectorXd&)>;

// Telescoping estimator over coupled runs.  Level 0 takes N_0 independent
// samples at eta0; level j >= 1 takes N_j coupled pairs at coarse step
// eta_{j-1} and adds g(fine) - g(coarse).  Per-sample streams are derived
// from (level, sample), and the reduction runs level-major then
// sample-major, so results are identical for any thread count.
MlmcEstimate mlmc_estimate(const CoupledRunner& coupled, const SingleRunner& single,
                           const Observable& g, const LevelPlan& plan, RngStream stream,
                           int threads = 1, const QueryCounter* counter = nullptr);

// Fits per-term coefficients A_m of a variance model by regressing pilot
// coupled-difference second moments at the given steps.  Advisory output:
// callers must opt in explicitly before it replaces configured constants.
std::vector<double> calibrate_variance_model(const CoupledRunner& coupled, const Observable& g,
                                             const std::vector<double>& etas, double T,
                                             long long samples_per_eta,
                                             const std::vector<double>& exponents,
                                             RngStream stream, int threads = 1);

}  // namespace logz
