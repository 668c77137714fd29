#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "logz/mlmc.hpp"
#include "logz/potentials.hpp"
#include "logz/rng.hpp"
#include "logz/samplers.hpp"

namespace logz {

// Temperature ladder sigma_i^2 = sigma_1^2 (1 + alpha)^{i-1} with
//   sigma_1^2   = eps / (8 d L)
//   alpha       = min(log 2 / (2 sqrt(d) log(8/eps)), 1/4)
//   sigma_max^2 = 4 (sqrt(d) v sqrt(log(8/eps))) (1 v 1/sqrt(mu)) / mu
//   M           = ceil(log_{1+alpha}(sigma_max^2 / sigma_1^2)) + 1.
// The last stage uses alpha_eff = infinity (g_M = exp(|x|^2 / 2 sigma_M^2)).
struct AnnealSchedule {
  double eps = 0.0;
  double sigma1_sq = 0.0;
  double alpha = 0.0;
  double sigma_max_sq = 0.0;
  int M = 0;
  std::vector<double> sigmas_sq;  // sigmas_sq[i-1] = sigma_i^2
  bool alpha_raised_by_cap = false;
};

AnnealSchedule build_schedule(int d, double mu, double L, double eps, int max_stages = 0);

// eps splits used by the stage budgets: eps1 = eps/8 for Z_1, per-stage
// relative bias eps/(16M) and relative standard deviation eps/(128 sqrt M).
struct ErrorBudget {
  double eps = 0.0;
  double eps1 = 0.0;
  double eps_b_rel = 0.0;
  double eps_sigma_rel = 0.0;
  int M = 0;
};

ErrorBudget make_error_budget(double eps, int M);

// log (2 pi sigma_1^2)^{d/2}
double log_z1(const AnnealSchedule& schedule, int d);
// (2 pi sigma_1^2)^{d/2}, exponentiated only on output
double estimate_z1(const AnnealSchedule& schedule, int d);

// g_i capped at its value on the sphere of radius r_plus:
//   h_i(x) = min(g_i(x), cap),  g_i(x) = exp(|x|^2 / (2 sigma_i^2 (1+1/alpha)))
// (denominator 2 sigma_i^2 at alpha_eff = infinity).  The cap is stored in
// log domain.  L_h carries the budget Lipschitz bound 112 e / sigma_i for
// i < M and 2 e^2 sqrt(mu) for i = M.
struct TruncatedRatio {
  double sigma_i_sq = 0.0;
  double alpha_eff = 0.0;  // infinity() marks the last stage
  double r_plus = 0.0;
  double denom = 0.0;    // 2 sigma_i^2 (1 + 1/alpha)
  double log_cap = 0.0;  // r_plus^2 / denom
  double l_h = 0.0;      // budget Lipschitz bound
  double exact_lipschitz = 0.0;  // g_r'(r_plus)

  double log_value(const VectorXd& x) const;
  double operator()(const VectorXd& x) const;
  double log_value_norm(double norm_x) const;
};

TruncatedRatio make_truncated_ratio(const AnnealSchedule& schedule, int stage, double r_plus,
                                    double base_mu);

struct PipelineConfig {
  SamplerSettings sampler;
  double c_f = 4.0;
  int threads = 1;
  long long pilot_samples = 32;
  // desk-scale caps (0 = uncapped, reproducing the formulas)
  int max_stages = 0;
  long long max_radius_samples = 0;
  long long max_samples_level0 = 0;
  long long max_chain_steps = 0;
  int max_levels = 0;
  // MALA pipeline knobs
  long long mala_max_samples = 0;  // cap on K
  double mala_step_c = 0.1;        // c in h = c / (L d max{1, sqrt(kappa/d)})
  double mala_steps_const = 1.0;   // C in n = C d kappa log(d/delta) max{1, sqrt(kappa/d)}
};

struct StageRecord {
  int index = 0;
  double sigma_sq = 0.0;
  double alpha_eff = 0.0;
  double r_hat = 0.0;
  double r_plus = 0.0;
  double log_r_ratio = 0.0;  // log R_hat_i
  double r_ratio = 0.0;
  double pilot_scale = 0.0;
  double eta0 = 0.0;
  int levels = 0;
  double T = 0.0;
  std::vector<long long> samples;
  std::vector<double> level_means;
  std::vector<double> level_variances;
  std::uint64_t queries_radius = 0;
  std::uint64_t queries_pilot = 0;
  std::uint64_t queries_mlmc = 0;
  long long queries_mlmc_predicted = 0;
  double seconds = 0.0;
  // MALA pipeline fields
  double mala_h = 0.0;
  long long mala_n = 0;
  long long mala_k = 0;
  double mala_accept_rate = 0.0;
};

struct RunReport {
  std::string method;
  std::uint64_t seed = 0;
  double eps = 0.0;
  int d = 0;
  double mu = 0.0;
  double smoothness = 0.0;
  double log_z1_value = 0.0;
  double log_z_hat = 0.0;
  double z_hat = 0.0;
  AnnealSchedule schedule;
  std::vector<StageRecord> stages;
  std::uint64_t value_queries = 0;
  std::uint64_t grad_queries = 0;
  bool budget_capped = false;
  std::vector<std::string> cap_notes;
  double wall_seconds = 0.0;
  int failed_stage = 0;  // nonzero when a stage aborted
  std::string failure;

  std::string to_json(bool strip_timing = false) const;
  std::string stage_csv() const;
};

// Per-stage MLMC result bundle.
struct StageRatioResult {
  double r_hat = 0.0;
  MlmcEstimate estimate;
  LevelPlan plan;
  double pilot_scale = 0.0;
  std::uint64_t queries_pilot = 0;
};

// Samples S = 2^10 M points from rho_{i+1} (the base target for the last
// stage) at the family's accuracy-driven parameters and returns
// (r_hat, r_plus) per the pipeline's radius rule.
std::pair<double, double> estimate_radius(const Potential& next_stage,
                                          const AnnealSchedule& schedule, int stage,
                                          double base_mu, SamplerFamily family,
                                          RngStream stream, const PipelineConfig& cfg);

StageRatioResult estimate_stage_ratio(const Potential& stage_potential,
                                      const TruncatedRatio& ratio, const ErrorBudget& budget,
                                      SamplerFamily family, RngStream stream,
                                      const PipelineConfig& cfg,
                                      const QueryCounter* counter = nullptr);

RunReport run_pipeline(PotentialPtr base, double eps, SamplerFamily family, std::uint64_t seed,
                       const PipelineConfig& cfg = {});

RunReport run_mala_pipeline(PotentialPtr base, double eps, std::uint64_t seed,
                            const PipelineConfig& cfg = {});

struct CombineInputs {
  double z1_ratio_lo = 1.0;  // bounds on Zhat_1 / Z_1
  double z1_ratio_hi = 1.0;
  std::vector<double> r_true;      // R_i
  std::vector<double> r_tilde;     // E Rhat_i
  std::vector<double> bias_bound;  // |Rtilde_i - R_i|
  std::vector<double> variance;    // Var(Rhat_i)
};

// Verifies the error-composition hypotheses {Zhat_1/Z_1 in [e^{-eps1}, e^{eps1}],
// |Rtilde_i - R_i| <= eps2 R_i / 2M, Var(Rhat_i) <= eps3^2 Rtilde_i^2 / 40M}.
bool combine_error_check(const CombineInputs& in, double eps1, double eps2, double eps3);

}  // namespace logz
