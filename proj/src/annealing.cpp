#include "logz/annealing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "logz/parallel.hpp"

namespace logz {

namespace {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// stream path constants inside one stage
constexpr std::uint64_t kRadiusStream = 0;
constexpr std::uint64_t kRatioStream = 1;
constexpr std::uint64_t kPilotStream = 0;
constexpr std::uint64_t kMlmcStream = 1;

}  // namespace

AnnealSchedule build_schedule(int d, double mu, double L, double eps, int max_stages) {
  if (d < 1) throw std::invalid_argument("schedule: d must be >= 1");
  if (!(mu > 0.0) || !(L >= mu)) throw std::invalid_argument("schedule: need L >= mu > 0");
  if (!(eps > 0.0 && eps <= 0.5))
    throw std::invalid_argument("schedule: eps must lie in (0, 1/2]");

  AnnealSchedule s;
  s.eps = eps;
  const double log8e = std::log(8.0 / eps);
  s.alpha = std::min(std::log(2.0) / (2.0 * std::sqrt(static_cast<double>(d)) * log8e), 0.25);
  s.sigma1_sq = eps / (8.0 * d * L);
  s.sigma_max_sq = 4.0 * std::max(std::sqrt(static_cast<double>(d)), std::sqrt(log8e)) *
                   std::max(1.0, 1.0 / std::sqrt(mu)) / mu;
  double span = std::log(s.sigma_max_sq / s.sigma1_sq);
  s.M = static_cast<int>(std::ceil(span / std::log1p(s.alpha))) + 1;
  if (max_stages > 0 && s.M > max_stages) {
    s.M = std::max(1, max_stages);
    if (s.M > 1) s.alpha = std::expm1(span / static_cast<double>(s.M - 1));
    s.alpha_raised_by_cap = true;
  }
  s.sigmas_sq.resize(s.M);
  double v = s.sigma1_sq;
  for (int i = 0; i < s.M; ++i) {
    s.sigmas_sq[i] = v;
    v *= (1.0 + s.alpha);
  }
  return s;
}

ErrorBudget make_error_budget(double eps, int M) {
  if (!(eps > 0.0) || M < 1) throw std::invalid_argument("invalid error budget inputs");
  ErrorBudget b;
  b.eps = eps;
  b.M = M;
  b.eps1 = eps / 8.0;
  b.eps_b_rel = eps / (16.0 * M);
  b.eps_sigma_rel = eps / (128.0 * std::sqrt(static_cast<double>(M)));
  return b;
}

double log_z1(const AnnealSchedule& schedule, int d) {
  return 0.5 * d * std::log(2.0 * M_PI * schedule.sigma1_sq);
}

double estimate_z1(const AnnealSchedule& schedule, int d) {
  return std::exp(log_z1(schedule, d));
}

double TruncatedRatio::log_value_norm(double norm_x) const {
  double sq = std::min(norm_x * norm_x, r_plus * r_plus);
  return sq / denom;
}

double TruncatedRatio::log_value(const VectorXd& x) const {
  double sq = std::min(x.squaredNorm(), r_plus * r_plus);
  return sq / denom;
}

double TruncatedRatio::operator()(const VectorXd& x) const { return std::exp(log_value(x)); }

TruncatedRatio make_truncated_ratio(const AnnealSchedule& schedule, int stage, double r_plus,
                                    double base_mu) {
  if (stage < 1 || stage > schedule.M) throw std::invalid_argument("stage out of range");
  if (!(r_plus > 0.0)) throw std::invalid_argument("r_plus must be > 0");
  TruncatedRatio t;
  t.sigma_i_sq = schedule.sigmas_sq[stage - 1];
  t.r_plus = r_plus;
  if (stage < schedule.M) {
    t.alpha_eff = schedule.alpha;
    t.denom = 2.0 * t.sigma_i_sq * (1.0 + 1.0 / schedule.alpha);
    t.l_h = 112.0 * std::exp(1.0) / std::sqrt(t.sigma_i_sq);
  } else {
    t.alpha_eff = std::numeric_limits<double>::infinity();
    t.denom = 2.0 * t.sigma_i_sq;
    t.l_h = 2.0 * std::exp(2.0) * std::sqrt(base_mu);
  }
  t.log_cap = r_plus * r_plus / t.denom;
  t.exact_lipschitz =
      t.log_cap < 700.0 ? (2.0 * r_plus / t.denom) * std::exp(t.log_cap)
                        : std::numeric_limits<double>::infinity();
  return t;
}

std::pair<double, double> estimate_radius(const Potential& next_stage,
                                          const AnnealSchedule& schedule, int stage,
                                          double base_mu, SamplerFamily family,
                                          RngStream stream, const PipelineConfig& cfg) {
  const bool last = stage == schedule.M;
  const double sigma_i = std::sqrt(schedule.sigmas_sq[stage - 1]);
  const double eps_w = last ? 1.0 / (8.0 * std::sqrt(base_mu)) : sigma_i / 8.0;

  auto [eta, T] = accuracy_driven_params(family, next_stage, eps_w, cfg.sampler);
  if (cfg.max_chain_steps > 0) {
    long long steps = std::llround(T / eta);
    if (steps > cfg.max_chain_steps) {
      steps = cfg.max_chain_steps;
      eta = T / static_cast<double>(steps);
    }
  }

  long long samples = (1LL << 10) * schedule.M;
  if (cfg.max_radius_samples > 0) samples = std::min(samples, cfg.max_radius_samples);

  const VectorXd x0 = next_stage.minimizer();
  std::vector<double> norms(samples, 0.0);
  parallel_for(static_cast<std::size_t>(samples), cfg.threads, [&](std::size_t j) {
    VectorXd x = run_single(family, x0, next_stage, eta, T, stream.child(j));
    double nrm = x.norm();
    if (!std::isfinite(nrm)) throw SamplerError("radius estimation produced non-finite norm");
    norms[j] = nrm;
  });
  double sum = 0.0;
  for (double v : norms) sum += v;
  double r_hat = sum / static_cast<double>(samples);

  const double log8e = std::log(8.0 / schedule.eps);
  double r_plus;
  if (last)
    r_plus = r_hat + std::sqrt(2.0 * log8e) / std::sqrt(base_mu) + 0.25;
  else
    r_plus = r_hat + sigma_i * std::sqrt(2.0 * (1.0 + schedule.alpha) * log8e) + 0.25;
  return {r_hat, r_plus};
}

StageRatioResult estimate_stage_ratio(const Potential& stage_potential,
                                      const TruncatedRatio& ratio, const ErrorBudget& budget,
                                      SamplerFamily family, RngStream stream,
                                      const PipelineConfig& cfg, const QueryCounter* counter) {
  const double mu_i = stage_potential.mu();
  const double c_poincare = 1.0 / mu_i;
  const double eta_max = eta_admissible_max(family, stage_potential, cfg.sampler);
  const double log_factor =
      std::log(std::max(2.0, ratio.l_h * ratio.l_h * stage_potential.dim() /
                                 (budget.eps_b_rel * budget.eps_b_rel * mu_i)));
  VarianceModel model = stage_variance_model(family, stage_potential, cfg.sampler, log_factor);
  auto t_of_eps = [&](double e) { return mixing_time(family, stage_potential, e); };
  PlanCaps caps{cfg.max_samples_level0, cfg.max_chain_steps, cfg.max_levels};

  const VectorXd x0 = stage_potential.minimizer();
  auto single = [&](double eta, double T, RngStream rs) {
    return run_single(family, x0, stage_potential, eta, T, std::move(rs));
  };
  auto coupled = [&](double eta, double T, RngStream rs) {
    return run_coupled(family, x0, stage_potential, eta, T, std::move(rs));
  };
  Observable g = [&ratio](const VectorXd& x) { return ratio(x); };

  StageRatioResult out;

  // Pilot pass: estimate the scale of h_i so the relative budgets become
  // absolute ones (g_i >= 1 pointwise, so the scale is at least 1).  Pilot
  // draws are excluded from the final estimate.
  LevelPlan pilot_plan = plan_levels(model, ratio.l_h, c_poincare, budget.eps_b_rel,
                                     budget.eps_sigma_rel, eta_max, t_of_eps, cfg.c_f, caps);
  std::uint64_t pilot_before = counter ? counter->grads() : 0;
  RngStream pilot_stream = stream.child(kPilotStream);
  long long n_pilot = std::max<long long>(2, cfg.pilot_samples);
  std::vector<double> pilot_vals(n_pilot, 0.0);
  parallel_for(static_cast<std::size_t>(n_pilot), cfg.threads, [&](std::size_t i) {
    pilot_vals[i] = g(single(pilot_plan.eta0, pilot_plan.T, pilot_stream.child(i)));
  });
  double pilot_sum = 0.0;
  for (double v : pilot_vals) pilot_sum += v;
  out.pilot_scale = std::max(1.0, pilot_sum / static_cast<double>(n_pilot));
  out.queries_pilot = counter ? counter->grads() - pilot_before : 0;

  const double s = out.pilot_scale;
  out.plan = plan_levels(model, ratio.l_h * s, c_poincare, budget.eps_b_rel * s,
                         budget.eps_sigma_rel * s, eta_max, t_of_eps, cfg.c_f, caps);
  out.estimate = mlmc_estimate(coupled, single, g, out.plan, stream.child(kMlmcStream),
                               cfg.threads, counter);
  out.r_hat = out.estimate.r_hat;
  if (!(out.r_hat > 0.0) || !std::isfinite(out.r_hat))
    throw MlmcError("stage ratio estimate is not positive and finite: " +
                    std::to_string(out.r_hat));
  return out;
}

namespace {

void fill_run_header(RunReport& rep, const Potential& base, double eps, std::uint64_t seed,
                     const std::string& method) {
  rep.method = method;
  rep.seed = seed;
  rep.eps = eps;
  rep.d = base.dim();
  rep.mu = base.mu();
  rep.smoothness = base.smoothness();
}

}  // namespace

RunReport run_pipeline(PotentialPtr base, double eps, SamplerFamily family, std::uint64_t seed,
                       const PipelineConfig& cfg) {
  if (!(eps > 0.0 && eps <= 0.5))
    throw std::invalid_argument("run_pipeline: eps must lie in (0, 1/2]");
  double t_start = now_seconds();

  auto counted = wrap_counting(base);
  const auto& counter = *counted->counter();

  RunReport rep;
  fill_run_header(rep, *base, eps, seed,
                  family == SamplerFamily::uld ? "mlmc-uld" : "mlmc-rmm");
  rep.schedule = build_schedule(base->dim(), base->mu(), base->smoothness(), eps,
                                cfg.max_stages);
  if (rep.schedule.alpha_raised_by_cap) {
    rep.budget_capped = true;
    rep.cap_notes.push_back("alpha raised by max_stages");
  }
  if (cfg.max_radius_samples > 0) {
    rep.budget_capped = true;
    rep.cap_notes.push_back("radius samples capped");
  }
  ErrorBudget budget = make_error_budget(eps, rep.schedule.M);
  rep.log_z1_value = log_z1(rep.schedule, base->dim());
  double log_z = rep.log_z1_value;

  RngStream root = RngStream::from_seed(seed);
  for (int i = 1; i <= rep.schedule.M; ++i) {
    double t_stage = now_seconds();
    StageRecord rec;
    rec.index = i;
    rec.sigma_sq = rep.schedule.sigmas_sq[i - 1];
    try {
      auto stage_pot = make_annealed_stage(counted, rep.schedule.sigmas_sq[i - 1]);
      PotentialPtr next_pot =
          i < rep.schedule.M
              ? PotentialPtr(make_annealed_stage(counted, rep.schedule.sigmas_sq[i]))
              : PotentialPtr(counted);
      RngStream stage_stream = root.child(i);

      std::uint64_t q0 = counter.grads();
      auto [r_hat, r_plus] =
          estimate_radius(*next_pot, rep.schedule, i, base->mu(), family,
                          stage_stream.child(kRadiusStream), cfg);
      rec.queries_radius = counter.grads() - q0;
      rec.r_hat = r_hat;
      rec.r_plus = r_plus;

      TruncatedRatio ratio = make_truncated_ratio(rep.schedule, i, r_plus, base->mu());
      rec.alpha_eff = ratio.alpha_eff;
      StageRatioResult res =
          estimate_stage_ratio(*stage_pot, ratio, budget, family,
                               stage_stream.child(kRatioStream), cfg, &counter);
      rec.r_ratio = res.r_hat;
      rec.log_r_ratio = std::log(res.r_hat);
      rec.pilot_scale = res.pilot_scale;
      rec.eta0 = res.plan.eta0;
      rec.levels = res.plan.k;
      rec.T = res.plan.T;
      rec.samples = res.plan.samples;
      rec.level_means = res.estimate.level_means;
      rec.level_variances = res.estimate.level_variances;
      rec.queries_pilot = res.queries_pilot;
      rec.queries_mlmc = res.estimate.queries;
      rec.queries_mlmc_predicted =
          predicted_queries(res.plan, grad_cost_per_step(family));
      if (res.plan.capped) {
        rep.budget_capped = true;
        for (const auto& note : res.plan.cap_notes) {
          if (std::find(rep.cap_notes.begin(), rep.cap_notes.end(), note) ==
              rep.cap_notes.end())
            rep.cap_notes.push_back(note);
        }
      }
      log_z += rec.log_r_ratio;
    } catch (const std::exception& e) {
      rec.seconds = now_seconds() - t_stage;
      rep.stages.push_back(rec);
      rep.failed_stage = i;
      rep.failure = e.what();
      break;
    }
    rec.seconds = now_seconds() - t_stage;
    rep.stages.push_back(rec);
  }

  rep.log_z_hat = log_z;
  rep.z_hat = std::exp(log_z);
  rep.value_queries = counter.values();
  rep.grad_queries = counter.grads();
  rep.wall_seconds = now_seconds() - t_start;
  return rep;
}

RunReport run_mala_pipeline(PotentialPtr base, double eps, std::uint64_t seed,
                            const PipelineConfig& cfg) {
  if (!(eps > 0.0 && eps <= 0.5))
    throw std::invalid_argument("run_mala_pipeline: eps must lie in (0, 1/2]");
  double t_start = now_seconds();

  auto counted = wrap_counting(base);
  const auto& counter = *counted->counter();
  const int d = base->dim();
  const double L = base->smoothness();
  const double kappa = base->kappa();

  RunReport rep;
  fill_run_header(rep, *base, eps, seed, "mala");

  // ladder per the MALA pipeline: sigma_1^2 = eps/(2dL), multiplier 1 + 1/sqrt(d)
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  rep.schedule.eps = eps;
  rep.schedule.sigma1_sq = eps / (2.0 * d * L);
  rep.schedule.alpha = 1.0 / sqrt_d;
  rep.schedule.M = static_cast<int>(
      std::ceil(std::log(2.0 * std::pow(d, 1.5) * kappa / eps) / std::log1p(1.0 / sqrt_d)));
  rep.schedule.M = std::max(1, rep.schedule.M);
  rep.schedule.sigma_max_sq =
      rep.schedule.sigma1_sq * std::pow(1.0 + rep.schedule.alpha, rep.schedule.M - 1);
  rep.schedule.sigmas_sq.resize(rep.schedule.M);
  {
    double v = rep.schedule.sigma1_sq;
    for (int i = 0; i < rep.schedule.M; ++i) {
      rep.schedule.sigmas_sq[i] = v;
      v *= (1.0 + rep.schedule.alpha);
    }
  }
  const int M = rep.schedule.M;

  long long K = static_cast<long long>(std::ceil(1200.0 * M / (eps * eps)));
  if (cfg.mala_max_samples > 0 && K > cfg.mala_max_samples) {
    K = cfg.mala_max_samples;
    rep.budget_capped = true;
    rep.cap_notes.push_back("mala K capped");
  }
  const double delta = 1.0 / (4.0 * static_cast<double>(M) * static_cast<double>(K));

  rep.log_z1_value = 0.5 * d * std::log(2.0 * M_PI * rep.schedule.sigma1_sq);
  double log_z = rep.log_z1_value;

  RngStream root = RngStream::from_seed(seed);
  for (int i = 1; i <= M; ++i) {
    double t_stage = now_seconds();
    StageRecord rec;
    rec.index = i;
    rec.sigma_sq = rep.schedule.sigmas_sq[i - 1];
    double inv_next = i < M ? 1.0 / rep.schedule.sigmas_sq[i] : 0.0;
    rec.alpha_eff = i < M ? rep.schedule.alpha : std::numeric_limits<double>::infinity();
    try {
      auto stage_pot = make_annealed_stage(counted, rec.sigma_sq);
      const double l_i = stage_pot->smoothness();
      const double kappa_i = stage_pot->kappa();
      const double shape = std::max(1.0, std::sqrt(kappa_i / d));
      const double h = cfg.mala_step_c / (l_i * d * shape);
      const long long n = static_cast<long long>(std::ceil(
          cfg.mala_steps_const * d * kappa_i * std::log(d / delta) * shape));
      rec.mala_h = h;
      rec.mala_n = n;
      rec.mala_k = K;

      const double tilt = 0.5 * (1.0 / rec.sigma_sq - inv_next);
      const double init_sd = 1.0 / std::sqrt(l_i);
      const VectorXd x_center = stage_pot->minimizer();
      RngStream stage_stream = root.child(i);

      std::uint64_t q0 = counter.grads();
      std::vector<double> vals(K, 0.0);
      std::vector<long long> accepted(K, 0), proposals(K, 0);
      parallel_for(static_cast<std::size_t>(K), cfg.threads, [&](std::size_t k) {
        RngStream s = stage_stream.child(k);
        VectorXd x0(d);
        s.fill_normal(x0);
        x0 = x_center + init_sd * x0;
        MalaStats stats;
        VectorXd x = mala_chain(x0, *stage_pot, h, n, s, &stats);
        vals[k] = std::exp(tilt * x.squaredNorm());
        accepted[k] = stats.accepted;
        proposals[k] = stats.proposals;
      });
      double sum = 0.0;
      for (double v : vals) sum += v;
      double g_hat = sum / static_cast<double>(K);
      if (!(g_hat > 0.0) || !std::isfinite(g_hat))
        throw MlmcError("mala stage ratio is not positive and finite");
      long long acc = 0, prop = 0;
      for (long long a : accepted) acc += a;
      for (long long p : proposals) prop += p;
      rec.mala_accept_rate = prop > 0 ? static_cast<double>(acc) / prop : 0.0;
      rec.r_ratio = g_hat;
      rec.log_r_ratio = std::log(g_hat);
      rec.queries_mlmc = counter.grads() - q0;
      log_z += rec.log_r_ratio;
    } catch (const std::exception& e) {
      rec.seconds = now_seconds() - t_stage;
      rep.stages.push_back(rec);
      rep.failed_stage = i;
      rep.failure = e.what();
      break;
    }
    rec.seconds = now_seconds() - t_stage;
    rep.stages.push_back(rec);
  }

  rep.log_z_hat = log_z;
  rep.z_hat = std::exp(log_z);
  rep.value_queries = counter.values();
  rep.grad_queries = counter.grads();
  rep.wall_seconds = now_seconds() - t_start;
  return rep;
}

bool combine_error_check(const CombineInputs& in, double eps1, double eps2, double eps3) {
  if (!(eps1 > 0.0 && eps2 > 0.0 && eps3 > 0.0)) return false;
  const std::size_t m = in.r_true.size();
  if (in.r_tilde.size() != m || in.bias_bound.size() != m || in.variance.size() != m)
    return false;
  if (in.z1_ratio_lo < std::exp(-eps1) || in.z1_ratio_hi > std::exp(eps1)) return false;
  const double dm = static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (in.bias_bound[i] > eps2 * in.r_true[i] / (2.0 * dm)) return false;
    if (in.variance[i] > eps3 * eps3 * in.r_tilde[i] * in.r_tilde[i] / (40.0 * dm)) return false;
  }
  return true;
}

std::string RunReport::to_json(bool strip_timing) const {
  json j;
  j["method"] = method;
  j["seed"] = seed;
  j["eps"] = eps;
  j["target"] = {{"d", d}, {"mu", mu}, {"L", smoothness}};
  j["schedule"] = {{"sigma1_sq", schedule.sigma1_sq},
                   {"alpha", schedule.alpha},
                   {"sigma_max_sq", schedule.sigma_max_sq},
                   {"M", schedule.M},
                   {"alpha_raised_by_cap", schedule.alpha_raised_by_cap}};
  j["log_z1"] = log_z1_value;
  j["log_z_hat"] = log_z_hat;
  j["z_hat"] = z_hat;
  j["budget_capped"] = budget_capped;
  j["cap_notes"] = cap_notes;
  j["queries"] = {{"value", value_queries}, {"grad", grad_queries}};
  if (failed_stage > 0) {
    j["failed_stage"] = failed_stage;
    j["failure"] = failure;
  }
  json stages_json = json::array();
  for (const auto& s : stages) {
    json sj;
    sj["stage"] = s.index;
    sj["sigma_sq"] = s.sigma_sq;
    sj["alpha_eff"] = std::isinf(s.alpha_eff) ? json("inf") : json(s.alpha_eff);
    sj["r_hat"] = s.r_hat;
    sj["r_plus"] = s.r_plus;
    sj["R_hat"] = s.r_ratio;
    sj["log_R_hat"] = s.log_r_ratio;
    if (method == "mala") {
      sj["h"] = s.mala_h;
      sj["n_steps"] = s.mala_n;
      sj["K"] = s.mala_k;
      sj["accept_rate"] = s.mala_accept_rate;
    } else {
      sj["pilot_scale"] = s.pilot_scale;
      sj["eta0"] = s.eta0;
      sj["k"] = s.levels;
      sj["T"] = s.T;
      sj["Ns"] = s.samples;
      sj["level_means"] = s.level_means;
      sj["level_variances"] = s.level_variances;
      sj["queries_radius"] = s.queries_radius;
      sj["queries_pilot"] = s.queries_pilot;
      sj["queries_mlmc_predicted"] = s.queries_mlmc_predicted;
    }
    sj["queries_mlmc"] = s.queries_mlmc;
    if (!strip_timing) sj["seconds"] = s.seconds;
    stages_json.push_back(std::move(sj));
  }
  j["stages"] = std::move(stages_json);
  if (!strip_timing) j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

std::string RunReport::stage_csv() const {
  std::ostringstream oss;
  oss << "stage,sigma_i2,r_hat,r_plus,R_hat,queries,seconds\n";
  for (const auto& s : stages) {
    std::uint64_t q = s.queries_radius + s.queries_pilot + s.queries_mlmc;
    oss << s.index << ',' << fmt17(s.sigma_sq) << ',' << fmt17(s.r_hat) << ','
        << fmt17(s.r_plus) << ',' << fmt17(s.r_ratio) << ',' << q << ','
        << fmt17(s.seconds) << '\n';
  }
  return oss.str();
}

}  // namespace logz
