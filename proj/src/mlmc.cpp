#include "logz/mlmc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "logz/parallel.hpp"

namespace logz {

double VarianceModel::operator()(double eta) const {
  double f = 0.0;
  for (const Term& t : terms) f += t.coeff * std::pow(eta, t.exponent);
  return f;
}

void VarianceModel::validate() const {
  if (terms.empty()) throw std::invalid_argument("variance model needs at least one term");
  double total = 0.0;
  for (const Term& t : terms) {
    if (t.coeff < 0.0) throw std::invalid_argument("variance model coefficients must be >= 0");
    if (!(t.exponent > 1.0))
      throw std::invalid_argument("variance model exponents must be > 1");
    total += t.coeff;
  }
  if (!(total > 0.0)) throw std::invalid_argument("variance model must have a positive term");
}

double VarianceModel::eta_for(double target, double eta_hi) const {
  if (!(target > 0.0)) throw std::invalid_argument("variance target must be > 0");
  if ((*this)(eta_hi) <= target) return eta_hi;
  double lo = 0.0, hi = eta_hi;
  // F is increasing with F(0) = 0, so the root is bracketed.
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if ((*this)(mid) <= target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-9 * hi) break;
  }
  return lo > 0.0 ? lo : hi;
}

VarianceModel uld_variance_model(const Potential& stage, double variance_const) {
  const double kappa = stage.kappa();
  const double d_over_mu = static_cast<double>(stage.dim()) / stage.mu();
  return VarianceModel{{{variance_const * kappa * kappa * d_over_mu, 2.0}}};
}

VarianceModel rmm_variance_model(const Potential& stage, double variance_const,
                                 double log_factor) {
  const double kappa = stage.kappa();
  const double d_over_mu = static_cast<double>(stage.dim()) / stage.mu();
  const double lf = std::max(1.0, log_factor);
  return VarianceModel{{{variance_const * d_over_mu * lf, 3.0},
                        {variance_const * kappa * d_over_mu * lf, 6.0}}};
}

VarianceModel stage_variance_model(SamplerFamily family, const Potential& stage,
                                   const SamplerSettings& settings, double log_factor) {
  return family == SamplerFamily::uld
             ? uld_variance_model(stage, settings.uld_variance_const)
             : rmm_variance_model(stage, settings.rmm_variance_const, log_factor);
}

LevelPlan plan_levels(const VarianceModel& model, double L_g, double c_poincare, double eps_b,
                      double eps_sigma, double eta_max,
                      const std::function<double(double)>& t_of_eps, double c_f,
                      const PlanCaps& caps) {
  model.validate();
  if (!(eps_b > 0.0)) throw std::invalid_argument("bias budget eps_b must be > 0");
  if (!(eps_sigma > 0.0)) throw std::invalid_argument("std budget eps_sigma must be > 0");
  if (!(L_g > 0.0)) throw std::invalid_argument("Lipschitz constant L_g must be > 0");
  if (!(c_poincare > 0.0)) throw std::invalid_argument("Poincare constant must be > 0");
  if (!(eta_max > 0.0)) throw std::invalid_argument("eta_max must be > 0");

  LevelPlan plan;
  plan.eps_b = eps_b;
  plan.eps_sigma = eps_sigma;
  plan.eta0 = model.eta_for(0.25 * c_poincare, eta_max);

  double t_raw = t_of_eps(eps_b / L_g);
  long long steps0 = std::max<long long>(
      1, static_cast<long long>(std::ceil(t_raw / plan.eta0 - 1e-12)));
  if (caps.max_chain_steps > 0 && steps0 > caps.max_chain_steps) {
    // coarsest chain alone exceeds the budget: stretch eta0 to fit
    steps0 = caps.max_chain_steps;
    plan.eta0 = std::max(t_raw, plan.eta0) / static_cast<double>(steps0);
    plan.capped = true;
    plan.cap_notes.push_back("eta0 raised to honor max_chain_steps");
  }
  plan.steps_coarsest = steps0;
  plan.T = static_cast<double>(steps0) * plan.eta0;

  const double bias_target = eps_b * eps_b / (4.0 * L_g * L_g);
  int k = 0;
  double eta_k = plan.eta0;
  while (model(eta_k) > bias_target) {
    ++k;
    eta_k *= 0.5;
    if (k > 200) break;
  }
  if (k > 60) {
    if (caps.max_levels > 0) {
      k = std::min(caps.max_levels, 60);
      plan.capped = true;
      plan.cap_notes.push_back("k clamped by max_levels");
    } else {
      throw std::invalid_argument("plan_levels: k > 60 (pathological bias budget)");
    }
  } else if (caps.max_levels > 0 && k > caps.max_levels) {
    k = caps.max_levels;
    plan.capped = true;
    plan.cap_notes.push_back("k clamped by max_levels");
  }
  if (caps.max_chain_steps > 0) {
    while (k > 0 && steps0 * (1LL << k) > caps.max_chain_steps) --k;
    if (model(plan.eta0 / std::pow(2.0, k)) > bias_target && !plan.capped) {
      plan.capped = true;
      plan.cap_notes.push_back("k clamped by max_chain_steps");
    }
  }
  plan.k = k;

  plan.etas.resize(k + 1);
  for (int j = 0; j <= k; ++j) plan.etas[j] = plan.eta0 / std::pow(2.0, j);

  const double f0 = model(plan.eta0);
  const double n_scale = 4.0 * c_f * L_g * L_g / (eps_sigma * eps_sigma);
  std::vector<double> n_raw(k + 1);
  for (int j = 0; j <= k; ++j) {
    double fj = model(plan.etas[j]);
    n_raw[j] = n_scale * std::sqrt(f0 * plan.etas[j] * fj / plan.eta0);
  }
  double scale = 1.0;
  if (caps.max_samples_level0 > 0 && n_raw[0] > static_cast<double>(caps.max_samples_level0)) {
    // keep the optimal level allocation, shrink everything proportionally
    scale = static_cast<double>(caps.max_samples_level0) / n_raw[0];
    plan.capped = true;
    plan.cap_notes.push_back("N_j scaled by max_samples_level0");
  }
  plan.samples.resize(k + 1);
  for (int j = 0; j <= k; ++j)
    plan.samples[j] = std::max<long long>(1, static_cast<long long>(std::ceil(n_raw[j] * scale - 1e-9)));
  return plan;
}

long long predicted_queries(const LevelPlan& plan, int cost) {
  long long total = plan.samples[0] * plan.steps_coarsest * cost;
  for (int j = 1; j <= plan.k; ++j) {
    long long fine_steps = plan.steps_coarsest << j;
    long long coarse_steps = plan.steps_coarsest << (j - 1);
    total += plan.samples[j] * (fine_steps + coarse_steps) * cost;
  }
  return total;
}

MlmcEstimate mlmc_estimate(const CoupledRunner& coupled, const SingleRunner& single,
                           const Observable& g, const LevelPlan& plan, RngStream stream,
                           int threads, const QueryCounter* counter) {
  MlmcEstimate est;
  est.level_means.resize(plan.k + 1);
  est.level_variances.resize(plan.k + 1);
  est.level_samples = plan.samples;
  std::uint64_t grads_before = counter ? counter->grads() : 0;

  std::vector<std::vector<double>> values(plan.k + 1);
  for (int j = 0; j <= plan.k; ++j) {
    const long long n = plan.samples[j];
    values[j].assign(n, 0.0);
    RngStream level_stream = stream.child(j);
    if (j == 0) {
      parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        VectorXd x = single(plan.eta0, plan.T, level_stream.child(i));
        double v = g(x);
        if (!std::isfinite(v)) {
          std::ostringstream oss;
          oss << "mlmc: non-finite observable at level 0, sample " << i;
          throw MlmcError(oss.str());
        }
        values[0][i] = v;
      });
    } else {
      const double eta_coarse = plan.etas[j - 1];
      parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        CoupledPair pair = coupled(eta_coarse, plan.T, level_stream.child(i));
        double vf = g(pair.x_fine);
        double vc = g(pair.x_coarse);
        if (!std::isfinite(vf) || !std::isfinite(vc)) {
          std::ostringstream oss;
          oss << "mlmc: non-finite observable at level " << j << ", sample " << i;
          throw MlmcError(oss.str());
        }
        values[j][i] = vf - vc;
      });
    }
  }

  // fixed level-major then sample-order reduction
  double r_hat = 0.0;
  for (int j = 0; j <= plan.k; ++j) {
    const auto& v = values[j];
    double sum = 0.0;
    for (double x : v) sum += x;
    double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    est.level_means[j] = mean;
    est.level_variances[j] = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
    r_hat += mean;
  }
  est.r_hat = r_hat;
  if (counter) est.queries = counter->grads() - grads_before;
  return est;
}

std::vector<double> calibrate_variance_model(const CoupledRunner& coupled, const Observable& g,
                                             const std::vector<double>& etas, double T,
                                             long long samples_per_eta,
                                             const std::vector<double>& exponents,
                                             RngStream stream, int threads) {
  if (etas.size() < exponents.size())
    throw std::invalid_argument("calibration needs at least one eta per exponent");
  // second moments of the coupled differences at each pilot step size
  std::vector<double> moments(etas.size(), 0.0);
  for (std::size_t e = 0; e < etas.size(); ++e) {
    std::vector<double> sq(samples_per_eta, 0.0);
    RngStream es = stream.child(e);
    parallel_for(static_cast<std::size_t>(samples_per_eta), threads, [&](std::size_t i) {
      CoupledPair pair = coupled(etas[e], T, es.child(i));
      double diff = g(pair.x_fine) - g(pair.x_coarse);
      sq[i] = diff * diff;
    });
    double sum = 0.0;
    for (double x : sq) sum += x;
    moments[e] = sum / static_cast<double>(samples_per_eta);
  }
  // least squares for coefficients of sum_m A_m eta^{beta_m} (normal equations;
  // the design is tiny)
  const int m = static_cast<int>(exponents.size());
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(m);
  for (std::size_t r = 0; r < etas.size(); ++r) {
    Eigen::VectorXd row(m);
    for (int c = 0; c < m; ++c) row[c] = std::pow(etas[r] * 0.5, exponents[c]);
    ata += row * row.transpose();
    atb += row * moments[r];
  }
  Eigen::VectorXd sol = ata.ldlt().solve(atb);
  std::vector<double> out(m);
  for (int c = 0; c < m; ++c) out[c] = std::max(0.0, sol[c]);
  return out;
}

}  // namespace logz
