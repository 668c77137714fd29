#include "logz/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace logz {

namespace {

long long steps_for(double eta, double T) {
  if (!(eta > 0.0)) throw std::invalid_argument("step size eta must be > 0");
  if (T < 0.0) throw std::invalid_argument("horizon T must be >= 0");
  double ratio = T / eta;
  long long n = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(n)) > 1e-6 * std::max(1.0, ratio))
    throw std::invalid_argument("horizon T must be an integer multiple of eta");
  return n;
}

void check_gradient(const VectorXd& g, const VectorXd& x, const char* sampler) {
  if (g.allFinite()) return;
  std::ostringstream oss;
  oss << sampler << ": non-finite gradient at position [";
  for (Eigen::Index i = 0; i < x.size(); ++i) oss << (i ? "," : "") << x[i];
  oss << "]";
  throw SamplerError(oss.str());
}

// Deterministic coefficients of one exact ULD step.
struct UldStepCoeffs {
  double decay;    // e^{-2 eta}
  double vel_x;    // (1 - e^{-2 eta}) / 2
  double grad_v;   // (1 - e^{-2 eta}) / (2L)
  double grad_x;   // (eta - (1 - e^{-2 eta})/2) / (2L)
  double noise_v;  // 2 / sqrt(L)
  double noise_x;  // 1 / sqrt(L)
  double eta;
};

UldStepCoeffs uld_coeffs(double eta, double L) {
  UldStepCoeffs c;
  double one_minus = -std::expm1(-2.0 * eta);  // 1 - e^{-2 eta}
  c.decay = std::exp(-2.0 * eta);
  c.vel_x = 0.5 * one_minus;
  c.grad_v = 0.5 * one_minus / L;
  c.grad_x = 0.5 * (eta - 0.5 * one_minus) / L;
  c.noise_v = 2.0 / std::sqrt(L);
  c.noise_x = 1.0 / std::sqrt(L);
  c.eta = eta;
  return c;
}

void uld_step_inplace(VectorXd& x, VectorXd& v, const Potential& stage,
                      const UldStepCoeffs& c, const VectorXd& g, const VectorXd& h,
                      VectorXd& grad_buf, VectorXd& x_buf) {
  stage.grad_into(x, grad_buf);
  check_gradient(grad_buf, x, "uld");
  x_buf = x + c.vel_x * v - c.grad_x * grad_buf + c.noise_x * (h - c.decay * g);
  v = c.decay * v - c.grad_v * grad_buf + (c.noise_v * c.decay) * g;
  x.swap(x_buf);
}

void rmm_step_inplace(VectorXd& x, VectorXd& v, const Potential& stage, double eta,
                      double alpha, const VectorXd& g1, const VectorXd& h1,
                      const VectorXd& g2, const VectorXd& h2, VectorXd& grad_buf,
                      VectorXd& y_buf, VectorXd& x_buf) {
  const double L = stage.smoothness();
  const double u = 1.0 / L;
  const double inv_sqrt_l = 1.0 / std::sqrt(L);
  const double decay_a = std::exp(-2.0 * alpha * eta);
  const double decay = std::exp(-2.0 * eta);
  const double decay_rest = std::exp(-2.0 * (1.0 - alpha) * eta);
  const double one_minus_a = -std::expm1(-2.0 * alpha * eta);
  const double one_minus = -std::expm1(-2.0 * eta);

  stage.grad_into(x, grad_buf);
  check_gradient(grad_buf, x, "rmm");
  // midpoint estimate at time alpha * eta
  y_buf = x + 0.5 * one_minus_a * v -
          0.5 * u * (alpha * eta - 0.5 * one_minus_a) * grad_buf +
          inv_sqrt_l * (h1 - decay_a * g1);

  stage.grad_into(y_buf, grad_buf);
  check_gradient(grad_buf, y_buf, "rmm");
  x_buf = x + 0.5 * one_minus * v - 0.5 * u * eta * (1.0 - decay_rest) * grad_buf +
          inv_sqrt_l * ((h1 + h2) - decay * (g1 + g2));
  v = decay * v - u * eta * decay_rest * grad_buf +
      (2.0 * inv_sqrt_l * decay) * (g1 + g2);
  x.swap(x_buf);
}

// Covariance of the (g2, h2) block on [alpha*eta, eta].
GhCoeffs gh_rest_coeffs(double eta, double alpha) {
  double c11 = 0.25 * std::exp(4.0 * alpha * eta) * std::expm1(4.0 * (1.0 - alpha) * eta);
  double c12 = 0.5 * std::exp(2.0 * alpha * eta) * std::expm1(2.0 * (1.0 - alpha) * eta);
  double c22 = (1.0 - alpha) * eta;
  return chol2(c11, c12, c22, c22);
}

}  // namespace

GhCoeffs chol2(double c11, double c12, double c22, double interval) {
  double det = c11 * c22 - c12 * c12;
  if (det < -1e-12)
    throw SamplerError("gh covariance is not positive semidefinite (det = " +
                       std::to_string(det) + ")");
  GhCoeffs c;
  c.interval = interval;
  if (c11 <= 0.0) return c;  // zero-length interval: g = h = 0
  c.a11 = std::sqrt(c11);
  c.a21 = c12 / c.a11;
  c.a22 = std::sqrt(std::max(0.0, c22 - c.a21 * c.a21));
  return c;
}

GhCoeffs gh_coeffs(double s) {
  if (s < 0.0) throw std::invalid_argument("gh interval must be >= 0");
  double c11 = 0.25 * std::expm1(4.0 * s);
  double c12 = 0.5 * std::expm1(2.0 * s);
  return chol2(c11, c12, s, s);
}

void draw_gh_into(const GhCoeffs& c, RngStream& rng, VectorXd& g, VectorXd& h) {
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    double z1 = rng.normal();
    double z2 = rng.normal();
    g[i] = c.a11 * z1;
    h[i] = c.a21 * z1 + c.a22 * z2;
  }
}

GHPair draw_gh(int dim, double s, RngStream& rng) {
  GHPair gh;
  gh.g.resize(dim);
  gh.h.resize(dim);
  gh.interval = s;
  GhCoeffs c = gh_coeffs(s);
  draw_gh_into(c, rng, gh.g, gh.h);
  return gh;
}

PhasePoint uld_step(const PhasePoint& p, const Potential& stage, const UldParams& params,
                    const GHPair& gh) {
  if (p.x.size() != p.v.size() || p.x.size() != stage.dim())
    throw std::invalid_argument("uld_step: dimension mismatch");
  if (std::abs(gh.interval - params.eta) > 1e-12 * std::max(1.0, params.eta))
    throw std::invalid_argument("uld_step: gh interval must equal eta");
  PhasePoint out{p.x, p.v};
  VectorXd grad_buf(p.x.size()), x_buf(p.x.size());
  UldStepCoeffs c = uld_coeffs(params.eta, stage.smoothness());
  uld_step_inplace(out.x, out.v, stage, c, gh.g, gh.h, grad_buf, x_buf);
  return out;
}

VectorXd uld_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                 RngStream rng, std::vector<PhasePoint>* trace) {
  long long n = steps_for(eta, T);
  const Eigen::Index d = stage.dim();
  VectorXd x = x0, v = VectorXd::Zero(d);
  VectorXd g(d), h(d), grad_buf(d), x_buf(d);
  UldStepCoeffs c = uld_coeffs(eta, stage.smoothness());
  GhCoeffs gc = gh_coeffs(eta);
  for (long long i = 0; i < n; ++i) {
    draw_gh_into(gc, rng, g, h);
    uld_step_inplace(x, v, stage, c, g, h, grad_buf, x_buf);
    if (trace) trace->push_back({x, v});
  }
  return x;
}

CoupledPair uld_coupled_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                            RngStream rng) {
  long long n = steps_for(eta, T);
  const Eigen::Index d = stage.dim();
  CoupledPair out;
  out.eta = eta;
  VectorXd xf = x0, vf = VectorXd::Zero(d);
  VectorXd xc = x0, vc = VectorXd::Zero(d);
  VectorXd g1(d), h1(d), g2(d), h2(d), gc_(d), hc_(d), grad_buf(d), x_buf(d);
  UldStepCoeffs fine = uld_coeffs(0.5 * eta, stage.smoothness());
  UldStepCoeffs coarse = uld_coeffs(eta, stage.smoothness());
  GhCoeffs half = gh_coeffs(0.5 * eta);
  const double e_eta = std::exp(eta);
  for (long long i = 0; i < n; ++i) {
    // Half-step noise first; coarse noise is synthesized from it, making the
    // fine chain the reference path.
    draw_gh_into(half, rng, g1, h1);
    draw_gh_into(half, rng, g2, h2);
    uld_step_inplace(xf, vf, stage, fine, g1, h1, grad_buf, x_buf);
    uld_step_inplace(xf, vf, stage, fine, g2, h2, grad_buf, x_buf);
    gc_ = g1 + e_eta * g2;
    hc_ = h1 + h2;
    uld_step_inplace(xc, vc, stage, coarse, gc_, hc_, grad_buf, x_buf);
  }
  out.x_fine = std::move(xf);
  out.x_coarse = std::move(xc);
  return out;
}

PhasePoint rmm_step(const PhasePoint& p, const Potential& stage, double eta, double alpha,
                    const VectorXd& g1, const VectorXd& h1, const VectorXd& g2,
                    const VectorXd& h2) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("rmm_step: alpha must lie in [0, 1]");
  if (p.x.size() != stage.dim() || g1.size() != stage.dim())
    throw std::invalid_argument("rmm_step: dimension mismatch");
  PhasePoint out{p.x, p.v};
  VectorXd grad_buf(p.x.size()), y_buf(p.x.size()), x_buf(p.x.size());
  rmm_step_inplace(out.x, out.v, stage, eta, alpha, g1, h1, g2, h2, grad_buf, y_buf, x_buf);
  return out;
}

VectorXd rmm_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                 RngStream rng, std::vector<PhasePoint>* trace) {
  long long n = steps_for(eta, T);
  const Eigen::Index d = stage.dim();
  VectorXd x = x0, v = VectorXd::Zero(d);
  VectorXd g1(d), h1(d), g2(d), h2(d), grad_buf(d), y_buf(d), x_buf(d);
  for (long long i = 0; i < n; ++i) {
    double alpha = rng.uniform();
    GhCoeffs first = gh_coeffs(alpha * eta);
    GhCoeffs rest = gh_rest_coeffs(eta, alpha);
    draw_gh_into(first, rng, g1, h1);
    draw_gh_into(rest, rng, g2, h2);
    rmm_step_inplace(x, v, stage, eta, alpha, g1, h1, g2, h2, grad_buf, y_buf, x_buf);
    if (trace) trace->push_back({x, v});
  }
  return x;
}

CoupledPair rmm_coupled_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                            RngStream rng) {
  long long n = steps_for(eta, T);
  const Eigen::Index d = stage.dim();
  CoupledPair out;
  out.eta = eta;
  VectorXd xf = x0, vf = VectorXd::Zero(d);
  VectorXd xc = x0, vc = VectorXd::Zero(d);
  VectorXd g1a(d), h1a(d), g1b(d), h1b(d), g2a(d), h2a(d), g2b(d), h2b(d);
  VectorXd cg1(d), ch1(d), cg2(d), ch2(d);
  VectorXd grad_buf(d), y_buf(d), x_buf(d);
  const double half = 0.5 * eta;
  const double e_eta = std::exp(eta);
  for (long long i = 0; i < n; ++i) {
    double a1 = rng.uniform();
    double a2 = rng.uniform();
    GhCoeffs first1 = gh_coeffs(a1 * half);
    GhCoeffs first2 = gh_coeffs(a2 * half);
    GhCoeffs rest1 = gh_rest_coeffs(half, a1);
    GhCoeffs rest2 = gh_rest_coeffs(half, a2);
    draw_gh_into(first1, rng, g1a, h1a);
    draw_gh_into(first2, rng, g1b, h1b);
    draw_gh_into(rest1, rng, g2a, h2a);
    draw_gh_into(rest2, rng, g2b, h2b);
    double alpha;
    if (rng.coin()) {
      // coarse midpoint lands in the first half step
      alpha = 0.5 * a1;
      cg1 = g1a;
      ch1 = h1a;
      cg2 = g2a + e_eta * (g1b + g2b);
      ch2 = h2a + h1b + h2b;
    } else {
      alpha = 0.5 * (1.0 + a2);
      cg1 = g1a + g2a + e_eta * g1b;
      ch1 = h1a + h2a + h1b;
      cg2 = e_eta * g2b;
      ch2 = h2b;
    }
    rmm_step_inplace(xf, vf, stage, half, a1, g1a, h1a, g2a, h2a, grad_buf, y_buf, x_buf);
    rmm_step_inplace(xf, vf, stage, half, a2, g1b, h1b, g2b, h2b, grad_buf, y_buf, x_buf);
    rmm_step_inplace(xc, vc, stage, eta, alpha, cg1, ch1, cg2, ch2, grad_buf, y_buf, x_buf);
  }
  out.x_fine = std::move(xf);
  out.x_coarse = std::move(xc);
  return out;
}

VectorXd mala_chain(const VectorXd& x0, const Potential& stage, double h, long long n,
                    RngStream rng, MalaStats* stats, std::vector<PhasePoint>* trace) {
  if (!(h > 0.0)) throw std::invalid_argument("mala step size h must be > 0");
  const Eigen::Index d = stage.dim();
  VectorXd x = x0;
  VectorXd grad_x = stage.grad(x);
  double f_x = stage.value(x);
  VectorXd z(d), grad_z(d), noise(d), fwd(d), bwd(d);
  MalaStats local;
  const double inv4h = 1.0 / (4.0 * h);
  for (long long i = 0; i < n; ++i) {
    if (rng.coin()) {  // lazy hold
      ++local.lazy_holds;
      if (trace) trace->push_back({x, VectorXd::Zero(d)});
      continue;
    }
    ++local.proposals;
    rng.fill_normal(noise);
    z = x - h * grad_x + std::sqrt(2.0 * h) * noise;
    double f_z = stage.value(z);
    double log_u = std::log(rng.uniform() + 1e-300);
    if (!std::isfinite(f_z)) {
      ++local.nonfinite_rejects;
      if (trace) trace->push_back({x, VectorXd::Zero(d)});
      continue;
    }
    stage.grad_into(z, grad_z);
    check_gradient(grad_z, z, "mala");
    fwd = z - x + h * grad_x;   // forward displacement residual
    bwd = x - z + h * grad_z;   // reverse residual
    double log_ratio = (-f_z - bwd.squaredNorm() * inv4h) - (-f_x - fwd.squaredNorm() * inv4h);
    if (log_u < log_ratio) {
      ++local.accepted;
      x.swap(z);
      grad_x.swap(grad_z);
      f_x = f_z;
    }
    if (trace) trace->push_back({x, VectorXd::Zero(d)});
  }
  if (stats) *stats = local;
  return x;
}

const char* family_name(SamplerFamily f) {
  return f == SamplerFamily::uld ? "uld" : "rmm";
}

double eta_admissible_max(SamplerFamily family, const Potential& stage,
                          const SamplerSettings& settings) {
  (void)family;
  return settings.admissibility_frac / stage.kappa();
}

std::pair<double, double> uld_params_for_accuracy(const Potential& stage, double eps,
                                                  const SamplerSettings& settings) {
  if (!(eps > 0.0)) throw std::invalid_argument("accuracy eps must be > 0");
  const double kappa = stage.kappa();
  const double mu = stage.mu();
  const double d = static_cast<double>(stage.dim());
  double eta = eps / (208.0 * kappa) * std::sqrt(mu / d);
  eta = std::min(eta, eta_admissible_max(SamplerFamily::uld, stage, settings));
  double T = 0.5 * kappa * std::log(48.0 * (d / mu) / eps);
  long long steps = std::max<long long>(1, static_cast<long long>(std::ceil(T / eta - 1e-12)));
  return {eta, static_cast<double>(steps) * eta};
}

std::pair<double, double> rmm_params_for_accuracy(const Potential& stage, double eps,
                                                  const SamplerSettings& settings) {
  if (!(eps > 0.0)) throw std::invalid_argument("accuracy eps must be > 0");
  const double kappa = stage.kappa();
  const double mu = stage.mu();
  const double d = static_cast<double>(stage.dim());
  double lg = std::max(1.0, std::log(1.0 / eps));
  double term1 = std::cbrt(eps) / std::pow(kappa * lg, 1.0 / 6.0) * std::pow(mu / d, 1.0 / 6.0);
  double term2 = std::pow(eps, 2.0 / 3.0) / std::cbrt(lg) * std::cbrt(mu / d);
  double eta = settings.rmm_eta_prefactor * std::min(term1, term2);
  eta = std::min(eta, eta_admissible_max(SamplerFamily::rmm, stage, settings));
  double T = 2.0 * kappa * std::log(20.0 * (d / mu) / (eps * eps));
  long long steps = std::max<long long>(1, static_cast<long long>(std::ceil(T / eta - 1e-12)));
  return {eta, static_cast<double>(steps) * eta};
}

std::pair<double, double> accuracy_driven_params(SamplerFamily family, const Potential& stage,
                                                 double eps, const SamplerSettings& settings) {
  return family == SamplerFamily::uld ? uld_params_for_accuracy(stage, eps, settings)
                                      : rmm_params_for_accuracy(stage, eps, settings);
}

double mixing_time(SamplerFamily family, const Potential& stage, double eps) {
  const double kappa = stage.kappa();
  const double d_over_mu = static_cast<double>(stage.dim()) / stage.mu();
  if (family == SamplerFamily::uld)
    return std::max(0.0, 0.5 * kappa * std::log(48.0 * d_over_mu / eps));
  return std::max(0.0, 2.0 * kappa * std::log(20.0 * d_over_mu / (eps * eps)));
}

int grad_cost_per_step(SamplerFamily family) {
  return family == SamplerFamily::uld ? 1 : 2;
}

VectorXd run_single(SamplerFamily family, const VectorXd& x0, const Potential& stage, double eta,
                    double T, RngStream rng) {
  return family == SamplerFamily::uld ? uld_run(x0, stage, eta, T, std::move(rng))
                                      : rmm_run(x0, stage, eta, T, std::move(rng));
}

CoupledPair run_coupled(SamplerFamily family, const VectorXd& x0, const Potential& stage,
                        double eta, double T, RngStream rng) {
  return family == SamplerFamily::uld ? uld_coupled_run(x0, stage, eta, T, std::move(rng))
                                      : rmm_coupled_run(x0, stage, eta, T, std::move(rng));
}

}  // namespace logz
