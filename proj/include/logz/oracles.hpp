#pragma once

#include <functional>

#include "logz/potentials.hpp"

namespace logz {
namespace oracles {

// log of prod_i sqrt(2 pi / lambda_i)
double analytic_gaussian_log_z(const VectorXd& lambdas);

// Exact stage ratio R_i = E_{rho_i} g_i for a Gaussian base N(0, s2 I_d):
// (a / (a - b))^{d/2} with a = 1/sigma_i^2 + 1/s2 and
// b = 1/sigma_i^2 - 1/sigma_ip1_sq (b = 1/sigma_i^2 when the next stage is
// infinite).  Log domain.
double gaussian_stage_log_ratio(double s2, double sigma_i_sq, double sigma_ip1_sq, int d);
double gaussian_stage_log_ratio_last(double s2, double sigma_m_sq, int d);

// Exact left-hand side of the relative-variance display for rho = N(0, s2 I):
// E e^{-(1+a)|x|^2/2s^2} E e^{-(1-a)|x|^2/2s^2} / (E e^{-|x|^2/2s^2})^2.
double gaussian_variance_log_ratio(double s2, double sigma2, double alpha, int d);

// Exact E_rho e^{-|x|^2/2sM^2} * E_rho e^{+|x|^2/2sM^2} for rho = N(0, s2 I),
// the last-stage second-moment ratio.  Requires s2 < sigma_m_sq.
double gaussian_last_stage_log_moment_ratio(double s2, double sigma_m_sq, int d);

// Mean of ||x|| for x ~ N(0, I_d / precision).
double gaussian_norm_mean(int d, double precision);

// P(||x|| >= r) for x ~ N(0, I_d / precision)  (regularized incomplete gamma).
double gaussian_norm_tail(int d, double precision, double r);

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

struct QuadratureResult {
  double z = 0.0;
  double log_z = 0.0;
  bool converged = false;
  long long points = 0;
  double h = 0.0;
  double box_radius = 0.0;
};

// Trapezoid rule over the box [-R0, R0]^d with R0 = 2 sqrt(d/mu) log(1/eps),
// d <= 3.  Spacing is halved until two successive estimates agree to eps/4
// relative, capped at 2^24 total points (unconverged results are flagged).
QuadratureResult trapezoid_z(const Potential& f, double eps, double h_override = 0.0,
                             int threads = 1);

// Same rule over an explicit box with fixed spacing; used as the ground-truth
// engine for the hardness instances.
double trapezoid_z_box(const std::function<double(const VectorXd&)>& neg_log_density, int d,
                       double box_radius, long long intervals_per_axis, int threads = 1);

}  // namespace oracles
}  // namespace logz
