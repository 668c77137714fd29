#include "logz/oracles.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "logz/parallel.hpp"

namespace logz {
namespace oracles {

double analytic_gaussian_log_z(const VectorXd& lambdas) {
  if (lambdas.size() == 0) throw std::invalid_argument("empty lambda vector");
  double s = 0.0;
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw std::invalid_argument("lambdas must be > 0");
    s += 0.5 * std::log(2.0 * M_PI / lambdas[i]);
  }
  return s;
}

double gaussian_stage_log_ratio(double s2, double sigma_i_sq, double sigma_ip1_sq, int d) {
  if (!(s2 > 0.0) || !(sigma_i_sq > 0.0) || !(sigma_ip1_sq > 0.0))
    throw std::invalid_argument("variances must be > 0");
  double a = 1.0 / sigma_i_sq + 1.0 / s2;
  double b = 1.0 / sigma_i_sq - 1.0 / sigma_ip1_sq;
  if (!(b < a)) throw std::invalid_argument("non-integrable tilt: b >= a");
  return 0.5 * d * (std::log(a) - std::log(a - b));
}

double gaussian_stage_log_ratio_last(double s2, double sigma_m_sq, int d) {
  double a = 1.0 / sigma_m_sq + 1.0 / s2;
  double b = 1.0 / sigma_m_sq;
  return 0.5 * d * (std::log(a) - std::log(a - b));
}

double gaussian_variance_log_ratio(double s2, double sigma2, double alpha, int d) {
  if (alpha > 0.5 + 1e-12) throw std::invalid_argument("alpha must be <= 1/2");
  double t = s2 / sigma2;
  double up = 1.0 + (1.0 + alpha) * t;
  double dn = 1.0 + (1.0 - alpha) * t;
  double mid = 1.0 + t;
  if (!(up > 0.0 && dn > 0.0)) throw std::invalid_argument("non-integrable exponent");
  return -0.5 * d * (std::log(up) + std::log(dn)) + d * std::log(mid);
}

double gaussian_last_stage_log_moment_ratio(double s2, double sigma_m_sq, int d) {
  double t = s2 / sigma_m_sq;
  if (!(t < 1.0)) throw std::invalid_argument("requires s2 < sigma_M^2");
  return -0.5 * d * (std::log1p(t) + std::log1p(-t));
}

double gaussian_norm_mean(int d, double precision) {
  // E||x|| = sqrt(2/precision) Gamma((d+1)/2) / Gamma(d/2)
  return std::sqrt(2.0 / precision) *
         std::exp(std::lgamma(0.5 * (d + 1)) - std::lgamma(0.5 * d));
}

namespace {

// Regularized incomplete gamma, series and continued-fraction forms.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q needs x >= 0, a > 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double gaussian_norm_tail(int d, double precision, double r) {
  if (r <= 0.0) return 1.0;
  // ||x||^2 * precision ~ chi^2_d
  return gamma_q(0.5 * d, 0.5 * precision * r * r);
}

namespace {

double trapezoid_pass(const std::function<double(const VectorXd&)>& f, int d, double r0,
                      long long n_axis, int threads) {
  const long long points_axis = n_axis + 1;
  const double h = 2.0 * r0 / static_cast<double>(n_axis);
  // slab decomposition along the first axis; per-slab partials combined in
  // fixed order afterwards
  std::vector<double> partial(points_axis, 0.0);
  parallel_for(static_cast<std::size_t>(points_axis), threads, [&](std::size_t i0) {
    VectorXd x(d);
    x[0] = -r0 + h * static_cast<double>(i0);
    double w0 = (i0 == 0 || i0 == static_cast<std::size_t>(n_axis)) ? 0.5 : 1.0;
    double acc = 0.0;
    if (d == 1) {
      acc = w0 * std::exp(-f(x));
    } else if (d == 2) {
      for (long long i1 = 0; i1 <= n_axis; ++i1) {
        x[1] = -r0 + h * i1;
        double w = w0 * ((i1 == 0 || i1 == n_axis) ? 0.5 : 1.0);
        acc += w * std::exp(-f(x));
      }
    } else {
      for (long long i1 = 0; i1 <= n_axis; ++i1) {
        x[1] = -r0 + h * i1;
        double w1 = w0 * ((i1 == 0 || i1 == n_axis) ? 0.5 : 1.0);
        for (long long i2 = 0; i2 <= n_axis; ++i2) {
          x[2] = -r0 + h * i2;
          double w = w1 * ((i2 == 0 || i2 == n_axis) ? 0.5 : 1.0);
          acc += w * std::exp(-f(x));
        }
      }
    }
    partial[i0] = acc;
  });
  // pairwise tree reduction in fixed order
  std::vector<double> tree = partial;
  while (tree.size() > 1) {
    std::vector<double> next((tree.size() + 1) / 2, 0.0);
    for (std::size_t i = 0; i + 1 < tree.size(); i += 2) next[i / 2] = tree[i] + tree[i + 1];
    if (tree.size() % 2) next.back() = tree.back();
    tree.swap(next);
  }
  return tree[0] * std::pow(h, d);
}

}  // namespace

QuadratureResult trapezoid_z(const Potential& f, double eps, double h_override, int threads) {
  const int d = f.dim();
  if (d > 3) throw std::invalid_argument("trapezoid_z supports d <= 3 only");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
  const double r0 = 2.0 * std::sqrt(static_cast<double>(d) / f.mu()) * std::log(1.0 / eps);
  auto eval = [&](const VectorXd& x) { return f.value(x); };
  const long long max_points = 1LL << 24;
  QuadratureResult res;
  res.box_radius = r0;

  if (h_override > 0.0) {
    long long n_axis = std::max<long long>(2, std::llround(2.0 * r0 / h_override));
    res.z = trapezoid_pass(eval, d, r0, n_axis, threads);
    res.log_z = std::log(res.z);
    res.converged = true;
    res.h = 2.0 * r0 / static_cast<double>(n_axis);
    res.points = 1;
    for (int i = 0; i < d; ++i) res.points *= (n_axis + 1);
    return res;
  }

  long long n_axis = 8;
  double prev = trapezoid_pass(eval, d, r0, n_axis, threads);
  for (;;) {
    long long next_axis = n_axis * 2;
    long long total = 1;
    for (int i = 0; i < d; ++i) total *= (next_axis + 1);
    if (total > max_points) {
      res.z = prev;
      res.converged = false;
      break;
    }
    double cur = trapezoid_pass(eval, d, r0, next_axis, threads);
    n_axis = next_axis;
    if (std::abs(cur - prev) <= 0.25 * eps * std::abs(cur)) {
      res.z = cur;
      res.converged = true;
      break;
    }
    prev = cur;
  }
  res.h = 2.0 * r0 / static_cast<double>(n_axis);
  res.points = 1;
  for (int i = 0; i < d; ++i) res.points *= (n_axis + 1);
  res.log_z = std::log(res.z);
  return res;
}

double trapezoid_z_box(const std::function<double(const VectorXd&)>& neg_log_density, int d,
                       double box_radius, long long intervals_per_axis, int threads) {
  if (d > 3) throw std::invalid_argument("trapezoid_z_box supports d <= 3 only");
  return trapezoid_pass(neg_log_density, d, box_radius, intervals_per_axis, threads);
}

}  // namespace oracles
}  // namespace logz
