#include "logz/hardness.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace logz {
namespace hardness {

namespace {

using nlohmann::json;

constexpr int kGaussNodes = 24;

// Gauss-Legendre nodes/weights on [-1, 1], Newton iteration on P_n.
struct GaussRule {
  double node[kGaussNodes];
  double weight[kGaussNodes];
  GaussRule() {
    const int n = kGaussNodes;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
          double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
        }
        pp = n * (x * p0 - p1) / (x * x - 1.0);
        double dx = p0 / pp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      node[i] = -x;
      node[n - 1 - i] = x;
      weight[i] = 2.0 / ((1.0 - x * x) * pp * pp);
      weight[n - 1 - i] = weight[i];
    }
  }
};

const GaussRule& gauss_rule() {
  static const GaussRule rule;
  return rule;
}

long long integer_root(long long n, int k) {
  double guess = std::pow(static_cast<double>(n), 1.0 / k);
  for (long long m = std::max<long long>(1, std::llround(guess) - 2);
       m <= std::llround(guess) + 2; ++m) {
    long long p = 1;
    for (int i = 0; i < k; ++i) p *= m;
    if (p == n) return m;
  }
  throw std::invalid_argument("hardness: n^{1/k} must be an integer");
}

}  // namespace

double p_value(double x) {
  if (std::abs(x) > 1.0 + 1e-12) throw std::invalid_argument("p_value: |x| must be <= 1");
  double t = (1.0 - x) * (1.0 + x);  // 1 - x^2
  return t * t * t;
}

PDerivs p_derivs(double x) {
  if (std::abs(x) > 1.0 + 1e-12) throw std::invalid_argument("p_derivs: |x| must be <= 1");
  double t = 1.0 - x * x;
  PDerivs d;
  d.p = t * t * t;
  d.dp = -6.0 * x * t * t;
  d.d2p = t * (30.0 * x * x - 6.0);
  return d;
}

double q_value(const VectorXd& y) {
  double q = 1.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) q *= p_value(y[i]);
  return q;
}

void q_grad(const VectorXd& y, VectorXd& out) {
  const Eigen::Index k = y.size();
  out.resize(k);
  std::vector<PDerivs> d(k);
  for (Eigen::Index i = 0; i < k; ++i) d[i] = p_derivs(y[i]);
  for (Eigen::Index i = 0; i < k; ++i) {
    double g = d[i].dp;
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != i) g *= d[j].p;
    out[i] = g;
  }
}

void q_hessian(const VectorXd& y, Eigen::MatrixXd& out) {
  const Eigen::Index k = y.size();
  out.resize(k, k);
  std::vector<PDerivs> d(k);
  for (Eigen::Index i = 0; i < k; ++i) d[i] = p_derivs(y[i]);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      double h = (i == j) ? d[i].d2p : d[i].dp * d[j].dp;
      for (Eigen::Index t = 0; t < k; ++t)
        if (t != i && t != j) h *= d[t].p;
      out(i, j) = h;
      out(j, i) = h;
    }
  }
}

HardInstance::HardInstance(int k, long long n, std::vector<int> types,
                           std::vector<double> coeffs, CellMode mode)
    : Potential(k, 0.5, 1.5),
      n_(n),
      cells_per_axis_(integer_root(n, k)),
      l_(1.0 / (std::sqrt(static_cast<double>(k)) * static_cast<double>(cells_per_axis_))),
      c_max_(l_ * l_ / (72.0 * k)),
      mode_(mode),
      types_(std::move(types)),
      coeffs_(std::move(coeffs)) {
  if (static_cast<long long>(types_.size()) != n || static_cast<long long>(coeffs_.size()) != n)
    throw std::invalid_argument("hardness: types and coefficients must have n entries");
  for (int t : types_)
    if (t != 1 && t != 2) throw std::invalid_argument("hardness: cell types must be 1 or 2");
  for (double c : coeffs_)
    if (c < 0.0 || c > c_max_ * (1.0 + 1e-12))
      throw std::invalid_argument("hardness: c_tau out of [0, l^2/72k]");
}

long long HardInstance::type2_count() const {
  long long n2 = 0;
  for (int t : types_) n2 += (t == 2);
  return n2;
}

long long HardInstance::cell_of(const VectorXd& x) const {
  const double edge = 1.0 / std::sqrt(static_cast<double>(dim_));
  const double width = 2.0 * l_;
  long long cell = 0;
  for (Eigen::Index j = 0; j < dim_; ++j) {
    if (x[j] < -edge || x[j] > edge) return -1;
    double t = (x[j] + edge) / width;
    long long idx = static_cast<long long>(std::floor(t));
    if (static_cast<double>(idx) == t && idx > 0) --idx;  // shared faces go low
    if (idx >= cells_per_axis_) idx = cells_per_axis_ - 1;
    cell = cell * cells_per_axis_ + idx;
  }
  return cell;
}

VectorXd HardInstance::cell_center(long long cell) const {
  const double edge = 1.0 / std::sqrt(static_cast<double>(dim_));
  VectorXd v(dim_);
  for (Eigen::Index j = dim_ - 1; j >= 0; --j) {
    long long idx = cell % cells_per_axis_;
    cell /= cells_per_axis_;
    v[j] = -edge + l_ * (2.0 * idx + 1.0);
  }
  return v;
}

double HardInstance::value(const VectorXd& x) const {
  double f0 = 0.5 * x.squaredNorm();
  long long cell = cell_of(x);
  if (cell < 0 || types_[cell] != 2 || coeffs_[cell] == 0.0) return f0;
  VectorXd y = (x - cell_center(cell)) / l_;
  return f0 + coeffs_[cell] * q_value(y);
}

void HardInstance::grad_into(const VectorXd& x, VectorXd& out) const {
  out = x;
  long long cell = cell_of(x);
  if (cell < 0 || types_[cell] != 2 || coeffs_[cell] == 0.0) return;
  VectorXd y = (x - cell_center(cell)) / l_;
  VectorXd qg(dim_);
  q_grad(y, qg);
  out += (coeffs_[cell] / l_) * qg;
}

void HardInstance::hessian_into(const VectorXd& x, Eigen::MatrixXd& out) const {
  out = Eigen::MatrixXd::Identity(dim_, dim_);
  long long cell = cell_of(x);
  if (cell < 0 || types_[cell] != 2 || coeffs_[cell] == 0.0) return;
  VectorXd y = (x - cell_center(cell)) / l_;
  Eigen::MatrixXd qh(dim_, dim_);
  q_hessian(y, qh);
  out += (coeffs_[cell] / (l_ * l_)) * qh;
}

double HardInstance::cell_decrease(long long cell, double c) const {
  const GaussRule& rule = gauss_rule();
  VectorXd v = cell_center(cell);
  const int k = dim_;
  // tensor product over the cell; integrand e^{-f0} (1 - e^{-c q(y)})
  std::vector<int> idx(k, 0);
  double total = 0.0;
  VectorXd y(k), x(k);
  for (;;) {
    double w = 1.0;
    for (int j = 0; j < k; ++j) {
      y[j] = rule.node[idx[j]];
      x[j] = v[j] + l_ * y[j];
      w *= rule.weight[idx[j]];
    }
    double f0 = 0.5 * x.squaredNorm();
    total += w * std::exp(-f0) * (-std::expm1(-c * q_value(y)));
    int j = k - 1;
    while (j >= 0 && ++idx[j] == kGaussNodes) idx[j--] = 0;
    if (j < 0) break;
  }
  return total * std::pow(l_, k);
}

double HardInstance::construction_log_z() const {
  double z = std::pow(2.0 * M_PI, 0.5 * dim_);
  for (long long c = 0; c < n_; ++c)
    if (types_[c] == 2 && coeffs_[c] > 0.0) z -= cell_decrease(c, coeffs_[c]);
  return std::log(z);
}

std::string HardInstance::to_json() const {
  json j;
  j["k"] = dim_;
  j["n"] = n_;
  j["l"] = l_;
  j["mode"] = mode_ == CellMode::uniform ? "uniform" : "equalized";
  j["types"] = types_;
  j["c"] = coeffs_;
  return j.dump(2);
}

HardInstance HardInstance::from_json(const std::string& text) {
  json j = json::parse(text);
  CellMode mode = j.at("mode").get<std::string>() == "equalized" ? CellMode::equalized
                                                                 : CellMode::uniform;
  return HardInstance(j.at("k").get<int>(), j.at("n").get<long long>(),
                      j.at("types").get<std::vector<int>>(),
                      j.at("c").get<std::vector<double>>(), mode);
}

HardInstance generate(int k, long long n, const TypeRule& rule, CellMode mode) {
  if (k < 1) throw std::invalid_argument("hardness: k must be >= 1");
  std::vector<int> types;
  if (!rule.explicit_types.empty()) {
    if (static_cast<long long>(rule.explicit_types.size()) != n)
      throw std::invalid_argument("hardness: explicit type list must have n entries");
    types = rule.explicit_types;
  } else {
    RngStream rng = RngStream::from_seed(rule.seed);
    types.resize(n);
    for (long long i = 0; i < n; ++i)
      types[i] = rng.uniform() < rule.bernoulli_p ? 1 : 2;
  }

  HardInstance probe(k, n, std::vector<int>(n, 1), std::vector<double>(n, 0.0), mode);
  const double c_max = probe.c_max();
  std::vector<double> coeffs(n, 0.0);
  if (mode == CellMode::uniform) {
    for (long long i = 0; i < n; ++i)
      if (types[i] == 2) coeffs[i] = c_max;
  } else {
    // equalize: every type-2 cell's decrease matches the smallest max decrease
    double target = 0.0;
    long long argmin = -1;
    bool any = false;
    for (long long i = 0; i < n; ++i) {
      if (types[i] != 2) continue;
      double dec = probe.cell_decrease(i, c_max);
      if (!any || dec < target) {
        target = dec;
        argmin = i;
      }
      any = true;
    }
    for (long long i = 0; i < n && any; ++i) {
      if (types[i] != 2) continue;
      if (i == argmin) {
        coeffs[i] = c_max;
        continue;
      }
      double lo = 0.0, hi = c_max;
      // decrease is continuous and strictly increasing in c
      for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        if (probe.cell_decrease(i, mid) < target)
          lo = mid;
        else
          hi = mid;
      }
      coeffs[i] = 0.5 * (lo + hi);
    }
  }
  return HardInstance(k, n, std::move(types), std::move(coeffs), mode);
}

std::string VerifyReport::to_json() const {
  json j;
  j["ok"] = ok;
  j["hessian_min"] = hessian_min;
  j["hessian_max"] = hessian_max;
  j["boundary_grad_err"] = boundary_grad_err;
  j["boundary_value_err"] = boundary_value_err;
  j["continuity_err"] = continuity_err;
  j["points_checked"] = points_checked;
  return j.dump(2);
}

VerifyReport verify_instance(const HardInstance& inst, long long samples, std::uint64_t seed) {
  const int k = inst.k();
  const double edge = 1.0 / std::sqrt(static_cast<double>(k));
  RngStream rng = RngStream::from_seed(seed);
  VerifyReport rep;
  rep.hessian_min = 1e300;
  rep.hessian_max = -1e300;

  Eigen::MatrixXd hess(k, k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  VectorXd x(k), g(k), g0(k);

  auto record_hessian = [&](const VectorXd& pt) {
    inst.hessian_into(pt, hess);
    solver.compute(hess, Eigen::EigenvaluesOnly);
    rep.hessian_min = std::min(rep.hessian_min, solver.eigenvalues().minCoeff());
    rep.hessian_max = std::max(rep.hessian_max, solver.eigenvalues().maxCoeff());
    ++rep.points_checked;
  };

  // interiors, faces, and points outside the cube
  for (long long s = 0; s < samples; ++s) {
    double sel = rng.uniform();
    if (sel < 0.7) {
      for (int j = 0; j < k; ++j) x[j] = edge * (2.0 * rng.uniform() - 1.0);
    } else if (sel < 0.9) {
      long long cell = static_cast<long long>(rng.uniform() * inst.n());
      cell = std::min(cell, inst.n() - 1);
      VectorXd v = inst.cell_center(cell);
      for (int j = 0; j < k; ++j)
        x[j] = v[j] + inst.cell_half_width() * (2.0 * rng.uniform() - 1.0);
      int axis = static_cast<int>(rng.uniform() * k) % k;
      x[axis] = v[axis] + (rng.coin() ? 1.0 : -1.0) * inst.cell_half_width();
      // face point: gradient must match f0's
      inst.grad_into(x, g);
      g0 = x;
      rep.boundary_grad_err = std::max(rep.boundary_grad_err, (g - g0).norm());
      rep.boundary_value_err =
          std::max(rep.boundary_value_err, std::abs(inst.value(x) - 0.5 * x.squaredNorm()));
    } else {
      for (int j = 0; j < k; ++j) x[j] = 3.0 * edge * (2.0 * rng.uniform() - 1.0);
    }
    record_hessian(x);
  }

  // matched one-sided finite differences across a shared face
  const double fd = 1e-6;
  for (long long c = 0; c + 1 < std::min<long long>(inst.n(), 8); ++c) {
    VectorXd v = inst.cell_center(c);
    x = v;
    x[k - 1] = v[k - 1] + inst.cell_half_width();
    for (int axis = 0; axis < k; ++axis) {
      VectorXd lo = x, hi = x;
      lo[axis] -= fd;
      hi[axis] += fd;
      double one_sided_low = (inst.value(x) - inst.value(lo)) / fd;
      double one_sided_high = (inst.value(hi) - inst.value(x)) / fd;
      rep.continuity_err = std::max(rep.continuity_err,
                                    std::abs(one_sided_high - one_sided_low) - 2.0 * fd);
    }
  }
  rep.continuity_err = std::max(0.0, rep.continuity_err);

  rep.ok = rep.hessian_min >= 0.5 - 1e-9 && rep.hessian_max <= 1.5 + 1e-9 &&
           rep.boundary_grad_err <= 1e-9 && rep.boundary_value_err <= 1e-12;
  return rep;
}

}  // namespace hardness
}  // namespace logz
