#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "logz/potentials.hpp"
#include "logz/rng.hpp"

namespace logz {
namespace hardness {

// p(x) = (1+x)^3 (1-x)^3 on [-1, 1]; value, gradient and second derivative
// vanish at +-1.
struct PDerivs {
  double p;
  double dp;
  double d2p;
};
double p_value(double x);
PDerivs p_derivs(double x);

// q(y) = prod_j p(y_j) on [-1, 1]^k.
double q_value(const VectorXd& y);
void q_grad(const VectorXd& y, VectorXd& out);
void q_hessian(const VectorXd& y, Eigen::MatrixXd& out);

enum class CellMode { uniform, equalized };

// Cell-partitioned perturbation of f0(x) = ||x||^2 / 2: type-2 cells carry
// f0 + c_tau q((x - v_tau) / l) inside the cube [-1/sqrt k, 1/sqrt k]^k.
// 1.5-smooth and 0.5-strongly convex for every c_tau in [0, l^2 / 72k].
class HardInstance final : public Potential {
 public:
  HardInstance(int k, long long n, std::vector<int> types, std::vector<double> coeffs,
               CellMode mode);

  int k() const { return dim_; }
  long long n() const { return n_; }
  long long cells_per_axis() const { return cells_per_axis_; }
  double cell_half_width() const { return l_; }
  double c_max() const { return c_max_; }
  CellMode mode() const { return mode_; }
  const std::vector<int>& types() const { return types_; }
  const std::vector<double>& coeffs() const { return coeffs_; }
  long long type2_count() const;

  double value(const VectorXd& x) const override;
  void grad_into(const VectorXd& x, VectorXd& out) const override;
  void hessian_into(const VectorXd& x, Eigen::MatrixXd& out) const;

  // index of the cell containing x, or -1 outside the cube; points on shared
  // faces resolve to the lower-index cell
  long long cell_of(const VectorXd& x) const;
  VectorXd cell_center(long long cell) const;

  // mass decrease this cell contributes at coefficient c (tensor
  // Gauss-Legendre over the cell)
  double cell_decrease(long long cell, double c) const;

  // log Z from the construction: (2 pi)^{k/2} minus the per-cell decreases
  double construction_log_z() const;

  std::string to_json() const;
  static HardInstance from_json(const std::string& text);

 private:
  long long n_;
  long long cells_per_axis_;
  double l_;
  double c_max_;
  CellMode mode_;
  std::vector<int> types_;
  std::vector<double> coeffs_;
};

struct TypeRule {
  std::vector<int> explicit_types;  // used when non-empty
  double bernoulli_p = 0.5;         // probability of type 1
  std::uint64_t seed = 0;
};

HardInstance generate(int k, long long n, const TypeRule& rule, CellMode mode);

struct VerifyReport {
  bool ok = false;
  double hessian_min = 0.0;
  double hessian_max = 0.0;
  double boundary_grad_err = 0.0;   // worst |grad f - grad f0| on a cell face
  double boundary_value_err = 0.0;  // worst |f - f0| on a cell face
  double continuity_err = 0.0;      // worst one-sided finite-difference mismatch
  long long points_checked = 0;
  std::string to_json() const;
};

VerifyReport verify_instance(const HardInstance& inst, long long samples = 10000,
                             std::uint64_t seed = 1);

}  // namespace hardness
}  // namespace logz
