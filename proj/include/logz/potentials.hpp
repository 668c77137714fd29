#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include <Eigen/Dense>

namespace logz {

using Eigen::VectorXd;

// Exact oracle-call accounting.  Increments are atomic so chains running on
// worker threads can share one counter; totals are exact after a join.
struct QueryCounter {
  std::atomic<std::uint64_t> value_queries{0};
  std::atomic<std::uint64_t> grad_queries{0};

  std::uint64_t values() const { return value_queries.load(std::memory_order_relaxed); }
  std::uint64_t grads() const { return grad_queries.load(std::memory_order_relaxed); }
};

// A mu-strongly-convex, L-smooth negative log-density with gradient access.
// Implementations must be immutable and callable from many threads.
class Potential {
 public:
  Potential(int dim, double mu, double smoothness);
  virtual ~Potential() = default;

  int dim() const { return dim_; }
  double mu() const { return mu_; }
  double smoothness() const { return smoothness_; }
  double kappa() const { return smoothness_ / mu_; }
  const VectorXd& minimizer() const { return minimizer_; }

  virtual double value(const VectorXd& x) const = 0;
  virtual void grad_into(const VectorXd& x, VectorXd& out) const = 0;

  VectorXd grad(const VectorXd& x) const {
    VectorXd g(dim_);
    grad_into(x, g);
    return g;
  }

 protected:
  int dim_;
  double mu_;
  double smoothness_;
  VectorXd minimizer_;
};

using PotentialPtr = std::shared_ptr<const Potential>;

// f(x) = ||x||^2 / (2 sigma2); mu = L = 1/sigma2; Z = (2 pi sigma2)^{d/2}.
class GaussianPotential final : public Potential {
 public:
  GaussianPotential(int dim, double sigma2);

  double sigma2() const { return sigma2_; }
  double log_z() const;

  double value(const VectorXd& x) const override;
  void grad_into(const VectorXd& x, VectorXd& out) const override;

 private:
  double sigma2_;
};

// f(x) = 1/2 sum lambda_i x_i^2; mu = min lambda, L = max lambda.
class DiagQuadraticPotential final : public Potential {
 public:
  explicit DiagQuadraticPotential(VectorXd lambdas);

  const VectorXd& lambdas() const { return lambdas_; }
  double log_z() const;

  double value(const VectorXd& x) const override;
  void grad_into(const VectorXd& x, VectorXd& out) const override;

 private:
  VectorXd lambdas_;
};

// Forwards value/grad to the wrapped potential, counting every call.
class CountingPotential final : public Potential {
 public:
  explicit CountingPotential(PotentialPtr base);

  const std::shared_ptr<QueryCounter>& counter() const { return counter_; }

  double value(const VectorXd& x) const override;
  void grad_into(const VectorXd& x, VectorXd& out) const override;

 private:
  PotentialPtr base_;
  std::shared_ptr<QueryCounter> counter_;
};

// f_i(x) = ||x||^2 / (2 sigma_i^2) + f(x); stage constants mu + 1/sigma_i^2
// and L + 1/sigma_i^2.  Base oracle calls are forwarded, so they count
// against the base's QueryCounter when the base is a counting wrapper.
class AnnealStagePotential final : public Potential {
 public:
  AnnealStagePotential(PotentialPtr base, double sigma2);

  double sigma2() const { return sigma2_; }
  const PotentialPtr& base() const { return base_; }

  double value(const VectorXd& x) const override;
  void grad_into(const VectorXd& x, VectorXd& out) const override;

 private:
  PotentialPtr base_;
  double sigma2_;
  double inv_sigma2_;
};

PotentialPtr make_gaussian(int dim, double sigma2);
PotentialPtr make_diag_quadratic(const VectorXd& lambdas);
std::shared_ptr<const CountingPotential> wrap_counting(PotentialPtr base);
std::shared_ptr<const AnnealStagePotential> make_annealed_stage(PotentialPtr base, double sigma2);

}  // namespace logz
