#include "logz/potentials.hpp"

#include <cmath>
#include <stdexcept>

namespace logz {

Potential::Potential(int dim, double mu, double smoothness)
    : dim_(dim), mu_(mu), smoothness_(smoothness), minimizer_(VectorXd::Zero(dim)) {
  if (dim < 1) throw std::invalid_argument("potential dimension must be >= 1");
  if (!(mu > 0.0)) throw std::invalid_argument("strong-convexity constant mu must be > 0");
  if (!(smoothness >= mu)) throw std::invalid_argument("smoothness L must satisfy L >= mu");
}

GaussianPotential::GaussianPotential(int dim, double sigma2)
    : Potential(dim, 1.0 / sigma2, 1.0 / sigma2), sigma2_(sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("gaussian sigma2 must be > 0");
}

double GaussianPotential::log_z() const {
  return 0.5 * dim_ * std::log(2.0 * M_PI * sigma2_);
}

double GaussianPotential::value(const VectorXd& x) const {
  return 0.5 * x.squaredNorm() / sigma2_;
}

void GaussianPotential::grad_into(const VectorXd& x, VectorXd& out) const {
  out = x / sigma2_;
}

DiagQuadraticPotential::DiagQuadraticPotential(VectorXd lambdas)
    : Potential(static_cast<int>(lambdas.size()),
                lambdas.size() > 0 ? lambdas.minCoeff() : 0.0,
                lambdas.size() > 0 ? lambdas.maxCoeff() : 0.0),
      lambdas_(std::move(lambdas)) {
  if (lambdas_.size() == 0) throw std::invalid_argument("diag quadratic needs at least one lambda");
  if (!(lambdas_.minCoeff() > 0.0)) throw std::invalid_argument("all lambdas must be > 0");
}

double DiagQuadraticPotential::log_z() const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < lambdas_.size(); ++i)
    s += 0.5 * std::log(2.0 * M_PI / lambdas_[i]);
  return s;
}

double DiagQuadraticPotential::value(const VectorXd& x) const {
  return 0.5 * lambdas_.cwiseProduct(x).dot(x);
}

void DiagQuadraticPotential::grad_into(const VectorXd& x, VectorXd& out) const {
  out = lambdas_.cwiseProduct(x);
}

CountingPotential::CountingPotential(PotentialPtr base)
    : Potential(base->dim(), base->mu(), base->smoothness()),
      base_(std::move(base)),
      counter_(std::make_shared<QueryCounter>()) {
  minimizer_ = base_->minimizer();
}

double CountingPotential::value(const VectorXd& x) const {
  counter_->value_queries.fetch_add(1, std::memory_order_relaxed);
  return base_->value(x);
}

void CountingPotential::grad_into(const VectorXd& x, VectorXd& out) const {
  counter_->grad_queries.fetch_add(1, std::memory_order_relaxed);
  base_->grad_into(x, out);
}

AnnealStagePotential::AnnealStagePotential(PotentialPtr base, double sigma2)
    : Potential(base->dim(), base->mu() + 1.0 / sigma2, base->smoothness() + 1.0 / sigma2),
      base_(std::move(base)),
      sigma2_(sigma2),
      inv_sigma2_(1.0 / sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("stage sigma2 must be > 0");
  minimizer_ = base_->minimizer();
}

double AnnealStagePotential::value(const VectorXd& x) const {
  return 0.5 * inv_sigma2_ * x.squaredNorm() + base_->value(x);
}

void AnnealStagePotential::grad_into(const VectorXd& x, VectorXd& out) const {
  base_->grad_into(x, out);
  out += inv_sigma2_ * x;
}

PotentialPtr make_gaussian(int dim, double sigma2) {
  return std::make_shared<GaussianPotential>(dim, sigma2);
}

PotentialPtr make_diag_quadratic(const VectorXd& lambdas) {
  return std::make_shared<DiagQuadraticPotential>(lambdas);
}

std::shared_ptr<const CountingPotential> wrap_counting(PotentialPtr base) {
  return std::make_shared<CountingPotential>(std::move(base));
}

std::shared_ptr<const AnnealStagePotential> make_annealed_stage(PotentialPtr base, double sigma2) {
  return std::make_shared<AnnealStagePotential>(std::move(base), sigma2);
}

}  // namespace logz
