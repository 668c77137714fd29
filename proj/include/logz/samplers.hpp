#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "logz/potentials.hpp"
#include "logz/rng.hpp"

namespace logz {

struct PhasePoint {
  VectorXd x;
  VectorXd v;
};

// Correlated Brownian functionals over one interval of length s:
//   g = int_0^s e^{2u} dB,  h = int_0^s dB   (per coordinate, iid across
// coordinates) with Var(g) = (e^{4s}-1)/4, Cov(g,h) = (e^{2s}-1)/2,
// Var(h) = s.
struct GHPair {
  VectorXd g;
  VectorXd h;
  double interval = 0.0;
};

struct UldParams {
  double eta;  // step size
  double T;    // horizon, integer multiple of eta
  static constexpr double gamma = 2.0;  // friction, fixed
  // inverse mass u = 1/L comes from the stage potential
};

// Endpoints of two synchronously coupled chains consuming one Brownian path.
struct CoupledPair {
  VectorXd x_fine;    // step size eta/2
  VectorXd x_coarse;  // step size eta
  double eta = 0.0;
};

struct SamplerError : std::runtime_error {
  explicit SamplerError(const std::string& what) : std::runtime_error(what) {}
};

// Lower-triangular Cholesky factor of the (g, h) covariance for one interval.
struct GhCoeffs {
  double a11 = 0.0, a21 = 0.0, a22 = 0.0;
  double interval = 0.0;
};

GhCoeffs gh_coeffs(double s);
// Cholesky of [[c11, c12], [c12, c22]]; asserts det >= -1e-12 before factoring.
GhCoeffs chol2(double c11, double c12, double c22, double interval);
void draw_gh_into(const GhCoeffs& c, RngStream& rng, VectorXd& g, VectorXd& h);
GHPair draw_gh(int dim, double s, RngStream& rng);

// Exact exponential-integrator ULD step (gamma = 2, u = 1/L):
//   v' = e^{-2n} v - (1-e^{-2n})/(2L) grad f(x) + (2/sqrt L) e^{-2n} g
//   x' = x + (1-e^{-2n})/2 v - (n - (1-e^{-2n})/2)/(2L) grad f(x)
//        + (1/sqrt L) (h - e^{-2n} g)
// One gradient query per step.
PhasePoint uld_step(const PhasePoint& p, const Potential& stage, const UldParams& params,
                    const GHPair& gh);

VectorXd uld_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                 RngStream rng, std::vector<PhasePoint>* trace = nullptr);
CoupledPair uld_coupled_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                            RngStream rng);

// Randomized-midpoint ULD step.  Midpoint y uses the gradient at x; the full
// step uses the gradient at y.  Exactly two gradient queries.
PhasePoint rmm_step(const PhasePoint& p, const Potential& stage, double eta, double alpha,
                    const VectorXd& g1, const VectorXd& h1, const VectorXd& g2,
                    const VectorXd& h2);

VectorXd rmm_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                 RngStream rng, std::vector<PhasePoint>* trace = nullptr);
CoupledPair rmm_coupled_run(const VectorXd& x0, const Potential& stage, double eta, double T,
                            RngStream rng);

struct MalaStats {
  long long proposals = 0;
  long long accepted = 0;
  long long lazy_holds = 0;
  long long nonfinite_rejects = 0;
};

// 1/2-lazy MALA: each iteration first flips a fair coin and stays put on
// heads.  Proposal z ~ N(x - h grad f(x), 2h I); acceptance ratio evaluated
// in log domain.  Steady-state cost is one value + one gradient query per
// active iteration (current point's f and grad are cached).
VectorXd mala_chain(const VectorXd& x0, const Potential& stage, double h, long long n,
                    RngStream rng, MalaStats* stats = nullptr,
                    std::vector<PhasePoint>* trace = nullptr);

enum class SamplerFamily { uld, rmm };

const char* family_name(SamplerFamily f);

struct SamplerSettings {
  // Coupled-difference variance-model constants; the ULD default is the
  // explicit constant carried by the convergence bound, the RMM bound carries
  // none so 1 is used.  Both are config-overridable.
  double uld_variance_const = 2662.4;
  double rmm_variance_const = 1.0;
  // Prefactor c for the accuracy-driven RMM step size (log-factor inner
  // constants folded in).
  double rmm_eta_prefactor = 0.1;
  // Admissibility cap eta_max = admissibility_frac / kappa.
  double admissibility_frac = 0.1;
};

// Accuracy-driven (eta, T) so the chain's endpoint law is within W2 distance
// eps of the stage target.  T is clamped to at least one step.
std::pair<double, double> uld_params_for_accuracy(const Potential& stage, double eps,
                                                  const SamplerSettings& settings = {});
std::pair<double, double> rmm_params_for_accuracy(const Potential& stage, double eps,
                                                  const SamplerSettings& settings = {});
std::pair<double, double> accuracy_driven_params(SamplerFamily family, const Potential& stage,
                                                 double eps,
                                                 const SamplerSettings& settings = {});

// Mixing horizon T(eps) for the variance/bias model of each family.
double mixing_time(SamplerFamily family, const Potential& stage, double eps);

double eta_admissible_max(SamplerFamily family, const Potential& stage,
                          const SamplerSettings& settings = {});

int grad_cost_per_step(SamplerFamily family);

VectorXd run_single(SamplerFamily family, const VectorXd& x0, const Potential& stage, double eta,
                    double T, RngStream rng);
CoupledPair run_coupled(SamplerFamily family, const VectorXd& x0, const Potential& stage,
                        double eta, double T, RngStream rng);

}  // namespace logz
