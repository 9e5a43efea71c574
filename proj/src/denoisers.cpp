#include "vamp/denoisers.hpp"

#include <cmath>
#include <limits>

namespace vamp {

namespace {

inline void check_inputs(double r, double gamma) {
  if (!std::isfinite(r) || !std::isfinite(gamma) || gamma <= 0.0)
    throw std::invalid_argument("denoise: r must be finite and gamma > 0");
}

// Posterior mean/derivative of the BG prior under r = x + N(0, 1/gamma).
// Slab responsibility is computed in the log domain; gamma reaches 1e11
// under precision clipping, where the linear-domain densities underflow.
inline DenoiserResult bg_mmse_eval(const BgPrior& p, double r, double gamma) {
  const double t = p.sigma_x2 * gamma;    // sigma_x2 / noise variance
  const double nu = t / (1.0 + t);        // slab shrinkage factor
  double pi;                              // P(slab | r)
  if (p.rho >= 1.0) {
    pi = 1.0;
  } else {
    // log [(1-rho)/rho * N(r;0,1/g) / N(r;0,sx2+1/g)]
    const double log_odds = std::log1p(-p.rho) - std::log(p.rho) +
                            0.5 * std::log1p(t) - 0.5 * nu * gamma * r * r;
    pi = (log_odds > 0.0) ? std::exp(-log_odds) / (1.0 + std::exp(-log_odds))
                          : 1.0 / (1.0 + std::exp(log_odds));
  }
  const double mean = pi * nu * r;
  // gamma * var as a sum of nonnegative terms
  const double deriv = pi * nu + pi * (1.0 - pi) * nu * nu * gamma * r * r;
  return {mean, deriv};
}

inline DenoiserResult soft_threshold_eval(double lambda, double r,
                                          double gamma) {
  const double thresh = lambda / gamma;
  const double mag = std::abs(r);
  if (mag > thresh) return {(r > 0.0 ? mag - thresh : thresh - mag), 1.0};
  return {0.0, 0.0};
}

}  // namespace

DenoiserResult Denoiser::operator()(double r, double gamma) const {
  check_inputs(r, gamma);
  if (kind_ == Kind::BgMmse) return bg_mmse_eval(prior_, r, gamma);
  return soft_threshold_eval(lambda_, r, gamma);
}

void Denoiser::apply(const Vector& r, double gamma, Vector& xhat,
                     Vector& deriv) const {
  if (!std::isfinite(gamma) || gamma <= 0.0)
    throw std::invalid_argument("denoise: gamma must be finite and > 0");
  const Index n = r.size();
  xhat.resize(n);
  deriv.resize(n);
  if (kind_ == Kind::BgMmse) {
    for (Index i = 0; i < n; ++i) {
      const DenoiserResult res = bg_mmse_eval(prior_, r[i], gamma);
      xhat[i] = res.xhat;
      deriv[i] = res.deriv;
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      const DenoiserResult res = soft_threshold_eval(lambda_, r[i], gamma);
      xhat[i] = res.xhat;
      deriv[i] = res.deriv;
    }
  }
}

double empirical_divergence(const Vector& derivs) {
  if (derivs.size() == 0)
    throw std::invalid_argument("empirical_divergence: empty vector");
  return derivs.mean();
}

double default_gamma_init(const Denoiser& spec) {
  if (spec.kind() == Denoiser::Kind::BgMmse)
    return 1.0 / spec.prior().second_moment();
  return 1.0;
}

}  // namespace vamp
