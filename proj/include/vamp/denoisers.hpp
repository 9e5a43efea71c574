#pragma once

#include <stdexcept>

#include "vamp/prior.hpp"
#include "vamp/types.hpp"

namespace vamp {

struct DenoiserResult {
  double xhat;
  double deriv;
};

/// Separable scalar denoiser g1(., gamma). Two kinds:
///  - bg_mmse: posterior mean under the Bernoulli-Gaussian prior; the
///    derivative is gamma * posterior variance.
///  - soft_threshold: sign(r) * max(|r| - lambda/gamma, 0); derivative is the
///    support indicator (0 at the kink).
class Denoiser {
 public:
  enum class Kind { BgMmse, SoftThreshold };

  static Denoiser bg_mmse(const BgPrior& prior) {
    prior.validate();
    Denoiser d;
    d.kind_ = Kind::BgMmse;
    d.prior_ = prior;
    return d;
  }

  static Denoiser soft_threshold(double lambda) {
    if (!(lambda > 0.0))
      throw std::invalid_argument("soft_threshold: lambda must be positive");
    Denoiser d;
    d.kind_ = Kind::SoftThreshold;
    d.lambda_ = lambda;
    return d;
  }

  Kind kind() const { return kind_; }

  const BgPrior& prior() const {
    if (kind_ != Kind::BgMmse)
      throw std::logic_error("Denoiser: no prior attached");
    return prior_;
  }

  double lambda() const { return lambda_; }

  DenoiserResult operator()(double r, double gamma) const;

  /// Componentwise application; xhat and deriv are resized to r.size().
  void apply(const Vector& r, double gamma, Vector& xhat, Vector& deriv) const;

 private:
  Denoiser() = default;
  Kind kind_ = Kind::BgMmse;
  BgPrior prior_{};
  double lambda_ = 1.0;
};

inline DenoiserResult denoise(const Denoiser& spec, double r, double gamma) {
  return spec(r, gamma);
}

/// <g1'> : mean of the Jacobian diagonal.
double empirical_divergence(const Vector& derivs);

/// Initial precision 1/E[(X0)^2] for runs started from r = 0. Falls back to
/// 1.0 for denoisers without an attached prior.
double default_gamma_init(const Denoiser& spec);

}  // namespace vamp
