#pragma once

#include <stdexcept>

namespace vamp {

/// Bernoulli-Gaussian signal prior: each component is 0 with probability
/// 1-rho and N(0, sigma_x2) with probability rho.
struct BgPrior {
  double rho = 0.1;
  double sigma_x2 = 1.0;

  double second_moment() const { return rho * sigma_x2; }

  void validate() const {
    if (!(rho > 0.0 && rho <= 1.0))
      throw std::invalid_argument("BgPrior: rho must be in (0,1]");
    if (!(sigma_x2 > 0.0))
      throw std::invalid_argument("BgPrior: sigma_x2 must be positive");
  }
};

inline double prior_second_moment(const BgPrior& prior) {
  prior.validate();
  return prior.second_moment();
}

}  // namespace vamp
