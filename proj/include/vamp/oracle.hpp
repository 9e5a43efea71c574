#pragma once

#include <vector>

#include "vamp/matgen.hpp"
#include "vamp/prior.hpp"
#include "vamp/types.hpp"

namespace vamp {

struct SupportSet {
  std::vector<Index> indices;  // sorted, unique, in [0, n)

  static SupportSet from_signal(const Vector& x0);
  void validate(Index n) const;
};

/// Genie-aided estimator: zeros off-support, Gaussian LMMSE solve
/// (gamma_w0 A_S^T A_S + I/sigma_x2)^{-1} gamma_w0 A_S^T y on the support.
Vector support_oracle_mmse(const ProblemInstance& problem,
                           const SupportSet& support, const BgPrior& prior);

/// Dense factorization solve of the regularized normal equations; oracle
/// path validating the SVD-based g2_lmmse.
Vector lmmse_direct_solve(const Vector& r2, double gamma2, const Matrix& a,
                          const Vector& y, double gamma_w);

}  // namespace vamp
