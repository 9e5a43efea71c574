#pragma once

#include "vamp/types.hpp"

namespace vamp {

/// Gauss-Legendre rule on [-1,1] (weights summing to 2), built from the
/// Golub-Welsch eigendecomposition of the Legendre Jacobi matrix. Used as
/// the panel rule for the Gaussian expectations in state evolution.
struct GaussLegendre {
  Vector nodes;
  Vector weights;

  static GaussLegendre make(int n);

  /// Shared default-size rule (cached).
  static const GaussLegendre& standard();
};

inline constexpr int kGaussLegendreNodes = 64;

}  // namespace vamp
