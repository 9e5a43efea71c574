#pragma once

#include <stdexcept>

#include "vamp/types.hpp"

namespace vamp {

/// Normalized MSE ||xhat - x0||^2 / ||x0||^2, unclipped.
inline double nmse(const Vector& xhat, const Vector& x0) {
  if (xhat.size() != x0.size())
    throw std::invalid_argument("nmse: size mismatch");
  const double denom = x0.squaredNorm();
  if (!(denom > 0.0)) throw std::invalid_argument("nmse: zero reference");
  return (xhat - x0).squaredNorm() / denom;
}

}  // namespace vamp
