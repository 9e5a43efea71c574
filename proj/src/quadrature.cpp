#include "vamp/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace vamp {

GaussLegendre GaussLegendre::make(int n) {
  if (n < 1) throw std::invalid_argument("GaussLegendre: n must be >= 1");
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * static_cast<double>(k) * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  GaussLegendre rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = 2.0 * eig.eigenvectors().row(0).transpose().array().square();
  return rule;
}

const GaussLegendre& GaussLegendre::standard() {
  static const GaussLegendre rule = GaussLegendre::make(kGaussLegendreNodes);
  return rule;
}

}  // namespace vamp
