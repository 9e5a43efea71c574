#include "vamp/oracle.hpp"

#include <Eigen/Cholesky>
#include <stdexcept>

namespace vamp {

SupportSet SupportSet::from_signal(const Vector& x0) {
  SupportSet s;
  for (Index i = 0; i < x0.size(); ++i)
    if (x0[i] != 0.0) s.indices.push_back(i);
  return s;
}

void SupportSet::validate(Index n) const {
  Index prev = -1;
  for (Index i : indices) {
    if (i <= prev || i >= n)
      throw std::invalid_argument("SupportSet: unsorted or out of bounds");
    prev = i;
  }
}

Vector support_oracle_mmse(const ProblemInstance& problem,
                           const SupportSet& support, const BgPrior& prior) {
  prior.validate();
  support.validate(problem.n);
  Vector xhat = Vector::Zero(problem.n);
  const Index k = static_cast<Index>(support.indices.size());
  if (k == 0) return xhat;

  Matrix a_s(problem.m, k);
  for (Index j = 0; j < k; ++j) a_s.col(j) = problem.a.col(support.indices[j]);

  Matrix normal = problem.gamma_w0 * (a_s.transpose() * a_s);
  normal.diagonal().array() += 1.0 / prior.sigma_x2;
  const Vector rhs = problem.gamma_w0 * (a_s.transpose() * problem.y);
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("support_oracle_mmse: singular system");
  const Vector z = ldlt.solve(rhs);
  for (Index j = 0; j < k; ++j) xhat[support.indices[j]] = z[j];
  return xhat;
}

Vector lmmse_direct_solve(const Vector& r2, double gamma2, const Matrix& a,
                          const Vector& y, double gamma_w) {
  if (!(gamma2 > 0.0))
    throw std::invalid_argument("lmmse_direct_solve: gamma2 must be positive");
  if (!(gamma_w >= 0.0))
    throw std::invalid_argument("lmmse_direct_solve: gamma_w must be >= 0");
  Matrix normal = gamma_w * (a.transpose() * a);
  normal.diagonal().array() += gamma2;
  const Vector rhs = gamma_w * (a.transpose() * y) + gamma2 * r2;
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("lmmse_direct_solve: singular system");
  return ldlt.solve(rhs);
}

}  // namespace vamp
