#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "vamp/denoisers.hpp"
#include "vamp/matgen.hpp"
#include "vamp/prior.hpp"
#include "vamp/types.hpp"

namespace vamp {

/// Empirical law of the square-model singular values: the R positive values
/// with weight 1/N each plus a zero atom of weight (N-R)/N when the model is
/// rank deficient.
struct SpectralDistribution {
  Vector values;   // >= 0
  Vector weights;  // > 0, summing to 1

  double max_value() const { return values.size() ? values.maxCoeff() : 0.0; }
  double mean() const { return values.dot(weights); }
  double min_value() const { return values.size() ? values.minCoeff() : 0.0; }

  void validate() const;

  static SpectralDistribution from_values_weights(Vector values,
                                                  Vector weights);
  /// R positive singular values, each of weight 1/n, zero-padded to n.
  static SpectralDistribution from_singular_values(const Vector& s, Index n);
  static SpectralDistribution from_instance(const ProblemInstance& p);
  static SpectralDistribution geometric(Index m, Index n, double kappa);
};

/// Eigenvalue law of gamma_w0 * A^T A implied by a singular-value law.
SpectralDistribution gram_eigenvalues(const SpectralDistribution& spectrum,
                                      double gamma_w0);

/// E1(gamma1, tau1): MSE of the scalar denoiser applied to X0 + N(0, tau1),
/// with X0 drawn from `signal`. Gauss-Hermite quadrature over the BG mixture.
double error_fn_denoiser(const Denoiser& denoiser, const BgPrior& signal,
                         double gamma1, double tau1);
/// A1(gamma1, tau1): mean denoiser derivative under the same input law.
double sens_fn_denoiser(const Denoiser& denoiser, const BgPrior& signal,
                        double gamma1, double tau1);

/// Overloads using the bg_mmse denoiser's own prior as the signal law.
double error_fn_denoiser(const Denoiser& denoiser, double gamma1, double tau1);
double sens_fn_denoiser(const Denoiser& denoiser, double gamma1, double tau1);

/// E2(gamma2, tau2): exact weighted sum over the spectrum.
double error_fn_lmmse(const SpectralDistribution& spectrum, double gamma2,
                      double tau2, double gamma_w, double gamma_w0);
/// A2(gamma2) = E[gamma2 / (gamma_w S^2 + gamma2)].
double sens_fn_lmmse(const SpectralDistribution& spectrum, double gamma2,
                     double gamma_w);

struct SeIteration {
  double gamma1, tau1, alpha1, eta1;
  double gamma2, tau2, alpha2, eta2;
  double mse1, mse2;
};

struct SeTrace {
  std::vector<SeIteration> iterations;
  bool reached_fixed_point = false;
};

/// Thrown when a sensitivity leaves (0,1) and the recursion would produce
/// invalid (negative) precisions; carries the offending iteration.
class SeInvalidError : public std::runtime_error {
 public:
  SeInvalidError(int iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// General state-evolution recursion (denoiser half then LMMSE half).
SeTrace se_run(const Denoiser& denoiser, const BgPrior& signal,
               const SpectralDistribution& spectrum, double gamma_w,
               double gamma_w0, double tau10, double gamma10, int k_max);
SeTrace se_run(const Denoiser& denoiser, const SpectralDistribution& spectrum,
               double gamma_w, double gamma_w0, double tau10, double gamma10,
               int k_max);

/// SE recursion initialized at the LMMSE half from the prior-only state
/// (gamma2 = 1/E[(X0)^2], tau2 = E[(X0)^2]). This is the trajectory of a
/// solver bootstrapped from r = 0 with an uninformative initial precision:
/// iteration k of the returned trace predicts solver iteration k+1.
SeTrace se_run_bootstrapped(const Denoiser& denoiser, const BgPrior& signal,
                            const SpectralDistribution& spectrum,
                            double gamma_w, double gamma_w0, int k_max);

/// Matched-MMSE state evolution; stops early once gamma1 is stationary to
/// 1e-12 relative. eta fields are inverse predicted MSEs.
SeTrace se_matched_run(const BgPrior& prior,
                       const SpectralDistribution& spectrum, double gamma_w0,
                       int k_max);

/// Stieltjes transform of an eigenvalue law at omega < min eigenvalue.
double stieltjes(const SpectralDistribution& eigs, double omega);

/// R-transform via bracketed inversion of the Stieltjes transform on the
/// monotone branch z < min eigenvalue. Requires omega != 0 and -omega in the
/// attainable range (omega < 0 for nonnegative spectra).
double r_transform(const SpectralDistribution& eigs, double omega);

struct ReplicaSolution {
  double gamma1_star = 0.0;
  double eta_star = 0.0;
  double mse = 0.0;   // eta_star^-1
  double nmse = 0.0;  // mse / E[(X0)^2]
  int iterations = 0;
  bool converged = false;
};

/// MMSE replica fixed point, reached by iterating the matched SE and verified
/// against the independent R-transform route.
ReplicaSolution replica_solve(const BgPrior& prior,
                              const SpectralDistribution& spectrum,
                              double gamma_w0, int max_iters = 10000);

/// JSON export: {config, per_iteration: [...], fixed_point: {...}}.
void write_se_json(const SeTrace& trace, const BgPrior& prior,
                   double gamma_w0, double signal_second_moment,
                   const std::string& path);

}  // namespace vamp
