#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "vamp/denoisers.hpp"
#include "vamp/matgen.hpp"
#include "vamp/types.hpp"

namespace vamp {

struct SolverOptions {
  double gamma_w = 1.0;  // postulated noise precision
  int max_iters = 100;
  double tol = 1e-4;  // on ||r1_k - r1_{k-1}|| / ||r1_k||
  double gamma_min = 1e-11;
  double gamma_max = 1e11;
  double damp = 0.97;  // applied to xhat and the gamma1 update for k > 1
  Vector r_init;       // empty => zeros
  // NaN => 1/E[(X0)^2] for bg_mmse denoisers, 1.0 otherwise
  double gamma_init = std::numeric_limits<double>::quiet_NaN();

  static SolverOptions vamp_defaults(double gamma_w) {
    SolverOptions o;
    o.gamma_w = gamma_w;
    return o;
  }
  static SolverOptions amp_defaults(double gamma_w) {
    SolverOptions o;
    o.gamma_w = gamma_w;
    o.max_iters = 1000;
    o.damp = 1.0;
    return o;
  }

  void validate() const;
};

/// Per-iteration record. LMMSE-half scalars and nmse are NaN when the
/// algorithm does not compute them (AMP/IST traces).
struct IterationRecord {
  int k = 0;
  Vector r1;
  double gamma1 = 0.0;
  double alpha1 = 0.0;  // raw divergence, before any clipping
  double eta1 = 0.0;
  Vector r2;
  double gamma2 = std::numeric_limits<double>::quiet_NaN();
  double alpha2 = std::numeric_limits<double>::quiet_NaN();
  double eta2 = std::numeric_limits<double>::quiet_NaN();
  Vector xhat1;
  double nmse = std::numeric_limits<double>::quiet_NaN();
};

struct Termination {
  enum class Kind { Converged, MaxIters, NumericalFailure };
  Kind kind = Kind::MaxIters;
  int iteration = -1;   // iteration at which the cause was detected
  std::string detail;   // populated for numerical failures
};

struct AlgorithmTrace {
  std::vector<IterationRecord> records;
  Vector final_xhat;
  Termination termination;

  double final_nmse() const {
    return records.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : records.back().nmse;
  }
};

/// Vector AMP, SVD form: preconditioned ytilde, denoiser/Onsager steps and
/// the spectral gamma update, with precision clipping, damping and the
/// normalized-change stopping rule.
AlgorithmTrace vamp_svd_run(const ProblemInstance& problem,
                            const Denoiser& denoiser,
                            const SolverOptions& opts);

/// Vector AMP, LMMSE form; algebraically identical to the SVD form.
AlgorithmTrace vamp_lmmse_run(const ProblemInstance& problem,
                              const Denoiser& denoiser,
                              const SolverOptions& opts);

/// LMMSE estimate (gamma_w A^T A + gamma2 I)^{-1} (gamma_w A^T y + gamma2 r2)
/// computed through the stored SVD in O(RN).
Vector g2_lmmse(const Vector& r2, double gamma2, const ProblemInstance& problem,
                double gamma_w);

/// Divergence of g2: (1/N) [sum_i gamma2/(gamma_w s_i^2 + gamma2) + (N - R)].
double g2_divergence(double gamma2, const ProblemInstance& problem,
                     double gamma_w);

enum class AmpGammaRule {
  ResidualEnergy,     // gamma_{k+1} = M / ||v_k||^2
  OnsagerRecursion,   // 1/gamma_{k+1} = 1/gamma_w + (N/M) alpha_k / gamma_k
  Fixed,              // gamma_k = gamma_0 for all k
};

AlgorithmTrace amp_run(const ProblemInstance& problem, const Denoiser& denoiser,
                       const SolverOptions& opts,
                       AmpGammaRule rule = AmpGammaRule::OnsagerRecursion);

/// AMP with the Onsager term removed and a fixed gamma schedule.
AlgorithmTrace ist_run(const ProblemInstance& problem, const Denoiser& denoiser,
                       const SolverOptions& opts);

namespace detail {
/// Shared AMP-shaped loop; ist_run is independently implemented and must
/// reproduce amp_core(..., Fixed, false) bit for bit.
AlgorithmTrace amp_core(const ProblemInstance& problem,
                        const Denoiser& denoiser, const SolverOptions& opts,
                        AmpGammaRule rule, bool with_onsager);
}  // namespace detail

/// CSV columns: iter,gamma1,alpha1,eta1,gamma2,alpha2,eta2,nmse_db.
void write_trace_csv(const AlgorithmTrace& trace, std::ostream& out);

}  // namespace vamp
