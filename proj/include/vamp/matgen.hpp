#pragma once

#include <cstdint>
#include <string>

#include "vamp/prior.hpp"
#include "vamp/rng.hpp"
#include "vamp/types.hpp"

namespace vamp {

struct GenerationMeta {
  std::string ensemble;  // "rotinv" | "nonzero_mean" | "manual"
  double kappa = 1.0;    // rotinv condition number
  double mu = 0.0;       // nonzero_mean entry mean
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

/// One synthesized linear model y = A x0 + w together with the economy SVD
/// A = u_bar * Diag(s_bar) * v_bar^T (s_bar positive, non-increasing) and the
/// true noise precision gamma_w0. Immutable after construction; safe to share
/// read-only across trial workers.
struct ProblemInstance {
  Index m = 0, n = 0, r = 0;
  Matrix a;       // m x n
  Matrix u_bar;   // m x r
  Vector s_bar;   // r
  Matrix v_bar;   // n x r
  Vector x0;      // n
  Vector w;       // m
  Vector y;       // m
  double gamma_w0 = 1.0;
  GenerationMeta meta;
};

struct Ensemble {
  enum class Kind { RotInv, NonzeroMean };
  Kind kind = Kind::RotInv;
  double param = 1.0;  // kappa or mu

  static Ensemble rotinv(double kappa) { return {Kind::RotInv, kappa}; }
  static Ensemble nonzero_mean(double mu) { return {Kind::NonzeroMean, mu}; }
};

/// Haar-distributed n x n orthogonal matrix: QR of an i.i.d. Gaussian draw
/// with the sign of each R diagonal entry absorbed into Q.
Matrix haar_orthogonal(Index n, Rng& rng);

/// First r columns of a Haar orthogonal matrix (uniform on the Stiefel
/// manifold), sampled directly from an n x r Gaussian draw.
Matrix haar_stiefel(Index n, Index r, Rng& rng);

/// Geometric singular values: s_i / s_{i-1} constant, s_1 / s_m = kappa,
/// sum s_i^2 = n.
Vector geometric_spectrum(Index m, Index n, double kappa);

/// i.i.d. Bernoulli-Gaussian draw.
Vector sample_bg_signal(Index n, const BgPrior& prior, Rng& rng);

/// True noise precision achieving the target SNR given ||A||_F^2 = n.
inline double gamma_w0_for_snr(Index m, Index n, const BgPrior& prior,
                               double snr_db) {
  return static_cast<double>(m) * std::pow(10.0, snr_db / 10.0) /
         (prior.second_moment() * static_cast<double>(n));
}

ProblemInstance synthesize_problem(const Ensemble& ensemble, Index m, Index n,
                                   const BgPrior& prior, double snr_db,
                                   std::uint64_t seed);

/// Writes the instance as a JSON document plus a sidecar of little-endian
/// float64 arrays (column-major); load_instance round-trips bit-exactly.
void save_instance(const ProblemInstance& p, const std::string& json_path,
                   const std::string& bin_path);
ProblemInstance load_instance(const std::string& json_path);

}  // namespace vamp
