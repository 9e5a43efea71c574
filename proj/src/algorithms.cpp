#include "vamp/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vamp/metrics.hpp"

namespace vamp {

namespace {

constexpr double kAlphaMin = 1e-8;  // keeps the Onsager denominators finite

inline double clip(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

inline double safe_nmse(const Vector& xhat, const Vector& x0) {
  if (x0.squaredNorm() > 0.0) return nmse(xhat, x0);
  return std::numeric_limits<double>::quiet_NaN();
}

inline double relative_change(const Vector& next, const Vector& prev) {
  const double scale = next.norm();
  const double diff = (next - prev).norm();
  if (scale > 0.0) return diff / scale;
  return diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

inline void check_problem(const ProblemInstance& p) {
  if (p.r < 1 || p.s_bar.size() != p.r || p.u_bar.cols() != p.r ||
      p.v_bar.cols() != p.r)
    throw std::invalid_argument("solver: inconsistent SVD factors");
  if ((p.s_bar.array() <= 0.0).any())
    throw std::invalid_argument("solver: singular values must be positive");
}

// Default start for runs from r = 0: a precision far below the prior's makes
// iteration 0 a pure bootstrap. The denoiser output is the prior mean, and
// since g1'(0, gamma) -> gamma * E[(X0)^2] as gamma -> 0, the Onsager step
// hands the next stage the matched prior precision: gamma2 = gamma (1 -
// alpha)/alpha -> 1/E[(X0)^2]. Starting instead at gamma = 1/E[(X0)^2]
// evaluates the divergence at the degenerate all-zeros input, which grossly
// understates the average sensitivity and stalls the first iterations.
inline double bootstrap_gamma_init(const Denoiser& denoiser) {
  return 1e-6 * default_gamma_init(denoiser);
}

inline double initial_gamma(const SolverOptions& opts,
                            const Denoiser& denoiser) {
  return std::isnan(opts.gamma_init) ? bootstrap_gamma_init(denoiser)
                                     : opts.gamma_init;
}

inline Vector initial_r(const SolverOptions& opts, Index n) {
  if (opts.r_init.size() == 0) return Vector::Zero(n);
  if (opts.r_init.size() != n)
    throw std::invalid_argument("solver: r_init has wrong length");
  return opts.r_init;
}

}  // namespace

void SolverOptions::validate() const {
  if (!(gamma_w >= 0.0))
    throw std::invalid_argument("SolverOptions: gamma_w must be >= 0");
  if (max_iters < 1)
    throw std::invalid_argument("SolverOptions: max_iters must be >= 1");
  if (!(tol >= 0.0)) throw std::invalid_argument("SolverOptions: tol < 0");
  if (!(gamma_min > 0.0) || !(gamma_min < gamma_max))
    throw std::invalid_argument("SolverOptions: need 0 < gamma_min < gamma_max");
  if (!(damp > 0.0 && damp <= 1.0))
    throw std::invalid_argument("SolverOptions: damp must be in (0,1]");
}

AlgorithmTrace vamp_svd_run(const ProblemInstance& problem,
                            const Denoiser& denoiser,
                            const SolverOptions& opts) {
  opts.validate();
  check_problem(problem);
  const Index n = problem.n;
  const Index rank = problem.r;
  const double n_over_r =
      static_cast<double>(n) / static_cast<double>(rank);
  const Vector s2 = problem.s_bar.array().square();
  const Vector ytilde =
      (problem.u_bar.transpose() * problem.y).cwiseQuotient(problem.s_bar);

  AlgorithmTrace trace;
  Vector r = initial_r(opts, n);
  double gamma = initial_gamma(opts, denoiser);
  Vector xhat_prev;
  Vector g, gp, rtilde, r_next, vt;

  for (int k = 0; k < opts.max_iters; ++k) {
    denoiser.apply(r, gamma, g, gp);
    const double alpha_raw = gp.mean();
    Vector xhat = (k > 1 && opts.damp < 1.0)
                      ? (opts.damp * g + (1.0 - opts.damp) * xhat_prev).eval()
                      : g;

    IterationRecord rec;
    rec.k = k;
    rec.r1 = r;
    rec.gamma1 = gamma;
    rec.alpha1 = alpha_raw;
    rec.xhat1 = xhat;
    rec.nmse = safe_nmse(xhat, problem.x0);

    if (!std::isfinite(alpha_raw) || !xhat.allFinite()) {
      trace.records.push_back(std::move(rec));
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite denoiser output"};
      return trace;
    }

    // Raw alpha is recorded; the clamped value keeps the Onsager step and
    // the precision updates positive.
    const double alpha = clip(alpha_raw, kAlphaMin, 1.0 - kAlphaMin);
    rec.eta1 = gamma / alpha;
    rtilde = (xhat - alpha * r) / (1.0 - alpha);
    const double gtilde =
        clip(gamma * (1.0 - alpha) / alpha, opts.gamma_min, opts.gamma_max);
    rec.r2 = rtilde;
    rec.gamma2 = gtilde;

    const Vector d =
        (opts.gamma_w * s2.array() / (opts.gamma_w * s2.array() + gtilde))
            .matrix();
    const double sum_d = d.sum();
    const double mean_d = sum_d / static_cast<double>(rank);
    rec.alpha2 = 1.0 - sum_d / static_cast<double>(n);
    rec.eta2 = gtilde / rec.alpha2;

    double gamma_next =
        gtilde * sum_d / (static_cast<double>(n) - sum_d);
    if (k > 1 && opts.damp < 1.0)
      gamma_next = opts.damp * gamma_next + (1.0 - opts.damp) * gamma;
    gamma_next = clip(gamma_next, opts.gamma_min, opts.gamma_max);

    if (!std::isfinite(gamma_next) || !rtilde.allFinite()) {
      trace.records.push_back(std::move(rec));
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite Onsager/precision update"};
      return trace;
    }

    vt = ytilde - problem.v_bar.transpose() * rtilde;
    r_next = rtilde +
             n_over_r * (problem.v_bar *
                         (d.array() / mean_d * vt.array()).matrix());

    trace.records.push_back(std::move(rec));

    if (!r_next.allFinite()) {
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite denoiser-input update"};
      return trace;
    }

    if (relative_change(r_next, r) < opts.tol) {
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::Converged, k, ""};
      return trace;
    }

    r = r_next;
    gamma = gamma_next;
    xhat_prev = std::move(xhat);
  }

  trace.final_xhat = xhat_prev;
  trace.termination = {Termination::Kind::MaxIters, opts.max_iters - 1, ""};
  return trace;
}

Vector g2_lmmse(const Vector& r2, double gamma2,
                const ProblemInstance& problem, double gamma_w) {
  check_problem(problem);
  if (!(gamma2 > 0.0))
    throw std::invalid_argument("g2_lmmse: gamma2 must be positive");
  if (!(gamma_w >= 0.0))
    throw std::invalid_argument("g2_lmmse: gamma_w must be >= 0");
  if (r2.size() != problem.n)
    throw std::invalid_argument("g2_lmmse: r2 has wrong length");
  if (gamma_w == 0.0) return r2;
  const Vector s2 = problem.s_bar.array().square();
  const Vector ytilde =
      (problem.u_bar.transpose() * problem.y).cwiseQuotient(problem.s_bar);
  const Vector d =
      (gamma_w * s2.array() / (gamma_w * s2.array() + gamma2)).matrix();
  const Vector vt = ytilde - problem.v_bar.transpose() * r2;
  return r2 + problem.v_bar * d.cwiseProduct(vt);
}

double g2_divergence(double gamma2, const ProblemInstance& problem,
                     double gamma_w) {
  check_problem(problem);
  if (!(gamma2 > 0.0))
    throw std::invalid_argument("g2_divergence: gamma2 must be positive");
  if (!(gamma_w >= 0.0))
    throw std::invalid_argument("g2_divergence: gamma_w must be >= 0");
  const Index n = problem.n;
  double acc = static_cast<double>(n - problem.r);
  for (Index i = 0; i < problem.r; ++i) {
    const double s2 = problem.s_bar[i] * problem.s_bar[i];
    acc += gamma2 / (gamma_w * s2 + gamma2);
  }
  return acc / static_cast<double>(n);
}

AlgorithmTrace vamp_lmmse_run(const ProblemInstance& problem,
                              const Denoiser& denoiser,
                              const SolverOptions& opts) {
  opts.validate();
  check_problem(problem);
  const Index n = problem.n;
  const Vector s2 = problem.s_bar.array().square();
  const Vector ytilde =
      (problem.u_bar.transpose() * problem.y).cwiseQuotient(problem.s_bar);

  AlgorithmTrace trace;
  Vector r1 = initial_r(opts, n);
  double gamma1 = initial_gamma(opts, denoiser);
  Vector xhat_prev;
  Vector g, gp, r2, xhat2, r1_next;

  for (int k = 0; k < opts.max_iters; ++k) {
    // Denoising half
    denoiser.apply(r1, gamma1, g, gp);
    const double alpha1_raw = gp.mean();
    Vector xhat1 = (k > 1 && opts.damp < 1.0)
                       ? (opts.damp * g + (1.0 - opts.damp) * xhat_prev).eval()
                       : g;

    IterationRecord rec;
    rec.k = k;
    rec.r1 = r1;
    rec.gamma1 = gamma1;
    rec.alpha1 = alpha1_raw;
    rec.xhat1 = xhat1;
    rec.nmse = safe_nmse(xhat1, problem.x0);

    if (!std::isfinite(alpha1_raw) || !xhat1.allFinite()) {
      trace.records.push_back(std::move(rec));
      trace.final_xhat = xhat1;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite denoiser output"};
      return trace;
    }

    const double alpha1 = clip(alpha1_raw, kAlphaMin, 1.0 - kAlphaMin);
    const double eta1 = gamma1 / alpha1;
    const double gamma2_raw = eta1 - gamma1;
    r2 = (eta1 * xhat1 - gamma1 * r1) / gamma2_raw;
    const double gamma2 = clip(gamma2_raw, opts.gamma_min, opts.gamma_max);
    rec.eta1 = eta1;
    rec.r2 = r2;
    rec.gamma2 = gamma2;

    if (!r2.allFinite()) {
      trace.records.push_back(std::move(rec));
      trace.final_xhat = xhat1;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite Onsager step"};
      return trace;
    }

    // LMMSE half
    const Vector d =
        (opts.gamma_w * s2.array() / (opts.gamma_w * s2.array() + gamma2))
            .matrix();
    const Vector vt = ytilde - problem.v_bar.transpose() * r2;
    xhat2 = r2 + problem.v_bar * d.cwiseProduct(vt);
    const double alpha2 = g2_divergence(gamma2, problem, opts.gamma_w);
    const double eta2 = gamma2 / alpha2;
    const double gamma1_next_raw = eta2 - gamma2;
    rec.alpha2 = alpha2;
    rec.eta2 = eta2;

    if (!(gamma1_next_raw > 0.0) || !xhat2.allFinite()) {
      trace.records.push_back(std::move(rec));
      trace.final_xhat = xhat1;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "singular LMMSE update"};
      return trace;
    }

    r1_next = (eta2 * xhat2 - gamma2 * r2) / gamma1_next_raw;
    double gamma1_next = gamma1_next_raw;
    if (k > 1 && opts.damp < 1.0)
      gamma1_next = opts.damp * gamma1_next + (1.0 - opts.damp) * gamma1;
    gamma1_next = clip(gamma1_next, opts.gamma_min, opts.gamma_max);

    trace.records.push_back(std::move(rec));

    if (!r1_next.allFinite() || !std::isfinite(gamma1_next)) {
      trace.final_xhat = xhat1;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite denoiser-input update"};
      return trace;
    }

    if (relative_change(r1_next, r1) < opts.tol) {
      trace.final_xhat = xhat1;
      trace.termination = {Termination::Kind::Converged, k, ""};
      return trace;
    }

    r1 = r1_next;
    gamma1 = gamma1_next;
    xhat_prev = std::move(xhat1);
  }

  trace.final_xhat = xhat_prev;
  trace.termination = {Termination::Kind::MaxIters, opts.max_iters - 1, ""};
  return trace;
}

namespace detail {

AlgorithmTrace amp_core(const ProblemInstance& problem,
                        const Denoiser& denoiser, const SolverOptions& opts,
                        AmpGammaRule rule, bool with_onsager) {
  opts.validate();
  if (problem.a.size() == 0)
    throw std::invalid_argument("amp: dense A required");
  if (rule == AmpGammaRule::OnsagerRecursion && !(opts.gamma_w > 0.0))
    throw std::invalid_argument("amp: Onsager gamma rule needs gamma_w > 0");
  const Index n = problem.n;
  const Index m = problem.m;
  const double n_over_m = static_cast<double>(n) / static_cast<double>(m);

  AlgorithmTrace trace;
  Vector r = initial_r(opts, n);
  // Adaptive rules bootstrap like VAMP (alpha0/gamma0 -> E[(X0)^2] keeps the
  // first precision update consistent); fixed-gamma callers get the matched
  // prior precision.
  double gamma = std::isnan(opts.gamma_init)
                     ? (rule == AmpGammaRule::Fixed
                            ? default_gamma_init(denoiser)
                            : bootstrap_gamma_init(denoiser))
                     : opts.gamma_init;
  Vector v_prev = Vector::Zero(m);
  double alpha_prev = 0.0;
  Vector xhat, gp, v, r_next;

  for (int k = 0; k < opts.max_iters; ++k) {
    denoiser.apply(r, gamma, xhat, gp);
    const double alpha = gp.mean();

    v = problem.y - problem.a * xhat;
    if (with_onsager && k > 0) v += n_over_m * alpha_prev * v_prev;
    r_next = xhat + problem.a.transpose() * v;

    double gamma_next = gamma;
    switch (rule) {
      case AmpGammaRule::ResidualEnergy:
        gamma_next = static_cast<double>(m) / v.squaredNorm();
        break;
      case AmpGammaRule::OnsagerRecursion:
        gamma_next = 1.0 / (1.0 / opts.gamma_w + n_over_m * alpha / gamma);
        break;
      case AmpGammaRule::Fixed:
        break;
    }

    IterationRecord rec;
    rec.k = k;
    rec.r1 = r;
    rec.gamma1 = gamma;
    rec.alpha1 = alpha;
    rec.xhat1 = xhat;
    rec.nmse = safe_nmse(xhat, problem.x0);
    trace.records.push_back(std::move(rec));

    if (!std::isfinite(alpha) || !v.allFinite() || !r_next.allFinite() ||
        !std::isfinite(gamma_next)) {
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite iterate (diverged)"};
      return trace;
    }

    if (relative_change(r_next, r) < opts.tol) {
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::Converged, k, ""};
      return trace;
    }

    alpha_prev = alpha;
    v_prev = v;
    r = r_next;
    gamma = gamma_next;
  }

  trace.final_xhat = xhat;
  trace.termination = {Termination::Kind::MaxIters, opts.max_iters - 1, ""};
  return trace;
}

}  // namespace detail

AlgorithmTrace amp_run(const ProblemInstance& problem, const Denoiser& denoiser,
                       const SolverOptions& opts, AmpGammaRule rule) {
  return detail::amp_core(problem, denoiser, opts, rule, true);
}

AlgorithmTrace ist_run(const ProblemInstance& problem, const Denoiser& denoiser,
                       const SolverOptions& opts) {
  opts.validate();
  if (problem.a.size() == 0)
    throw std::invalid_argument("ist: dense A required");
  const Index n = problem.n;
  const Index m = problem.m;

  AlgorithmTrace trace;
  Vector r = initial_r(opts, n);
  const double gamma = initial_gamma(opts, denoiser);
  Vector xhat, gp, v, r_next;

  for (int k = 0; k < opts.max_iters; ++k) {
    denoiser.apply(r, gamma, xhat, gp);
    const double alpha = gp.mean();

    v = problem.y - problem.a * xhat;
    r_next = xhat + problem.a.transpose() * v;

    IterationRecord rec;
    rec.k = k;
    rec.r1 = r;
    rec.gamma1 = gamma;
    rec.alpha1 = alpha;
    rec.xhat1 = xhat;
    rec.nmse = safe_nmse(xhat, problem.x0);
    trace.records.push_back(std::move(rec));

    if (!std::isfinite(alpha) || !v.allFinite() || !r_next.allFinite()) {
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::NumericalFailure, k,
                           "non-finite iterate (diverged)"};
      return trace;
    }

    if (relative_change(r_next, r) < opts.tol) {
      trace.final_xhat = xhat;
      trace.termination = {Termination::Kind::Converged, k, ""};
      return trace;
    }

    r = r_next;
  }

  trace.final_xhat = xhat;
  trace.termination = {Termination::Kind::MaxIters, opts.max_iters - 1, ""};
  return trace;
}

void write_trace_csv(const AlgorithmTrace& trace, std::ostream& out) {
  out << "iter,gamma1,alpha1,eta1,gamma2,alpha2,eta2,nmse_db\n";
  char buf[256];
  for (const IterationRecord& rec : trace.records) {
    const double nmse_db = 10.0 * std::log10(rec.nmse);
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", rec.k,
                  rec.gamma1, rec.alpha1, rec.eta1, rec.gamma2, rec.alpha2,
                  rec.eta2, nmse_db);
    out << buf;
  }
}

}  // namespace vamp
