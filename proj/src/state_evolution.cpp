#include "vamp/state_evolution.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "vamp/quadrature.hpp"

namespace vamp {

void SpectralDistribution::validate() const {
  if (values.size() == 0 || values.size() != weights.size())
    throw std::invalid_argument("SpectralDistribution: empty or mismatched");
  if ((values.array() < 0.0).any())
    throw std::invalid_argument("SpectralDistribution: negative value");
  if ((weights.array() <= 0.0).any())
    throw std::invalid_argument("SpectralDistribution: nonpositive weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("SpectralDistribution: weights must sum to 1");
  if (!(mean() > 0.0))
    throw std::invalid_argument("SpectralDistribution: E[S] must be positive");
}

SpectralDistribution SpectralDistribution::from_values_weights(Vector values,
                                                               Vector weights) {
  SpectralDistribution d;
  d.values = std::move(values);
  d.weights = std::move(weights);
  d.validate();
  return d;
}

SpectralDistribution SpectralDistribution::from_singular_values(const Vector& s,
                                                                Index n) {
  const Index r = s.size();
  if (r < 1 || n < r)
    throw std::invalid_argument("from_singular_values: need 1 <= r <= n");
  const bool padded = n > r;
  Vector values(r + (padded ? 1 : 0));
  Vector weights(values.size());
  values.head(r) = s;
  weights.head(r).setConstant(1.0 / static_cast<double>(n));
  if (padded) {
    values[r] = 0.0;
    weights[r] = static_cast<double>(n - r) / static_cast<double>(n);
  }
  return from_values_weights(std::move(values), std::move(weights));
}

SpectralDistribution SpectralDistribution::from_instance(
    const ProblemInstance& p) {
  return from_singular_values(p.s_bar, p.n);
}

SpectralDistribution SpectralDistribution::geometric(Index m, Index n,
                                                     double kappa) {
  return from_singular_values(geometric_spectrum(m, n, kappa), n);
}

SpectralDistribution gram_eigenvalues(const SpectralDistribution& spectrum,
                                      double gamma_w0) {
  if (!(gamma_w0 > 0.0))
    throw std::invalid_argument("gram_eigenvalues: gamma_w0 must be positive");
  spectrum.validate();
  SpectralDistribution eigs;
  eigs.values = gamma_w0 * spectrum.values.array().square();
  eigs.weights = spectrum.weights;
  return eigs;
}

namespace {

inline double normal_pdf(double r, double sigma) {
  const double z = r / sigma;
  return std::exp(-0.5 * z * z) / (sigma * 2.5066282746310005024);
}

// Location/width of the denoiser's sharp transition in |r| (the detection
// threshold); panel boundaries are placed there so the composite rule
// resolves it.
struct Feature {
  double r = 0.0;
  double width = 0.0;
  bool present = false;
};

Feature denoiser_feature(const Denoiser& denoiser, double gamma) {
  Feature f;
  if (denoiser.kind() == Denoiser::Kind::SoftThreshold) {
    f.r = denoiser.lambda() / gamma;
    f.width = 0.05 * f.r;
    f.present = f.r > 0.0;
    return f;
  }
  const BgPrior& p = denoiser.prior();
  if (p.rho >= 1.0) return f;
  const double t = p.sigma_x2 * gamma;
  const double nu = t / (1.0 + t);
  // radius where the slab responsibility crosses 1/2
  const double num = 2.0 * (std::log1p(-p.rho) - std::log(p.rho)) +
                     std::log1p(t);
  if (num <= 0.0) return f;
  f.r = std::sqrt(num / (nu * gamma));
  f.width = 1.0 / (nu * gamma * f.r);
  f.present = true;
  return f;
}

// integral of f(r) N(r; 0, sigma^2) dr over the real line for even f,
// composite Gauss-Legendre with feature-aware panel boundaries.
template <typename F>
double gaussian_expect_even(double sigma, const Feature& feat, F&& f) {
  if (sigma == 0.0) return f(0.0);
  const double rmax = 14.0 * sigma;
  std::vector<double> bp = {0.0,         0.5 * sigma, sigma,
                            2.0 * sigma, 3.0 * sigma, 5.0 * sigma,
                            8.0 * sigma, 11.0 * sigma, rmax};
  if (feat.present && feat.r < rmax && feat.width > 0.0) {
    const double w = feat.width;
    for (double c : {feat.r - 8.0 * w, feat.r - w, feat.r, feat.r + w,
                     feat.r + 8.0 * w})
      if (c > 0.0 && c < rmax) bp.push_back(c);
  }
  std::sort(bp.begin(), bp.end());
  const GaussLegendre& gl = GaussLegendre::standard();
  double acc = 0.0;
  for (size_t i = 0; i + 1 < bp.size(); ++i) {
    const double a = bp[i], b = bp[i + 1];
    if (b - a <= 1e-300) continue;
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double panel = 0.0;
    for (Index j = 0; j < gl.nodes.size(); ++j) {
      const double r = mid + half * gl.nodes[j];
      panel += gl.weights[j] * f(r) * normal_pdf(r, sigma);
    }
    acc += half * panel;
  }
  return 2.0 * acc;
}

}  // namespace

double error_fn_denoiser(const Denoiser& denoiser, const BgPrior& signal,
                         double gamma1, double tau1) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("error_fn_denoiser: gamma1 must be positive");
  if (!(tau1 >= 0.0))
    throw std::invalid_argument("error_fn_denoiser: tau1 must be >= 0");
  signal.validate();
  const Feature feat = denoiser_feature(denoiser, gamma1);

  double zero_branch = 0.0;
  if (signal.rho < 1.0) {
    zero_branch = gaussian_expect_even(std::sqrt(tau1), feat, [&](double r) {
      const double g = denoiser(r, gamma1).xhat;
      return g * g;
    });
  }
  // Slab branch: R ~ N(0, sigma_x2 + tau1) and X | R is Gaussian with mean
  // nut * R and variance nut * tau1, so the inner expectation is closed-form.
  const double s2r = signal.sigma_x2 + tau1;
  const double nut = signal.sigma_x2 / s2r;
  double slab_branch =
      gaussian_expect_even(std::sqrt(s2r), feat, [&](double r) {
        const double d = denoiser(r, gamma1).xhat - nut * r;
        return d * d;
      }) +
      nut * tau1;
  return (1.0 - signal.rho) * zero_branch + signal.rho * slab_branch;
}

double sens_fn_denoiser(const Denoiser& denoiser, const BgPrior& signal,
                        double gamma1, double tau1) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("sens_fn_denoiser: gamma1 must be positive");
  if (!(tau1 >= 0.0))
    throw std::invalid_argument("sens_fn_denoiser: tau1 must be >= 0");
  signal.validate();
  const Feature feat = denoiser_feature(denoiser, gamma1);
  auto deriv = [&](double r) { return denoiser(r, gamma1).deriv; };

  double zero_branch = 0.0;
  if (signal.rho < 1.0)
    zero_branch = gaussian_expect_even(std::sqrt(tau1), feat, deriv);
  const double slab_branch =
      gaussian_expect_even(std::sqrt(signal.sigma_x2 + tau1), feat, deriv);
  return (1.0 - signal.rho) * zero_branch + signal.rho * slab_branch;
}

double error_fn_denoiser(const Denoiser& denoiser, double gamma1,
                         double tau1) {
  return error_fn_denoiser(denoiser, denoiser.prior(), gamma1, tau1);
}

double sens_fn_denoiser(const Denoiser& denoiser, double gamma1, double tau1) {
  return sens_fn_denoiser(denoiser, denoiser.prior(), gamma1, tau1);
}

double error_fn_lmmse(const SpectralDistribution& spectrum, double gamma2,
                      double tau2, double gamma_w, double gamma_w0) {
  spectrum.validate();
  if (!(gamma2 > 0.0))
    throw std::invalid_argument("error_fn_lmmse: gamma2 must be positive");
  if (!(gamma_w >= 0.0) || !(gamma_w0 > 0.0) || !(tau2 >= 0.0))
    throw std::invalid_argument("error_fn_lmmse: invalid parameters");
  double acc = 0.0;
  for (Index i = 0; i < spectrum.values.size(); ++i) {
    const double s2 = spectrum.values[i] * spectrum.values[i];
    const double den = gamma_w * s2 + gamma2;
    acc += spectrum.weights[i] *
           (gamma_w * gamma_w * s2 / gamma_w0 + tau2 * gamma2 * gamma2) /
           (den * den);
  }
  return acc;
}

double sens_fn_lmmse(const SpectralDistribution& spectrum, double gamma2,
                     double gamma_w) {
  spectrum.validate();
  if (!(gamma2 > 0.0))
    throw std::invalid_argument("sens_fn_lmmse: gamma2 must be positive");
  if (!(gamma_w >= 0.0))
    throw std::invalid_argument("sens_fn_lmmse: gamma_w must be >= 0");
  double acc = 0.0;
  for (Index i = 0; i < spectrum.values.size(); ++i) {
    const double s2 = spectrum.values[i] * spectrum.values[i];
    acc += spectrum.weights[i] * gamma2 / (gamma_w * s2 + gamma2);
  }
  return acc;
}

SeTrace se_run(const Denoiser& denoiser, const BgPrior& signal,
               const SpectralDistribution& spectrum, double gamma_w,
               double gamma_w0, double tau10, double gamma10, int k_max) {
  spectrum.validate();
  if (!(gamma10 > 0.0) || !(tau10 >= 0.0) || k_max < 1)
    throw std::invalid_argument("se_run: invalid initialization");
  SeTrace trace;
  double gamma1 = gamma10;
  double tau1 = tau10;
  for (int k = 0; k < k_max; ++k) {
    SeIteration it{};
    it.gamma1 = gamma1;
    it.tau1 = tau1;
    it.alpha1 = sens_fn_denoiser(denoiser, signal, gamma1, tau1);
    if (!(it.alpha1 > 0.0 && it.alpha1 < 1.0))
      throw SeInvalidError(k, "se_run: alpha1 left (0,1) at iteration " +
                                  std::to_string(k));
    it.eta1 = gamma1 / it.alpha1;
    it.gamma2 = it.eta1 - gamma1;
    it.mse1 = error_fn_denoiser(denoiser, signal, gamma1, tau1);
    it.tau2 = (it.mse1 - it.alpha1 * it.alpha1 * tau1) /
              ((1.0 - it.alpha1) * (1.0 - it.alpha1));
    if (!(it.gamma2 > 0.0) || !(it.tau2 >= 0.0))
      throw SeInvalidError(k, "se_run: invalid gamma2/tau2 at iteration " +
                                  std::to_string(k));
    it.alpha2 = sens_fn_lmmse(spectrum, it.gamma2, gamma_w);
    if (!(it.alpha2 > 0.0 && it.alpha2 < 1.0))
      throw SeInvalidError(k, "se_run: alpha2 left (0,1) at iteration " +
                                  std::to_string(k));
    it.eta2 = it.gamma2 / it.alpha2;
    it.mse2 = error_fn_lmmse(spectrum, it.gamma2, it.tau2, gamma_w, gamma_w0);
    const double gamma1_next = it.eta2 - it.gamma2;
    const double tau1_next = (it.mse2 - it.alpha2 * it.alpha2 * it.tau2) /
                             ((1.0 - it.alpha2) * (1.0 - it.alpha2));
    if (!(gamma1_next > 0.0) || !(tau1_next >= 0.0))
      throw SeInvalidError(k, "se_run: invalid gamma1/tau1 at iteration " +
                                  std::to_string(k));
    trace.iterations.push_back(it);
    if (std::abs(gamma1_next - gamma1) <= 1e-12 * gamma1) {
      trace.reached_fixed_point = true;
      gamma1 = gamma1_next;
      tau1 = tau1_next;
      break;
    }
    gamma1 = gamma1_next;
    tau1 = tau1_next;
  }
  return trace;
}

SeTrace se_run(const Denoiser& denoiser, const SpectralDistribution& spectrum,
               double gamma_w, double gamma_w0, double tau10, double gamma10,
               int k_max) {
  return se_run(denoiser, denoiser.prior(), spectrum, gamma_w, gamma_w0, tau10,
                gamma10, k_max);
}

SeTrace se_run_bootstrapped(const Denoiser& denoiser, const BgPrior& signal,
                            const SpectralDistribution& spectrum,
                            double gamma_w, double gamma_w0, int k_max) {
  signal.validate();
  const double m2 = signal.second_moment();
  const double gamma2 = 1.0 / m2;
  const double alpha2 = sens_fn_lmmse(spectrum, gamma2, gamma_w);
  if (!(alpha2 > 0.0 && alpha2 < 1.0))
    throw SeInvalidError(0, "se_run_bootstrapped: degenerate LMMSE half");
  const double gamma10 = gamma2 * (1.0 - alpha2) / alpha2;
  const double e2 = error_fn_lmmse(spectrum, gamma2, m2, gamma_w, gamma_w0);
  const double tau10 =
      (e2 - alpha2 * alpha2 * m2) / ((1.0 - alpha2) * (1.0 - alpha2));
  return se_run(denoiser, signal, spectrum, gamma_w, gamma_w0, tau10, gamma10,
                k_max);
}

SeTrace se_matched_run(const BgPrior& prior,
                       const SpectralDistribution& spectrum, double gamma_w0,
                       int k_max) {
  spectrum.validate();
  prior.validate();
  if (k_max < 1) throw std::invalid_argument("se_matched_run: k_max < 1");
  const Denoiser denoiser = Denoiser::bg_mmse(prior);
  SeTrace trace;
  double gamma1 = 1.0 / prior.second_moment();
  for (int k = 0; k < k_max; ++k) {
    SeIteration it{};
    it.gamma1 = gamma1;
    it.tau1 = 1.0 / gamma1;
    it.mse1 = error_fn_denoiser(denoiser, prior, gamma1, 1.0 / gamma1);
    it.eta1 = 1.0 / it.mse1;
    it.alpha1 = gamma1 / it.eta1;
    it.gamma2 = it.eta1 - gamma1;
    if (!(it.gamma2 > 0.0))
      throw SeInvalidError(k, "se_matched_run: gamma2 <= 0 at iteration " +
                                  std::to_string(k));
    it.tau2 = 1.0 / it.gamma2;
    it.mse2 = error_fn_lmmse(spectrum, it.gamma2, it.tau2, gamma_w0, gamma_w0);
    it.eta2 = 1.0 / it.mse2;
    it.alpha2 = it.gamma2 / it.eta2;
    const double gamma1_next = it.eta2 - it.gamma2;
    if (!(gamma1_next > 0.0))
      throw SeInvalidError(k, "se_matched_run: gamma1 <= 0 at iteration " +
                                  std::to_string(k));
    trace.iterations.push_back(it);
    if (std::abs(gamma1_next - gamma1) <= 1e-12 * gamma1) {
      trace.reached_fixed_point = true;
      gamma1 = gamma1_next;
      break;
    }
    gamma1 = gamma1_next;
  }
  return trace;
}

double stieltjes(const SpectralDistribution& eigs, double omega) {
  eigs.validate();
  if (!(omega < eigs.min_value()))
    throw std::domain_error("stieltjes: omega must lie below the spectrum");
  double acc = 0.0;
  for (Index i = 0; i < eigs.values.size(); ++i)
    acc += eigs.weights[i] / (eigs.values[i] - omega);
  return acc;
}

double r_transform(const SpectralDistribution& eigs, double omega) {
  eigs.validate();
  if (omega == 0.0) throw std::domain_error("r_transform: omega must be != 0");
  const double u = -omega;  // target Stieltjes value
  if (!(u > 0.0))
    throw std::domain_error(
        "r_transform: -omega outside the attainable Stieltjes range");
  const double lambda_min = eigs.min_value();

  // S_C is strictly increasing on (-inf, lambda_min) with range (0, inf):
  // S_C(lambda_min - 1/u) <= u gives the lower bracket end, the upper end
  // approaches lambda_min geometrically until the sign changes.
  double z_lo = lambda_min - 1.0 / u;
  double delta = 1.0 / u;
  double z_hi = lambda_min - delta;
  for (int i = 0; i < 4000 && stieltjes(eigs, z_hi) < u; ++i) {
    delta *= 0.5;
    z_hi = lambda_min - delta;
  }
  if (stieltjes(eigs, z_hi) < u)
    throw std::domain_error("r_transform: failed to bracket the inverse");

  double z = 0.5 * (z_lo + z_hi);
  for (int i = 0; i < 200; ++i) {
    z = 0.5 * (z_lo + z_hi);
    const double v = stieltjes(eigs, z);
    if (std::abs(v - u) <= 1e-12 * u) break;
    if (v < u)
      z_lo = z;
    else
      z_hi = z;
  }
  return z - 1.0 / omega;
}

ReplicaSolution replica_solve(const BgPrior& prior,
                              const SpectralDistribution& spectrum,
                              double gamma_w0, int max_iters) {
  const Denoiser denoiser = Denoiser::bg_mmse(prior);
  SeTrace trace = se_matched_run(prior, spectrum, gamma_w0, max_iters);
  const SeIteration& last = trace.iterations.back();

  ReplicaSolution sol;
  sol.iterations = static_cast<int>(trace.iterations.size());
  sol.gamma1_star = last.gamma1;
  sol.eta_star = last.eta2;  // eta1 == eta2 at the fixed point
  sol.mse = 1.0 / sol.eta_star;
  sol.nmse = sol.mse / prior.second_moment();

  const SpectralDistribution eigs = gram_eigenvalues(spectrum, gamma_w0);
  const double r_value = r_transform(eigs, -1.0 / sol.eta_star);
  const double res_gamma = std::abs(sol.gamma1_star - r_value) /
                           std::abs(sol.gamma1_star);
  const double e1 = error_fn_denoiser(denoiser, prior, sol.gamma1_star,
                                      1.0 / sol.gamma1_star);
  const double res_mse = std::abs(sol.mse - e1) / sol.mse;
  sol.converged =
      trace.reached_fixed_point && res_gamma < 1e-9 && res_mse < 1e-9;
  return sol;
}

void write_se_json(const SeTrace& trace, const BgPrior& prior,
                   double gamma_w0, double signal_second_moment,
                   const std::string& path) {
  nlohmann::json doc;
  doc["config"] = {{"rho", prior.rho},
                   {"sigma_x2", prior.sigma_x2},
                   {"gamma_w0", gamma_w0}};
  nlohmann::json iters = nlohmann::json::array();
  for (const SeIteration& it : trace.iterations) {
    iters.push_back({{"gamma1", it.gamma1},
                     {"tau1", it.tau1},
                     {"alpha1", it.alpha1},
                     {"eta1", it.eta1},
                     {"gamma2", it.gamma2},
                     {"tau2", it.tau2},
                     {"alpha2", it.alpha2},
                     {"eta2", it.eta2},
                     {"mse1", it.mse1},
                     {"mse2", it.mse2}});
  }
  doc["per_iteration"] = iters;
  if (!trace.iterations.empty()) {
    const SeIteration& last = trace.iterations.back();
    const double nmse = last.mse2 / signal_second_moment;
    doc["fixed_point"] = {{"gamma1", last.gamma1},
                          {"eta", last.eta2},
                          {"nmse_db", 10.0 * std::log10(nmse)}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_se_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace vamp
