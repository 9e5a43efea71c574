#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "vamp/matgen.hpp"
#include "vamp/rng.hpp"
#include "vamp/state_evolution.hpp"

using namespace vamp;

namespace {

SpectralDistribution one_point(double s) {
  return SpectralDistribution::from_values_weights(Vector::Constant(1, s),
                                                   Vector::Constant(1, 1.0));
}

SpectralDistribution two_point(double a, double b) {
  Vector v(2), w(2);
  v << a, b;
  w << 0.5, 0.5;
  return SpectralDistribution::from_values_weights(v, w);
}

}  // namespace

TEST_CASE("SpectralDistribution: zero padding and validation") {
  Vector s(2);
  s << 2.0, 1.0;
  const SpectralDistribution d = SpectralDistribution::from_singular_values(s, 4);
  REQUIRE(d.values.size() == 3);
  CHECK(d.values[2] == 0.0);
  CHECK(d.weights[0] == doctest::Approx(0.25));
  CHECK(d.weights[2] == doctest::Approx(0.5));
  CHECK(d.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(SpectralDistribution::from_values_weights(
                      Vector::Zero(2), Vector::Constant(2, 0.5)),
                  std::invalid_argument);  // E[S] = 0
  Vector bad_w(2);
  bad_w << 0.7, 0.7;
  CHECK_THROWS_AS(
      SpectralDistribution::from_values_weights(s, bad_w),
      std::invalid_argument);
}

TEST_CASE("error_fn_denoiser: linear-Gaussian closed form") {
  const Denoiser d = Denoiser::bg_mmse({1.0, 1.0});
  CHECK(error_fn_denoiser(d, 1.0, 1.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // vanishing noise, matched
  CHECK(error_fn_denoiser(d, 1e10, 1e-10) <= 1e-9);
  CHECK_THROWS_AS(error_fn_denoiser(d, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("error_fn_denoiser: Monte-Carlo oracle at gamma=10") {
  const BgPrior prior{0.1, 1.0};
  const Denoiser d = Denoiser::bg_mmse(prior);
  const double gamma1 = 10.0, tau1 = 0.1;
  Rng rng(2718);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> nx(0.0, 1.0);
  std::normal_distribution<double> np(0.0, std::sqrt(tau1));
  const int n = 10000000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = unif(rng) < prior.rho ? nx(rng) : 0.0;
    const double e = d(x + np(rng), gamma1).xhat - x;
    acc += e * e;
    acc2 += e * e * e * e;
  }
  const double mc = acc / n;
  const double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(error_fn_denoiser(d, gamma1, tau1) - mc) <= 3 * se);
}

TEST_CASE("sens_fn_denoiser: constant derivative for the Gaussian prior") {
  const Denoiser d = Denoiser::bg_mmse({1.0, 1.0});
  for (double tau : {0.0, 0.3, 2.0})
    CHECK(sens_fn_denoiser(d, 1.0, tau) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("matched identity A1 = gamma1 * E1 across a gamma grid") {
  const Denoiser d = Denoiser::bg_mmse({0.1, 1.0});
  for (double gamma : {0.5, 5.0, 50.0, 500.0, 5000.0}) {
    const double a1 = sens_fn_denoiser(d, gamma, 1.0 / gamma);
    const double e1 = error_fn_denoiser(d, gamma, 1.0 / gamma);
    CHECK(a1 == doctest::Approx(gamma * e1).epsilon(1e-10));
  }
}

TEST_CASE("sens_fn_denoiser: dead-zone soft threshold has zero sensitivity") {
  const Denoiser st = Denoiser::soft_threshold(1.0);
  // signal concentrated far inside the dead zone |r| < lambda/gamma = 1
  const BgPrior tiny_signal{1.0, 1e-12};
  CHECK(sens_fn_denoiser(st, tiny_signal, 1.0, 0.0) == 0.0);
}

TEST_CASE("error_fn_lmmse: closed-form points") {
  const SpectralDistribution s1 = one_point(1.0);
  CHECK(error_fn_lmmse(s1, 1.0, 1.0, 1.0, 1.0) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // no measurement information
  const SpectralDistribution spec = two_point(0.5, 2.0);
  CHECK(error_fn_lmmse(spec, 3.0, 0.42, 0.0, 1.0) ==
        doctest::Approx(0.42).epsilon(1e-14));
  CHECK(sens_fn_lmmse(s1, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(sens_fn_lmmse(spec, 3.0, 0.0) == 1.0);
}

TEST_CASE("lmmse error/sensitivity: dense-trace oracles on a random instance") {
  const ProblemInstance p = synthesize_problem(Ensemble::nonzero_mean(0.2), 32,
                                               48, {0.1, 1.0}, 22.0, 404);
  const SpectralDistribution spec = SpectralDistribution::from_instance(p);
  const double gamma2 = 1.9, tau2 = 0.23, gamma_w = 1.4;
  const Matrix gram = p.a.transpose() * p.a;
  const Matrix q = gamma_w * gram + gamma2 * Matrix::Identity(p.n, p.n);
  const Matrix qt = (gamma_w * gamma_w / p.gamma_w0) * gram +
                    tau2 * gamma2 * gamma2 * Matrix::Identity(p.n, p.n);
  const Matrix qinv = q.inverse();
  const double e2_dense = (qinv * qinv * qt).trace() / double(p.n);
  CHECK(error_fn_lmmse(spec, gamma2, tau2, gamma_w, p.gamma_w0) ==
        doctest::Approx(e2_dense).epsilon(1e-10));
  const double a2_dense = gamma2 * qinv.trace() / double(p.n);
  CHECK(sens_fn_lmmse(spec, gamma2, gamma_w) ==
        doctest::Approx(a2_dense).epsilon(1e-10));
}

TEST_CASE("se_run: matched inputs collapse onto se_matched_run") {
  const BgPrior prior{0.1, 1.0};
  const Denoiser den = Denoiser::bg_mmse(prior);
  for (const auto& [kappa, snr] : {std::pair{1.0, 10.0}, {1000.0, 40.0}}) {
    const SpectralDistribution spec =
        SpectralDistribution::geometric(512, 1024, kappa);
    const double gamma_w0 = gamma_w0_for_snr(512, 1024, prior, snr);
    const SeTrace gen =
        se_run(den, spec, gamma_w0, gamma_w0, prior.second_moment(),
               1.0 / prior.second_moment(), 60);
    const SeTrace matched = se_matched_run(prior, spec, gamma_w0, 60);
    const size_t len =
        std::min(gen.iterations.size(), matched.iterations.size());
    REQUIRE(len >= 10);
    for (size_t k = 0; k < len; ++k) {
      const SeIteration& a = gen.iterations[k];
      const SeIteration& b = matched.iterations[k];
      CHECK(std::abs(a.gamma1 - b.gamma1) <= 1e-10 * b.gamma1);
      CHECK(std::abs(a.gamma2 - b.gamma2) <= 1e-10 * b.gamma2);
      CHECK(std::abs(a.eta1 - b.eta1) <= 1e-10 * b.eta1);
      CHECK(std::abs(a.eta2 - b.eta2) <= 1e-10 * b.eta2);
      CHECK(std::abs(a.tau2 - 1.0 / a.gamma2) <= 1e-10 / a.gamma2);
    }
  }
}

TEST_CASE("se_run: strongly log-concave prior keeps alpha in (0,1)") {
  const BgPrior prior{1.0, 1.0};
  const Denoiser den = Denoiser::bg_mmse(prior);
  const SpectralDistribution spec =
      SpectralDistribution::geometric(64, 128, 50.0);
  for (double gamma_w : {0.1, 1.0, 100.0}) {
    const SeTrace trace = se_run(den, spec, gamma_w, gamma_w, 1.0, 1.0, 40);
    for (const SeIteration& it : trace.iterations) {
      CHECK(it.alpha1 > 0.0);
      CHECK(it.alpha1 < 1.0);
      CHECK(it.alpha2 > 0.0);
      CHECK(it.alpha2 < 1.0);
    }
  }
}

TEST_CASE("se_run: kappa=1000 trajectory decreases monotonically to its "
          "fixed point within 20 iterations") {
  // The matched fixed point at this config is -38.28 dB NMSE (verified by
  // two independent routes), so the trajectory is checked against it rather
  // than an absolute level it cannot cross.
  const BgPrior prior{0.1, 1.0};
  const SpectralDistribution spec =
      SpectralDistribution::geometric(512, 1024, 1000.0);
  const double gamma_w0 = gamma_w0_for_snr(512, 1024, prior, 40.0);
  const SeTrace trace = se_run(Denoiser::bg_mmse(prior), spec, gamma_w0,
                               gamma_w0, prior.second_moment(),
                               1.0 / prior.second_moment(), 20);
  const ReplicaSolution fixed = replica_solve(prior, spec, gamma_w0);
  CHECK(10.0 * std::log10(fixed.nmse) == doctest::Approx(-38.28).epsilon(0.01));
  double prev_db = 0.0;
  bool monotone = true;
  for (size_t k = 0; k < trace.iterations.size(); ++k) {
    const double db =
        10.0 * std::log10(trace.iterations[k].mse1 / prior.second_moment());
    if (k > 0 && db > prev_db + 1e-9) monotone = false;
    prev_db = db;
  }
  CHECK(monotone);
  CHECK(prev_db <= 10.0 * std::log10(fixed.nmse) + 0.5);
}

TEST_CASE("se_run: invalid sensitivity raises se_invalid with the iteration") {
  const Denoiser st = Denoiser::soft_threshold(1e9);
  const BgPrior signal{0.5, 1.0};
  const SpectralDistribution spec = SpectralDistribution::geometric(8, 16, 2.0);
  try {
    se_run(st, signal, spec, 1.0, 1.0, 0.01, 1.0, 10);
    FAIL("expected SeInvalidError");
  } catch (const SeInvalidError& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("stieltjes transform: exact sums and domain") {
  const SpectralDistribution eigs2 = one_point(2.0);  // eigenvalue law
  CHECK(stieltjes(eigs2, -1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  const SpectralDistribution pair = two_point(1.0, 4.0);
  CHECK(stieltjes(pair, 0.0) == doctest::Approx(0.625).epsilon(1e-14));
  // omega -> -inf limit
  const double far = stieltjes(pair, -1e9);
  CHECK(far > 0.0);
  CHECK(far <= 1e-8);
  CHECK(stieltjes(pair, -10.0) > stieltjes(pair, -20.0));
  CHECK_THROWS_AS(stieltjes(pair, 1.0), std::domain_error);
}

TEST_CASE("r_transform: constant spectrum") {
  const SpectralDistribution eigs = one_point(3.0);
  for (double omega : {-0.5, -1.0, -2.0})
    CHECK(r_transform(eigs, omega) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK_THROWS_AS(r_transform(eigs, 0.0), std::domain_error);
  CHECK_THROWS_AS(r_transform(eigs, 0.7), std::domain_error);
}

TEST_CASE("r_transform: two-point spectrum quadratic oracle") {
  const SpectralDistribution pair = two_point(1.0, 4.0);
  // S(z) = 0.5/(1-z) + 0.5/(4-z) = 0.1 has the branch root
  // z = (-5 - sqrt(109)) / 2 below lambda_min = 1.
  const double z = (-5.0 - std::sqrt(109.0)) / 2.0;
  const double expected = z + 10.0;  // minus 1/omega with omega = -0.1
  CHECK(r_transform(pair, -0.1) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("r_transform: definitional round trip") {
  const SpectralDistribution pair = two_point(0.5, 2.5);
  for (double omega : {-0.05, -0.4, -3.0}) {
    const double z = r_transform(pair, omega) + 1.0 / omega;
    CHECK(stieltjes(pair, z) == doctest::Approx(-omega).epsilon(1e-10));
  }
}

TEST_CASE("replica_solve: hand-solved symmetric fixed point") {
  const BgPrior prior{1.0, 1.0};
  const ReplicaSolution sol = replica_solve(prior, one_point(1.0), 1.0);
  CHECK(sol.converged);
  CHECK(sol.gamma1_star == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.eta_star == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol.mse == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("replica_solve: row-orthogonal SNR table") {
  const BgPrior prior{0.1, 1.0};
  const SpectralDistribution spec =
      SpectralDistribution::geometric(512, 1024, 1.0);
  const double expected[] = {5.09e-2, 3.50e-3, 2.75e-4};
  const double snrs[] = {10.0, 20.0, 30.0};
  for (int i = 0; i < 3; ++i) {
    const ReplicaSolution sol = replica_solve(
        prior, spec, gamma_w0_for_snr(512, 1024, prior, snrs[i]));
    CHECK(sol.converged);
    CHECK(std::abs(sol.nmse - expected[i]) <= 0.02 * expected[i]);
  }
}

TEST_CASE("replica_solve: constant spectrum collapses to one equation") {
  const BgPrior prior{0.1, 1.0};
  const double s = std::sqrt(2.0), gamma_w0 = 3.0;
  const ReplicaSolution sol = replica_solve(prior, one_point(s), gamma_w0);
  CHECK(sol.converged);
  // R-transform of a one-point eigenvalue law is the constant gamma_w0 s^2
  CHECK(sol.gamma1_star ==
        doctest::Approx(gamma_w0 * s * s).epsilon(1e-9));
  const double e1 = error_fn_denoiser(Denoiser::bg_mmse(prior),
                                      sol.gamma1_star, 1.0 / sol.gamma1_star);
  CHECK(sol.mse == doctest::Approx(e1).epsilon(1e-9));
}

TEST_CASE("quadrature vs Monte-Carlo on a (gamma,tau) grid") {
  const BgPrior prior{0.1, 1.0};
  const Denoiser d = Denoiser::bg_mmse(prior);
  Rng rng(5151);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> nx(0.0, 1.0);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const int n = 1000000;
  for (double gamma : {1.0, 31.6, 1000.0}) {
    for (double tau : {1.0 / gamma, 0.5 / gamma, 5.0 / gamma}) {
      double e_acc = 0.0, e_acc2 = 0.0, a_acc = 0.0, a_acc2 = 0.0;
      const double sp = std::sqrt(tau);
      for (int i = 0; i < n; ++i) {
        const double x = unif(rng) < prior.rho ? nx(rng) : 0.0;
        const DenoiserResult res = d(x + sp * std_normal(rng), gamma);
        const double e = (res.xhat - x) * (res.xhat - x);
        e_acc += e;
        e_acc2 += e * e;
        a_acc += res.deriv;
        a_acc2 += res.deriv * res.deriv;
      }
      const double e_mc = e_acc / n;
      const double e_se = std::sqrt((e_acc2 / n - e_mc * e_mc) / n);
      const double a_mc = a_acc / n;
      const double a_se = std::sqrt((a_acc2 / n - a_mc * a_mc) / n);
      CHECK(std::abs(error_fn_denoiser(d, gamma, tau) - e_mc) <= 3.5 * e_se);
      CHECK(std::abs(sens_fn_denoiser(d, gamma, tau) - a_mc) <= 3.5 * a_se);
    }
  }
}

TEST_CASE("se fixed point: eta1 = eta2 and gamma1 monotone after iteration 2") {
  const BgPrior prior{0.1, 1.0};
  for (const auto& [kappa, snr] :
       {std::pair{1.0, 10.0}, {1.0, 40.0}, {1000.0, 40.0}}) {
    const SpectralDistribution spec =
        SpectralDistribution::geometric(512, 1024, kappa);
    const double gamma_w0 = gamma_w0_for_snr(512, 1024, prior, snr);
    const SeTrace trace = se_matched_run(prior, spec, gamma_w0, 10000);
    REQUIRE(trace.reached_fixed_point);
    const SeIteration& last = trace.iterations.back();
    CHECK(std::abs(last.eta1 - last.eta2) <= 1e-10 * last.eta1);
    for (size_t k = 3; k < trace.iterations.size(); ++k)
      CHECK(trace.iterations[k].gamma1 >=
            trace.iterations[k - 1].gamma1 * (1.0 - 1e-12));
  }
}

TEST_CASE("gram_eigenvalues scales squared singular values") {
  const SpectralDistribution spec = two_point(1.0, 2.0);
  const SpectralDistribution eigs = gram_eigenvalues(spec, 3.0);
  CHECK(eigs.values[0] == doctest::Approx(3.0));
  CHECK(eigs.values[1] == doctest::Approx(12.0));
}
