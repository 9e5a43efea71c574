#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vamp/harness.hpp"
#include "vamp/rng.hpp"

using namespace vamp;

TEST_CASE("nmse") {
  Vector x0(3);
  x0 << 1.0, -2.0, 3.0;
  CHECK(nmse(x0, x0) == 0.0);
  CHECK(nmse(Vector::Zero(3), x0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nmse(2 * x0, x0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(nmse(x0, Vector::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(nmse(Vector::Zero(2), x0), std::invalid_argument);
}

TEST_CASE("gaussianity_report: exact Gaussian noise") {
  const Index n = 4096;
  Rng rng(8);
  const double tau = 0.37;
  const Vector x0 = gaussian_vector(n, rng, 0.0, 1.0);
  const Vector r1 = x0 + gaussian_vector(n, rng, 0.0, std::sqrt(tau));
  const GaussianityReport rep = gaussianity_report(r1, x0, tau);
  CHECK(rep.var_ratio > 0.9);
  CHECK(rep.var_ratio < 1.1);
  CHECK(std::abs(rep.excess_kurtosis) < 0.2);
}

TEST_CASE("gaussianity_report: uniform noise has excess kurtosis -1.2") {
  const Index n = 100000;
  Rng rng(9);
  const double tau = 1.0;
  const double half_width = std::sqrt(3.0 * tau);  // same variance
  std::uniform_real_distribution<double> unif(-half_width, half_width);
  const Vector x0 = gaussian_vector(n, rng, 0.0, 1.0);
  Vector r1 = x0;
  for (Index i = 0; i < n; ++i) r1[i] += unif(rng);
  const GaussianityReport rep = gaussianity_report(r1, x0, tau);
  CHECK(std::abs(rep.excess_kurtosis + 1.2) < 0.1);
}

TEST_CASE("gaussianity_report: input validation") {
  const Vector v = Vector::Zero(2048);
  CHECK_THROWS_AS(gaussianity_report(v, Vector::Zero(1024), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussianity_report(Vector::Zero(128), Vector::Zero(128), 1.0),
                  std::invalid_argument);
}

TEST_CASE("aggregate_nmse: arithmetic") {
  const AlgoAggregate agg = aggregate_nmse("vamp", {0.1, 0.2, 0.9});
  CHECK(agg.median_nmse == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(agg.mean_nmse == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(agg.trials == 3);
  CHECK(agg.diverged == 0);
  CHECK(agg.dev_plus_db > 0.0);
  CHECK(agg.dev_minus_db > 0.0);
}

TEST_CASE("aggregate_nmse: clipping and divergence accounting") {
  const double inf = std::numeric_limits<double>::infinity();
  const AlgoAggregate agg = aggregate_nmse("amp", {0.5, 3.7, inf, 0.2});
  CHECK(agg.diverged == 2);
  CHECK(agg.median_nmse <= 1.0);
  CHECK(agg.mean_nmse <= 1.0);
  CHECK(agg.mean_nmse == doctest::Approx((0.5 + 1.0 + 1.0 + 0.2) / 4));
}

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.kind = ExperimentKind::SnrTable;
  config.grid = {15.0, 25.0};
  config.m = 48;
  config.n = 96;
  config.trials = 6;
  config.algorithms = {Algo::Vamp, Algo::Oracle, Algo::Se, Algo::Replica};
  config.seed = 99;
  return config;
}

std::string results_string(const std::vector<AggregateResult>& results) {
  std::ostringstream out;
  write_results_csv(results, out);
  return out.str();
}

}  // namespace

TEST_CASE("run_experiment: deterministic across runs and worker counts") {
  const ExperimentConfig config = small_config();
  const std::string a = results_string(run_experiment(config, 1));
  const std::string b = results_string(run_experiment(config, 1));
  const std::string c = results_string(run_experiment(config, 3));
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a.find("vamp") != std::string::npos);
  CHECK(a.find("replica") != std::string::npos);
}

TEST_CASE("run_experiment: clipping keeps aggregates at or below 1") {
  ExperimentConfig config;
  config.kind = ExperimentKind::CondSweep;
  config.grid = {100.0};
  config.m = 64;
  config.n = 128;
  config.trials = 5;
  config.algorithms = {Algo::Amp};
  config.seed = 3;
  const std::vector<AggregateResult> results = run_experiment(config, 2);
  const AlgoAggregate* amp = results[0].find("amp");
  REQUIRE(amp != nullptr);
  CHECK(amp->median_nmse <= 1.0);
  CHECK(amp->mean_nmse <= 1.0);
  CHECK(amp->diverged > 0);
}

TEST_CASE("run_experiment: iter_trace emits per-iteration medians that track SE") {
  ExperimentConfig config;
  config.kind = ExperimentKind::IterTrace;
  config.grid = {1.0};
  config.m = 128;
  config.n = 256;
  config.snr_db = 30.0;
  config.trials = 16;
  config.algorithms = {Algo::Vamp, Algo::Se};
  config.seed = 12;
  const std::vector<AggregateResult> results = run_experiment(config, 2);
  const AlgoAggregate* vamp = results[0].find("vamp");
  const AlgoAggregate* se = results[0].find("se");
  REQUIRE(vamp != nullptr);
  REQUIRE(se != nullptr);
  REQUIRE(vamp->iter_median_db.size() >= 5);
  REQUIRE(se->iter_median_db.size() >= 5);
  const size_t len = std::min(vamp->iter_median_db.size(),
                              se->iter_median_db.size());
  // finite-N slack at small m,n; the acceptance suite runs the paper scale
  for (size_t k = 1; k < len; ++k)
    CHECK(std::abs(vamp->iter_median_db[k] - se->iter_median_db[k]) <= 2.0);
}

TEST_CASE("experiment outputs: files land in out_dir") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vamp_harness_test";
  fs::remove_all(dir);
  ExperimentConfig config = small_config();
  config.out_dir = dir.string();
  const std::vector<AggregateResult> results = run_experiment(config, 2);
  write_experiment_outputs(config, results, 1.25);
  CHECK(fs::exists(dir / "results.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
  std::ifstream in(dir / "results.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "grid_value,algorithm,median_nmse_db,dev_plus_db,dev_minus_db,"
        "mean_nmse,stderr,diverged_count,trials");
  fs::remove_all(dir);
}

TEST_CASE("config JSON round trip") {
  ExperimentConfig config = small_config();
  config.kind = ExperimentKind::MeanSweep;
  config.grid = {0.001, 1.0};
  config.prior = {0.2, 1.5};
  config.damp = 0.9;
  config.out_dir = "somewhere";
  const ExperimentConfig back = config_from_json(config_to_json(config));
  CHECK(back.kind == config.kind);
  CHECK(back.grid == config.grid);
  CHECK(back.m == config.m);
  CHECK(back.n == config.n);
  CHECK(back.prior.rho == config.prior.rho);
  CHECK(back.prior.sigma_x2 == config.prior.sigma_x2);
  CHECK(back.trials == config.trials);
  CHECK(back.algorithms == config.algorithms);
  CHECK(back.seed == config.seed);
  CHECK(back.out_dir == config.out_dir);
  CHECK(back.damp == config.damp);

  CHECK_THROWS_AS(config_from_json("{\"kind\": \"bogus\"}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json("{\"algorithms\": [\"nope\"]}"),
                  std::invalid_argument);
}

TEST_CASE("ExperimentConfig: defaults per kind") {
  ExperimentConfig config;
  config.kind = ExperimentKind::CondSweep;
  config.apply_defaults();
  CHECK(config.trials == 500);
  CHECK(config.grid.size() == 7);
  ExperimentConfig snr;
  snr.kind = ExperimentKind::SnrTable;
  snr.apply_defaults();
  CHECK(snr.trials == 1000);
  CHECK(snr.grid == std::vector<double>{10.0, 20.0, 30.0});
  ExperimentConfig mean;
  mean.kind = ExperimentKind::MeanSweep;
  mean.apply_defaults();
  CHECK(mean.trials == 200);
}
