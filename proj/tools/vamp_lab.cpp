// Command-line front end: experiment sweeps, single solves, analytic
// state-evolution / replica predictions, and the oracle self-test suite.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "vamp/harness.hpp"
#include "vamp/oracle.hpp"

namespace fs = std::filesystem;
using namespace vamp;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

std::vector<double> parse_double_list(const std::string& s,
                                      const std::string& field) {
  std::vector<double> values;
  for (const std::string& part : split_csv(s)) {
    try {
      values.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw std::invalid_argument("invalid number in " + field + ": " + part);
    }
  }
  if (values.empty()) throw std::invalid_argument(field + ": empty list");
  return values;
}

std::vector<Algo> parse_algo_list(const std::string& s) {
  std::vector<Algo> algos;
  for (const std::string& part : split_csv(s)) {
    const auto algo = parse_algo(part);
    if (!algo) throw std::invalid_argument("unknown algorithm: " + part);
    algos.push_back(*algo);
  }
  return algos;
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
  if (const char* env = std::getenv("VAMP_LAB_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument("VAMP_LAB_SEED is not a valid seed");
    }
  }
  return fallback;
}

// Dotted-path override onto an ExperimentConfig (e.g. prior.rho=0.2).
void apply_override(ExperimentConfig& config, const std::string& entry) {
  const auto eq = entry.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must be key=value: " + entry);
  const std::string key = entry.substr(0, eq);
  const std::string value = entry.substr(eq + 1);
  auto as_double = [&]() { return std::stod(value); };
  auto as_int = [&]() { return std::stoi(value); };
  if (key == "kind") {
    const auto kind = parse_kind(value);
    if (!kind) throw std::invalid_argument("unknown kind: " + value);
    config.kind = *kind;
  } else if (key == "grid") {
    config.grid = parse_double_list(value, "grid");
  } else if (key == "m") {
    config.m = as_int();
  } else if (key == "n") {
    config.n = as_int();
  } else if (key == "prior.rho") {
    config.prior.rho = as_double();
  } else if (key == "prior.sigma_x2") {
    config.prior.sigma_x2 = as_double();
  } else if (key == "snr_db") {
    config.snr_db = as_double();
  } else if (key == "trials") {
    config.trials = as_int();
  } else if (key == "algorithms") {
    config.algorithms = parse_algo_list(value);
  } else if (key == "seed") {
    config.seed = std::stoull(value);
  } else if (key == "out_dir") {
    config.out_dir = value;
  } else if (key == "kappa") {
    config.kappa = as_double();
  } else if (key == "damp") {
    config.damp = as_double();
  } else if (key == "tol") {
    config.tol = as_double();
  } else if (key == "max_iters_vamp") {
    config.max_iters_vamp = as_int();
  } else if (key == "max_iters_amp") {
    config.max_iters_amp = as_int();
  } else {
    throw std::invalid_argument("unknown config field: " + key);
  }
}

struct RunFlags {
  std::string config_path, kind, kappa_list, mu_list, snr_list, algo_list;
  std::vector<std::string> overrides;
  Index m = 0, n = 0;
  double rho = -1.0, sigma_x2 = -1.0, snr_db = std::nan("");
  int trials = -1, workers = 0, max_iters = -1;
  double damp = -1.0, tol = -1.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
};

ExperimentConfig build_run_config(const RunFlags& f) {
  ExperimentConfig config;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in)
      throw std::invalid_argument("cannot read config: " + f.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    config = config_from_json(buf.str());
  }
  if (!f.kind.empty()) {
    const auto kind = parse_kind(f.kind);
    if (!kind) throw std::invalid_argument("unknown kind: " + f.kind);
    config.kind = *kind;
  }
  if (f.m > 0) config.m = f.m;
  if (f.n > 0) config.n = f.n;
  if (f.rho > 0) config.prior.rho = f.rho;
  if (f.sigma_x2 > 0) config.prior.sigma_x2 = f.sigma_x2;
  if (f.trials >= 0) config.trials = f.trials;
  if (f.damp > 0) config.damp = f.damp;
  if (f.tol >= 0) config.tol = f.tol;
  if (f.max_iters > 0) {
    config.max_iters_vamp = f.max_iters;
    config.max_iters_amp = f.max_iters;
  }
  if (!f.algo_list.empty()) config.algorithms = parse_algo_list(f.algo_list);
  if (!f.out_dir.empty()) config.out_dir = f.out_dir;
  config.seed = f.seed_given ? f.seed : env_seed_or(config.seed);

  // grid / scalar parameters depending on the sweep kind
  switch (config.kind) {
    case ExperimentKind::CondSweep:
    case ExperimentKind::IterTrace:
      if (!f.kappa_list.empty())
        config.grid = parse_double_list(f.kappa_list, "kappa");
      if (!std::isnan(f.snr_db)) config.snr_db = f.snr_db;
      break;
    case ExperimentKind::MeanSweep:
      if (!f.mu_list.empty()) config.grid = parse_double_list(f.mu_list, "mu");
      if (!std::isnan(f.snr_db)) config.snr_db = f.snr_db;
      break;
    case ExperimentKind::SnrTable:
      if (!f.snr_list.empty())
        config.grid = parse_double_list(f.snr_list, "snr_db");
      else if (!std::isnan(f.snr_db))
        config.grid = {f.snr_db};
      if (!f.kappa_list.empty())
        config.kappa = parse_double_list(f.kappa_list, "kappa").front();
      break;
  }
  for (const std::string& entry : f.overrides) apply_override(config, entry);
  return config;
}

void print_results(const std::vector<AggregateResult>& results) {
  for (const AggregateResult& res : results)
    for (const AlgoAggregate& a : res.per_algo)
      std::printf(
          "grid=%-10g %-8s median %.4e (%8.3f dB)  mean %.4e (%8.3f dB)  "
          "stderr %.2e  diverged %d/%d\n",
          res.grid_value, a.algo.c_str(), a.median_nmse,
          to_db(a.median_nmse), a.mean_nmse, to_db(a.mean_nmse),
          a.stderr_nmse, a.diverged, a.trials);
}

int cmd_run(const RunFlags& flags) {
  ExperimentConfig config = build_run_config(flags);
  config.apply_defaults();
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<AggregateResult> results =
      run_experiment(config, flags.workers);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_experiment_outputs(config, results, wall);
  print_results(results);
  std::printf("wrote %s/results.csv (%.1fs)\n", config.out_dir.c_str(), wall);
  return 0;
}

struct PointFlags {
  double kappa = 1.0, mu = std::nan(""), snr_db = 40.0;
  Index m = 512, n = 1024;
  double rho = 0.1, sigma_x2 = 1.0;
  int max_iters = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir = ".", json_path;
};

int cmd_se(const PointFlags& f, bool fixed_point_only) {
  const BgPrior prior{f.rho, f.sigma_x2};
  prior.validate();
  const double gamma_w0 = gamma_w0_for_snr(f.m, f.n, prior, f.snr_db);
  SpectralDistribution spectrum;
  if (!std::isnan(f.mu)) {
    const std::uint64_t seed = f.seed_given ? f.seed : env_seed_or(1);
    spectrum = SpectralDistribution::from_instance(synthesize_problem(
        Ensemble::nonzero_mean(f.mu), f.m, f.n, prior, f.snr_db, seed));
  } else {
    spectrum = SpectralDistribution::geometric(f.m, f.n, f.kappa);
  }
  const double second_moment = prior.second_moment();

  if (!fixed_point_only) {
    const Denoiser denoiser = Denoiser::bg_mmse(prior);
    const int k_max = f.max_iters > 0 ? f.max_iters : 50;
    const SeTrace trace =
        se_run(denoiser, prior, spectrum, gamma_w0, gamma_w0, second_moment,
               1.0 / second_moment, k_max);
    std::printf("%4s %12s %12s %12s %12s %12s %10s\n", "k", "gamma1", "eta1",
                "gamma2", "eta2", "nmse", "nmse_db");
    for (size_t k = 0; k < trace.iterations.size(); ++k) {
      const SeIteration& it = trace.iterations[k];
      const double nmse_k = it.mse1 / second_moment;
      std::printf("%4zu %12.5e %12.5e %12.5e %12.5e %12.5e %10.3f\n", k,
                  it.gamma1, it.eta1, it.gamma2, it.eta2, nmse_k,
                  to_db(nmse_k));
    }
    if (!f.json_path.empty())
      write_se_json(trace, prior, gamma_w0, second_moment, f.json_path);
  }

  const ReplicaSolution sol = replica_solve(prior, spectrum, gamma_w0);
  std::printf(
      "fixed point: gamma1 %.6e  eta %.6e  mse %.6e  nmse %.6e (%.3f dB)  "
      "converged %s in %d iterations\n",
      sol.gamma1_star, sol.eta_star, sol.mse, sol.nmse, to_db(sol.nmse),
      sol.converged ? "yes" : "no", sol.iterations);
  if (fixed_point_only && !f.json_path.empty()) {
    std::ofstream out(f.json_path);
    out << "{\n  \"gamma1\": " << sol.gamma1_star
        << ",\n  \"eta\": " << sol.eta_star << ",\n  \"nmse\": " << sol.nmse
        << ",\n  \"nmse_db\": " << to_db(sol.nmse)
        << ",\n  \"converged\": " << (sol.converged ? "true" : "false")
        << "\n}\n";
  }
  return 0;
}

struct SolveFlags : PointFlags {
  std::string algo = "vamp";
  bool trace = false;
  double damp = 0.97, tol = 1e-4;
};

int cmd_solve(const SolveFlags& f) {
  const BgPrior prior{f.rho, f.sigma_x2};
  prior.validate();
  const std::uint64_t seed = f.seed_given ? f.seed : env_seed_or(1);
  const Ensemble ensemble = std::isnan(f.mu) ? Ensemble::rotinv(f.kappa)
                                             : Ensemble::nonzero_mean(f.mu);
  const ProblemInstance problem =
      synthesize_problem(ensemble, f.m, f.n, prior, f.snr_db, seed);
  const Denoiser denoiser = Denoiser::bg_mmse(prior);

  if (f.algo == "oracle") {
    const Vector xo = support_oracle_mmse(
        problem, SupportSet::from_signal(problem.x0), prior);
    const double v = nmse(xo, problem.x0);
    std::printf("oracle nmse %.6e (%.3f dB)\n", v, to_db(v));
    return 0;
  }

  AlgorithmTrace trace;
  if (f.algo == "vamp" || f.algo == "vamp-lmmse") {
    SolverOptions opts = SolverOptions::vamp_defaults(problem.gamma_w0);
    opts.damp = f.damp;
    opts.tol = f.tol;
    if (f.max_iters > 0) opts.max_iters = f.max_iters;
    trace = f.algo == "vamp" ? vamp_svd_run(problem, denoiser, opts)
                             : vamp_lmmse_run(problem, denoiser, opts);
  } else if (f.algo == "amp" || f.algo == "ist") {
    SolverOptions opts = SolverOptions::amp_defaults(problem.gamma_w0);
    opts.tol = f.tol;
    if (f.max_iters > 0) opts.max_iters = f.max_iters;
    trace = f.algo == "amp" ? amp_run(problem, denoiser, opts)
                            : ist_run(problem, denoiser, opts);
  } else {
    throw std::invalid_argument("unknown algo: " + f.algo);
  }

  if (f.trace) {
    fs::create_directories(f.out_dir);
    const std::string path =
        (fs::path(f.out_dir) / ("trace_" + f.algo + ".csv")).string();
    std::ofstream out(path);
    write_trace_csv(trace, out);
    std::printf("wrote %s\n", path.c_str());
  }

  const char* cause = trace.termination.kind == Termination::Kind::Converged
                          ? "converged"
                          : (trace.termination.kind == Termination::Kind::MaxIters
                                 ? "max_iters"
                                 : "numerical_failure");
  const double v = trace.final_nmse();
  std::printf("%s: %zu iterations, %s, final nmse %.6e (%.3f dB)\n",
              f.algo.c_str(), trace.records.size(), cause, v, to_db(v));
  if (trace.termination.kind == Termination::Kind::NumericalFailure) {
    std::fprintf(stderr, "numerical failure: %s\n",
                 trace.termination.detail.c_str());
    return 2;
  }
  return 0;
}

bool check(bool ok, const char* name) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name);
  return ok;
}

int cmd_validate(std::uint64_t seed) {
  bool all = true;

  // VAMP form equivalence on random small instances
  {
    bool ok = true;
    for (int t = 0; t < 10 && ok; ++t) {
      const BgPrior prior{0.1, 1.0};
      const ProblemInstance p = synthesize_problem(
          Ensemble::rotinv(1.0 + 10.0 * t), 48, 96, prior, 30.0,
          substream_seed(seed, 10, t));
      SolverOptions opts = SolverOptions::vamp_defaults(p.gamma_w0);
      opts.damp = 1.0;
      opts.max_iters = 25;
      opts.tol = 0.0;
      const Denoiser den = Denoiser::bg_mmse(prior);
      const AlgorithmTrace a = vamp_svd_run(p, den, opts);
      const AlgorithmTrace b = vamp_lmmse_run(p, den, opts);
      ok = a.records.size() == b.records.size();
      for (size_t k = 0; ok && k < a.records.size(); ++k) {
        const IterationRecord& ra = a.records[k];
        const IterationRecord& rb = b.records[k];
        ok = std::abs(ra.gamma1 - rb.gamma1) <= 1e-8 * ra.gamma1 &&
             (ra.xhat1 - rb.xhat1).norm() <= 1e-8 * ra.xhat1.norm();
      }
    }
    all &= check(ok, "vamp svd/lmmse form equivalence");
  }

  // spectral vs dense-trace identities
  {
    const BgPrior prior{0.1, 1.0};
    const ProblemInstance p = synthesize_problem(
        Ensemble::nonzero_mean(0.1), 32, 48, prior, 20.0,
        substream_seed(seed, 11));
    const double gamma2 = 1.7, tau2 = 0.3, gamma_w = 2.1;
    const SpectralDistribution spec = SpectralDistribution::from_instance(p);
    const Matrix gram = p.a.transpose() * p.a;
    const Matrix q = gamma_w * gram +
                     gamma2 * Matrix::Identity(p.n, p.n);
    const Matrix qt = (gamma_w * gamma_w / p.gamma_w0) * gram +
                      tau2 * gamma2 * gamma2 * Matrix::Identity(p.n, p.n);
    const Matrix qinv = q.inverse();
    const double e2_dense = (qinv * qinv * qt).trace() / double(p.n);
    const double e2_spec =
        error_fn_lmmse(spec, gamma2, tau2, gamma_w, p.gamma_w0);
    const double a2_dense = gamma2 * qinv.trace() / double(p.n);
    const double a2_spec = sens_fn_lmmse(spec, gamma2, gamma_w);
    all &= check(std::abs(e2_dense - e2_spec) < 1e-10 &&
                     std::abs(a2_dense - a2_spec) < 1e-10,
                 "lmmse error/sensitivity spectral vs dense trace");
  }

  // denoiser derivative vs finite differences
  {
    Rng rng(substream_seed(seed, 12));
    const Denoiser den = Denoiser::bg_mmse({0.1, 1.0});
    bool ok = true;
    for (int i = 0; i < 200 && ok; ++i) {
      const double r = gaussian(rng, 0.0, 2.0);
      const double gamma = std::exp(gaussian(rng, 1.0, 1.5));
      const double h = 1e-4 / std::sqrt(gamma);
      const double fd =
          (den(r + h, gamma).xhat - den(r - h, gamma).xhat) / (2.0 * h);
      ok = std::abs(fd - den(r, gamma).deriv) < 1e-5;
    }
    all &= check(ok, "denoiser analytic derivative vs finite differences");
  }

  // matched SE collapse and replica fixed-point identities
  {
    const BgPrior prior{0.1, 1.0};
    const SpectralDistribution spec =
        SpectralDistribution::geometric(512, 1024, 1.0);
    const double gamma_w0 = gamma_w0_for_snr(512, 1024, prior, 10.0);
    const Denoiser den = Denoiser::bg_mmse(prior);
    const SeTrace gen = se_run(den, prior, spec, gamma_w0, gamma_w0,
                               prior.second_moment(),
                               1.0 / prior.second_moment(), 30);
    const SeTrace matched = se_matched_run(prior, spec, gamma_w0, 30);
    bool ok = true;
    const size_t len = std::min(gen.iterations.size(),
                                matched.iterations.size());
    for (size_t k = 0; k < len && ok; ++k)
      ok = std::abs(gen.iterations[k].gamma1 - matched.iterations[k].gamma1) <=
           1e-10 * matched.iterations[k].gamma1;
    const ReplicaSolution sol = replica_solve(prior, spec, gamma_w0);
    ok = ok && sol.converged;
    all &= check(ok, "matched SE collapse and replica fixed point");
  }

  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VAMP/AMP solver lab: solvers, state-evolution and replica "
               "predictions, Monte-Carlo experiment harness"};
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "run a Monte-Carlo experiment");
  run->add_option("--config", run_flags.config_path, "JSON config file");
  run->add_option("--kind", run_flags.kind,
                  "cond_sweep | mean_sweep | snr_table | iter_trace");
  run->add_option("--kappa", run_flags.kappa_list,
                  "condition number(s), comma separated");
  run->add_option("--mu", run_flags.mu_list, "matrix mean(s), comma separated");
  run->add_option("--snr-db", run_flags.snr_list,
                  "SNR value(s) in dB, comma separated");
  run->add_option("--m", run_flags.m, "rows");
  run->add_option("--n", run_flags.n, "columns");
  run->add_option("--rho", run_flags.rho, "sparsity probability");
  run->add_option("--sigma-x2", run_flags.sigma_x2, "slab variance");
  run->add_option("--trials", run_flags.trials, "trials per grid point");
  run->add_option("--seed", run_flags.seed, "master seed")
      ->each([&](const std::string&) { run_flags.seed_given = true; });
  run->add_option("--algo", run_flags.algo_list,
                  "comma list of vamp,amp,ist,se,replica,oracle");
  run->add_option("--out-dir", run_flags.out_dir, "output directory");
  run->add_option("--workers", run_flags.workers, "worker threads (0 = cores)");
  run->add_option("--damp", run_flags.damp, "damping factor");
  run->add_option("--tol", run_flags.tol, "stopping tolerance");
  run->add_option("--max-iters", run_flags.max_iters, "iteration cap");
  run->add_option("--set", run_flags.overrides,
                  "dotted-path override key=value (e.g. prior.rho=0.2)");

  PointFlags se_flags;
  CLI::App* se = app.add_subcommand(
      "se", "state-evolution trajectory and fixed point for one config");
  se->add_option("--kappa", se_flags.kappa, "condition number");
  se->add_option("--mu", se_flags.mu, "matrix mean (non-zero-mean ensemble)");
  se->add_option("--snr-db", se_flags.snr_db, "SNR in dB");
  se->add_option("--m", se_flags.m, "rows");
  se->add_option("--n", se_flags.n, "columns");
  se->add_option("--rho", se_flags.rho, "sparsity probability");
  se->add_option("--sigma-x2", se_flags.sigma_x2, "slab variance");
  se->add_option("--max-iters", se_flags.max_iters, "iterations to print");
  se->add_option("--seed", se_flags.seed, "seed (non-zero-mean spectrum draw)")
      ->each([&](const std::string&) { se_flags.seed_given = true; });
  se->add_option("--json", se_flags.json_path, "write JSON export here");

  PointFlags replica_flags;
  CLI::App* replica =
      app.add_subcommand("replica", "replica fixed point for one config");
  replica->add_option("--kappa", replica_flags.kappa, "condition number");
  replica->add_option("--mu", replica_flags.mu, "matrix mean");
  replica->add_option("--snr-db", replica_flags.snr_db, "SNR in dB");
  replica->add_option("--m", replica_flags.m, "rows");
  replica->add_option("--n", replica_flags.n, "columns");
  replica->add_option("--rho", replica_flags.rho, "sparsity probability");
  replica->add_option("--sigma-x2", replica_flags.sigma_x2, "slab variance");
  replica->add_option("--seed", replica_flags.seed, "seed")
      ->each([&](const std::string&) { replica_flags.seed_given = true; });
  replica->add_option("--json", replica_flags.json_path, "JSON output path");

  SolveFlags solve_flags;
  CLI::App* solve =
      app.add_subcommand("solve", "run one algorithm on one instance");
  solve->add_option("--algo", solve_flags.algo,
                    "vamp | vamp-lmmse | amp | ist | oracle");
  solve->add_option("--kappa", solve_flags.kappa, "condition number");
  solve->add_option("--mu", solve_flags.mu, "matrix mean");
  solve->add_option("--snr-db", solve_flags.snr_db, "SNR in dB");
  solve->add_option("--m", solve_flags.m, "rows");
  solve->add_option("--n", solve_flags.n, "columns");
  solve->add_option("--rho", solve_flags.rho, "sparsity probability");
  solve->add_option("--sigma-x2", solve_flags.sigma_x2, "slab variance");
  solve->add_option("--seed", solve_flags.seed, "instance seed")
      ->each([&](const std::string&) { solve_flags.seed_given = true; });
  solve->add_flag("--trace", solve_flags.trace, "write per-iteration CSV");
  solve->add_option("--out-dir", solve_flags.out_dir, "output directory");
  solve->add_option("--damp", solve_flags.damp, "damping factor");
  solve->add_option("--tol", solve_flags.tol, "stopping tolerance");
  solve->add_option("--max-iters", solve_flags.max_iters, "iteration cap");

  std::uint64_t validate_seed = 1;
  CLI::App* validate =
      app.add_subcommand("validate", "run the oracle/equivalence self-tests");
  validate->add_option("--seed", validate_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (se->parsed()) return cmd_se(se_flags, false);
    if (replica->parsed()) return cmd_se(replica_flags, true);
    if (solve->parsed()) return cmd_solve(solve_flags);
    if (validate->parsed()) return cmd_validate(validate_seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
