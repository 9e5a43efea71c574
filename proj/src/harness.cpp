#include "vamp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "vamp/oracle.hpp"
#include "vamp/rng.hpp"

namespace vamp {

namespace {

constexpr double kDbFloor = 1e-30;

struct TrialOutcome {
  double nmse_raw = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::vector<double> iter_nmse;  // filled for iter_trace experiments
};

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void asymmetric_devs_db(const std::vector<double>& linear, double median_lin,
                        double& dev_plus, double& dev_minus) {
  const double med_db = to_db(median_lin);
  double sum_p = 0.0, sum_m = 0.0;
  int n_p = 0, n_m = 0;
  for (double v : linear) {
    const double d = to_db(v) - med_db;
    if (d > 0.0) {
      sum_p += d * d;
      ++n_p;
    } else if (d < 0.0) {
      sum_m += d * d;
      ++n_m;
    }
  }
  dev_plus = n_p ? std::sqrt(sum_p / n_p) : 0.0;
  dev_minus = n_m ? std::sqrt(sum_m / n_m) : 0.0;
}

bool is_iterative(Algo a) {
  return a == Algo::Vamp || a == Algo::Amp || a == Algo::Ist;
}

}  // namespace

double to_db(double nmse_linear) {
  return 10.0 * std::log10(std::max(nmse_linear, kDbFloor));
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::CondSweep: return "cond_sweep";
    case ExperimentKind::MeanSweep: return "mean_sweep";
    case ExperimentKind::SnrTable: return "snr_table";
    case ExperimentKind::IterTrace: return "iter_trace";
  }
  return "unknown";
}

std::string to_string(Algo algo) {
  switch (algo) {
    case Algo::Vamp: return "vamp";
    case Algo::Amp: return "amp";
    case Algo::Ist: return "ist";
    case Algo::Se: return "se";
    case Algo::Replica: return "replica";
    case Algo::Oracle: return "oracle";
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_kind(const std::string& s) {
  if (s == "cond_sweep") return ExperimentKind::CondSweep;
  if (s == "mean_sweep") return ExperimentKind::MeanSweep;
  if (s == "snr_table") return ExperimentKind::SnrTable;
  if (s == "iter_trace") return ExperimentKind::IterTrace;
  return std::nullopt;
}

std::optional<Algo> parse_algo(const std::string& s) {
  if (s == "vamp") return Algo::Vamp;
  if (s == "amp") return Algo::Amp;
  if (s == "ist") return Algo::Ist;
  if (s == "se") return Algo::Se;
  if (s == "replica") return Algo::Replica;
  if (s == "oracle") return Algo::Oracle;
  return std::nullopt;
}

void ExperimentConfig::apply_defaults() {
  if (grid.empty()) {
    switch (kind) {
      case ExperimentKind::CondSweep:
        grid = {1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6};
        break;
      case ExperimentKind::MeanSweep:
        grid = {1e-3, 1e-2, 1e-1, 1e0, 1e1};
        break;
      case ExperimentKind::SnrTable:
        grid = {10.0, 20.0, 30.0};
        break;
      case ExperimentKind::IterTrace:
        grid = {1.0, 1000.0};
        break;
    }
  }
  if (trials == 0) {
    switch (kind) {
      case ExperimentKind::CondSweep: trials = 500; break;
      case ExperimentKind::MeanSweep: trials = 200; break;
      case ExperimentKind::SnrTable: trials = 1000; break;
      case ExperimentKind::IterTrace: trials = 500; break;
    }
  }
  if (algorithms.empty()) algorithms = {Algo::Vamp, Algo::Se, Algo::Replica};
}

void ExperimentConfig::validate() const {
  if (grid.empty()) throw std::invalid_argument("config: empty grid");
  if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
  if (m < 1 || n < m) throw std::invalid_argument("config: need 1 <= m <= n");
  prior.validate();
  if (algorithms.empty())
    throw std::invalid_argument("config: no algorithms selected");
  if (!(damp > 0.0 && damp <= 1.0))
    throw std::invalid_argument("config: damp must be in (0,1]");
  if (!(tol >= 0.0)) throw std::invalid_argument("config: tol must be >= 0");
  if (max_iters_vamp < 1 || max_iters_amp < 1)
    throw std::invalid_argument("config: iteration caps must be >= 1");
  if (kind == ExperimentKind::CondSweep || kind == ExperimentKind::IterTrace)
    for (double g : grid)
      if (!(g >= 1.0))
        throw std::invalid_argument("config: condition numbers must be >= 1");
}

const AlgoAggregate* AggregateResult::find(const std::string& algo) const {
  for (const AlgoAggregate& a : per_algo)
    if (a.algo == algo) return &a;
  return nullptr;
}

namespace {

Ensemble point_ensemble(const ExperimentConfig& config, double grid_value) {
  switch (config.kind) {
    case ExperimentKind::CondSweep:
    case ExperimentKind::IterTrace:
      return Ensemble::rotinv(grid_value);
    case ExperimentKind::MeanSweep:
      return Ensemble::nonzero_mean(grid_value);
    case ExperimentKind::SnrTable:
      return Ensemble::rotinv(config.kappa);
  }
  return Ensemble::rotinv(1.0);
}

double point_snr_db(const ExperimentConfig& config, double grid_value) {
  return config.kind == ExperimentKind::SnrTable ? grid_value : config.snr_db;
}

// Deterministic spectrum used for the SE/replica predictions: exact
// geometric law where the ensemble defines one, the spectrum of a dedicated
// representative draw for the non-zero-mean ensemble.
SpectralDistribution point_spectrum(const ExperimentConfig& config,
                                    size_t point_idx, double grid_value) {
  if (config.kind == ExperimentKind::MeanSweep) {
    const std::uint64_t rep_seed = substream_seed(config.seed, point_idx, 0, 1);
    const ProblemInstance rep = synthesize_problem(
        Ensemble::nonzero_mean(grid_value), config.m, config.n, config.prior,
        point_snr_db(config, grid_value), rep_seed);
    return SpectralDistribution::from_instance(rep);
  }
  const double kappa = config.kind == ExperimentKind::SnrTable
                           ? config.kappa
                           : grid_value;
  return SpectralDistribution::geometric(config.m, config.n, kappa);
}

void run_trial(const ExperimentConfig& config, size_t point_idx, int trial,
               double grid_value, std::vector<TrialOutcome>& out) {
  const bool want_iters = config.kind == ExperimentKind::IterTrace;
  const std::uint64_t seed =
      substream_seed(config.seed, point_idx, static_cast<std::uint64_t>(trial));
  const Denoiser denoiser = Denoiser::bg_mmse(config.prior);

  ProblemInstance problem;
  try {
    problem = synthesize_problem(point_ensemble(config, grid_value), config.m,
                                 config.n, config.prior,
                                 point_snr_db(config, grid_value), seed);
  } catch (const std::exception&) {
    for (TrialOutcome& t : out) t.failed = true;
    return;
  }

  for (size_t ai = 0; ai < config.algorithms.size(); ++ai) {
    const Algo algo = config.algorithms[ai];
    TrialOutcome& outcome = out[ai];
    try {
      if (algo == Algo::Oracle) {
        const Vector xo = support_oracle_mmse(
            problem, SupportSet::from_signal(problem.x0), config.prior);
        outcome.nmse_raw = nmse(xo, problem.x0);
        continue;
      }
      if (!is_iterative(algo)) continue;  // se/replica are per-point

      AlgorithmTrace trace;
      if (algo == Algo::Vamp) {
        SolverOptions opts = SolverOptions::vamp_defaults(problem.gamma_w0);
        opts.damp = config.damp;
        opts.tol = config.tol;
        opts.max_iters = config.max_iters_vamp;
        trace = vamp_svd_run(problem, denoiser, opts);
      } else {
        SolverOptions opts = SolverOptions::amp_defaults(problem.gamma_w0);
        opts.tol = config.tol;
        opts.max_iters = config.max_iters_amp;
        trace = algo == Algo::Amp
                    ? amp_run(problem, denoiser, opts,
                              AmpGammaRule::OnsagerRecursion)
                    : ist_run(problem, denoiser, opts);
      }
      outcome.failed =
          trace.termination.kind == Termination::Kind::NumericalFailure;
      outcome.nmse_raw = trace.final_nmse();
      if (want_iters) {
        outcome.iter_nmse.reserve(trace.records.size());
        for (const IterationRecord& rec : trace.records)
          outcome.iter_nmse.push_back(rec.nmse);
      }
    } catch (const std::exception&) {
      outcome.failed = true;
    }
  }
}

AlgoAggregate aggregate_trials(const std::string& name,
                               const std::vector<TrialOutcome>& outcomes,
                               bool want_iters, int max_iters) {
  std::vector<double> raw;
  raw.reserve(outcomes.size());
  for (const TrialOutcome& t : outcomes)
    raw.push_back(t.failed ? std::numeric_limits<double>::infinity()
                           : t.nmse_raw);
  AlgoAggregate agg = aggregate_nmse(name, raw);

  if (want_iters) {
    size_t len = 0;
    for (const TrialOutcome& t : outcomes)
      len = std::max(len, t.iter_nmse.size());
    len = std::min(len, static_cast<size_t>(max_iters));
    agg.iter_median_db.resize(len);
    agg.iter_dev_plus_db.resize(len);
    agg.iter_dev_minus_db.resize(len);
    std::vector<double> column(outcomes.size());
    for (size_t k = 0; k < len; ++k) {
      for (size_t t = 0; t < outcomes.size(); ++t) {
        const std::vector<double>& series = outcomes[t].iter_nmse;
        // carry the last value forward for trials that stopped early
        double v = series.empty()
                       ? 1.0
                       : series[std::min(k, series.size() - 1)];
        if (!std::isfinite(v)) v = 1.0;
        column[t] = std::min(v, 1.0);
      }
      const double med = median_of(column);
      agg.iter_median_db[k] = to_db(med);
      asymmetric_devs_db(column, med, agg.iter_dev_plus_db[k],
                         agg.iter_dev_minus_db[k]);
    }
  }
  return agg;
}

}  // namespace

std::vector<AggregateResult> run_experiment(const ExperimentConfig& input,
                                            int workers) {
  ExperimentConfig config = input;
  config.apply_defaults();
  config.validate();

  const size_t points = config.grid.size();
  const size_t n_algos = config.algorithms.size();
  // outcomes[point][trial][algo]
  std::vector<std::vector<std::vector<TrialOutcome>>> outcomes(points);
  for (size_t gi = 0; gi < points; ++gi)
    outcomes[gi].assign(config.trials,
                        std::vector<TrialOutcome>(n_algos));

  struct Task {
    size_t point;
    int trial;
  };
  std::vector<Task> tasks;
  tasks.reserve(points * config.trials);
  for (size_t gi = 0; gi < points; ++gi)
    for (int t = 0; t < config.trials; ++t) tasks.push_back({gi, t});

  int n_workers = workers > 0
                      ? workers
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (n_workers < 1) n_workers = 1;
  n_workers = std::min<int>(n_workers, static_cast<int>(tasks.size()));

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      run_trial(config, task.point, task.trial, config.grid[task.point],
                outcomes[task.point][task.trial]);
    }
  };
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  std::vector<AggregateResult> results(points);
  const bool want_iters = config.kind == ExperimentKind::IterTrace;
  for (size_t gi = 0; gi < points; ++gi) {
    AggregateResult& res = results[gi];
    res.grid_value = config.grid[gi];

    // deterministic predictions, computed once per grid point
    SpectralDistribution spectrum;
    double gamma_w0 = 0.0;
    const bool needs_predictions =
        std::count(config.algorithms.begin(), config.algorithms.end(),
                   Algo::Se) ||
        std::count(config.algorithms.begin(), config.algorithms.end(),
                   Algo::Replica);
    if (needs_predictions) {
      spectrum = point_spectrum(config, gi, config.grid[gi]);
      gamma_w0 = gamma_w0_for_snr(config.m, config.n, config.prior,
                                  point_snr_db(config, config.grid[gi]));
    }

    for (size_t ai = 0; ai < n_algos; ++ai) {
      const Algo algo = config.algorithms[ai];
      if (is_iterative(algo) || algo == Algo::Oracle) {
        std::vector<TrialOutcome> per_algo(config.trials);
        for (int t = 0; t < config.trials; ++t)
          per_algo[t] = std::move(outcomes[gi][t][ai]);
        const int cap = algo == Algo::Vamp ? config.max_iters_vamp
                                           : config.max_iters_amp;
        res.per_algo.push_back(aggregate_trials(
            to_string(algo), per_algo, want_iters && is_iterative(algo), cap));
        continue;
      }

      AlgoAggregate agg;
      agg.algo = to_string(algo);
      const double second_moment = config.prior.second_moment();
      if (algo == Algo::Se) {
        const Denoiser denoiser = Denoiser::bg_mmse(config.prior);
        SeTrace se =
            se_run_bootstrapped(denoiser, config.prior, spectrum, gamma_w0,
                                gamma_w0, config.max_iters_vamp);
        agg.median_nmse = se.iterations.back().mse1 / second_moment;
        if (want_iters) {
          // solver iteration 0 is the bootstrap from r = 0 (estimate = prior
          // mean, NMSE = 1); solver iteration k then matches SE iteration k-1
          agg.iter_median_db.push_back(to_db(1.0));
          for (const SeIteration& it : se.iterations)
            agg.iter_median_db.push_back(to_db(it.mse1 / second_moment));
        }
      } else {
        const ReplicaSolution sol =
            replica_solve(config.prior, spectrum, gamma_w0);
        agg.median_nmse = sol.nmse;
      }
      agg.mean_nmse = agg.median_nmse;
      res.per_algo.push_back(std::move(agg));
    }
  }
  return results;
}

AlgoAggregate aggregate_nmse(const std::string& algo,
                             const std::vector<double>& raw_finals) {
  if (raw_finals.empty())
    throw std::invalid_argument("aggregate_nmse: no trials");
  AlgoAggregate agg;
  agg.algo = algo;
  agg.trials = static_cast<int>(raw_finals.size());
  std::vector<double> finals;
  finals.reserve(raw_finals.size());
  for (double raw : raw_finals) {
    if (!std::isfinite(raw) || raw > 1.0) ++agg.diverged;
    finals.push_back(std::isfinite(raw) ? std::min(raw, 1.0) : 1.0);
  }
  agg.median_nmse = median_of(finals);
  double sum = 0.0;
  for (double v : finals) sum += v;
  agg.mean_nmse = sum / finals.size();
  double ss = 0.0;
  for (double v : finals) ss += (v - agg.mean_nmse) * (v - agg.mean_nmse);
  agg.stderr_nmse = finals.size() > 1
                        ? std::sqrt(ss / (finals.size() - 1.0) / finals.size())
                        : 0.0;
  asymmetric_devs_db(finals, agg.median_nmse, agg.dev_plus_db,
                     agg.dev_minus_db);
  return agg;
}

GaussianityReport gaussianity_report(const Vector& r1, const Vector& x0,
                                     double tau_pred) {
  if (r1.size() != x0.size())
    throw std::invalid_argument("gaussianity_report: length mismatch");
  if (r1.size() < 1000)
    throw std::invalid_argument("gaussianity_report: need length >= 1000");
  if (!(tau_pred > 0.0))
    throw std::invalid_argument("gaussianity_report: tau_pred must be > 0");
  const Vector e = r1 - x0;
  const double mean = e.mean();
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (Index i = 0; i < e.size(); ++i) {
    const double d = e[i] - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double inv_n = 1.0 / static_cast<double>(e.size());
  m2 *= inv_n;
  m3 *= inv_n;
  m4 *= inv_n;
  GaussianityReport rep;
  rep.var_ratio = m2 / tau_pred;
  rep.skewness = m3 / std::pow(m2, 1.5);
  rep.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_results_csv(const std::vector<AggregateResult>& results,
                       std::ostream& out) {
  out << "grid_value,algorithm,median_nmse_db,dev_plus_db,dev_minus_db,"
         "mean_nmse,stderr,diverged_count,trials\n";
  for (const AggregateResult& res : results)
    for (const AlgoAggregate& a : res.per_algo)
      out << fmt(res.grid_value) << ',' << a.algo << ','
          << fmt(to_db(a.median_nmse)) << ',' << fmt(a.dev_plus_db) << ','
          << fmt(a.dev_minus_db) << ',' << fmt(a.mean_nmse) << ','
          << fmt(a.stderr_nmse) << ',' << a.diverged << ',' << a.trials
          << '\n';
}

void write_iter_trace_csv(const std::vector<AggregateResult>& results,
                          std::ostream& out) {
  out << "grid_value,algorithm,iter,median_nmse_db,dev_plus_db,dev_minus_db\n";
  for (const AggregateResult& res : results)
    for (const AlgoAggregate& a : res.per_algo)
      for (size_t k = 0; k < a.iter_median_db.size(); ++k) {
        const double dp = k < a.iter_dev_plus_db.size() ? a.iter_dev_plus_db[k]
                                                        : 0.0;
        const double dm = k < a.iter_dev_minus_db.size()
                              ? a.iter_dev_minus_db[k]
                              : 0.0;
        out << fmt(res.grid_value) << ',' << a.algo << ',' << k << ','
            << fmt(a.iter_median_db[k]) << ',' << fmt(dp) << ',' << fmt(dm)
            << '\n';
      }
}

namespace {

nlohmann::json config_json(const ExperimentConfig& config) {
  nlohmann::json algos = nlohmann::json::array();
  for (Algo a : config.algorithms) algos.push_back(to_string(a));
  return nlohmann::json{
      {"kind", to_string(config.kind)},
      {"grid", config.grid},
      {"m", config.m},
      {"n", config.n},
      {"prior", {{"rho", config.prior.rho}, {"sigma_x2", config.prior.sigma_x2}}},
      {"snr_db", config.snr_db},
      {"trials", config.trials},
      {"algorithms", algos},
      {"seed", config.seed},
      {"out_dir", config.out_dir},
      {"kappa", config.kappa},
      {"damp", config.damp},
      {"tol", config.tol},
      {"max_iters_vamp", config.max_iters_vamp},
      {"max_iters_amp", config.max_iters_amp}};
}

}  // namespace

void write_manifest_json(const ExperimentConfig& config, double wall_clock_sec,
                         const std::string& path) {
  nlohmann::json doc;
  doc["config"] = config_json(config);
  doc["seed"] = config.seed;
  doc["version"] = "0.1.0";
  doc["wall_clock_sec"] = wall_clock_sec;
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_manifest_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

void write_experiment_outputs(const ExperimentConfig& config,
                              const std::vector<AggregateResult>& results,
                              double wall_clock_sec) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  {
    std::ofstream out(fs::path(config.out_dir) / "results.csv");
    if (!out) throw std::runtime_error("cannot write results.csv");
    write_results_csv(results, out);
  }
  if (config.kind == ExperimentKind::IterTrace) {
    std::ofstream out(fs::path(config.out_dir) / "iter_trace.csv");
    if (!out) throw std::runtime_error("cannot write iter_trace.csv");
    write_iter_trace_csv(results, out);
  }
  write_manifest_json(config, wall_clock_sec,
                      (fs::path(config.out_dir) / "manifest.json").string());
}

std::string config_to_json(const ExperimentConfig& config) {
  return config_json(config).dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  ExperimentConfig config;
  if (doc.contains("kind")) {
    const auto kind = parse_kind(doc["kind"].get<std::string>());
    if (!kind)
      throw std::invalid_argument("config: unknown kind '" +
                                  doc["kind"].get<std::string>() + "'");
    config.kind = *kind;
  }
  if (doc.contains("grid")) config.grid = doc["grid"].get<std::vector<double>>();
  if (doc.contains("m")) config.m = doc["m"].get<Index>();
  if (doc.contains("n")) config.n = doc["n"].get<Index>();
  if (doc.contains("prior")) {
    const auto& p = doc["prior"];
    if (p.contains("rho")) config.prior.rho = p["rho"].get<double>();
    if (p.contains("sigma_x2"))
      config.prior.sigma_x2 = p["sigma_x2"].get<double>();
  }
  if (doc.contains("snr_db")) config.snr_db = doc["snr_db"].get<double>();
  if (doc.contains("trials")) config.trials = doc["trials"].get<int>();
  if (doc.contains("algorithms")) {
    config.algorithms.clear();
    for (const auto& name : doc["algorithms"]) {
      const auto algo = parse_algo(name.get<std::string>());
      if (!algo)
        throw std::invalid_argument("config: unknown algorithm '" +
                                    name.get<std::string>() + "'");
      config.algorithms.push_back(*algo);
    }
  }
  if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("out_dir"))
    config.out_dir = doc["out_dir"].get<std::string>();
  if (doc.contains("kappa")) config.kappa = doc["kappa"].get<double>();
  if (doc.contains("damp")) config.damp = doc["damp"].get<double>();
  if (doc.contains("tol")) config.tol = doc["tol"].get<double>();
  if (doc.contains("max_iters_vamp"))
    config.max_iters_vamp = doc["max_iters_vamp"].get<int>();
  if (doc.contains("max_iters_amp"))
    config.max_iters_amp = doc["max_iters_amp"].get<int>();
  return config;
}

}  // namespace vamp
