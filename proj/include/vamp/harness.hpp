#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vamp/algorithms.hpp"
#include "vamp/metrics.hpp"
#include "vamp/prior.hpp"
#include "vamp/state_evolution.hpp"
#include "vamp/types.hpp"

namespace vamp {

enum class ExperimentKind { CondSweep, MeanSweep, SnrTable, IterTrace };
enum class Algo { Vamp, Amp, Ist, Se, Replica, Oracle };

std::string to_string(ExperimentKind kind);
std::string to_string(Algo algo);
std::optional<ExperimentKind> parse_kind(const std::string& s);
std::optional<Algo> parse_algo(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::SnrTable;
  std::vector<double> grid;  // kappa, mu, or SNR values depending on kind
  Index m = 512;
  Index n = 1024;
  BgPrior prior{0.1, 1.0};
  double snr_db = 40.0;  // used by non-SNR sweeps
  int trials = 0;        // 0 => kind default (500/200/1000/500)
  std::vector<Algo> algorithms;  // empty => {vamp, se, replica}
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  double kappa = 1.0;  // base condition number for snr_table / mean sweeps
  double damp = 0.97;
  double tol = 1e-4;
  int max_iters_vamp = 100;
  int max_iters_amp = 1000;

  /// Fills empty grid/trials/algorithms with the kind defaults.
  void apply_defaults();
  void validate() const;
};

struct AlgoAggregate {
  std::string algo;
  double median_nmse = 0.0;  // linear, clipped at 1
  double dev_plus_db = 0.0;  // RMS dB deviation of the above-median subsample
  double dev_minus_db = 0.0;
  double mean_nmse = 0.0;
  double stderr_nmse = 0.0;
  int diverged = 0;
  int trials = 0;
  // iter_trace experiments only: per-iteration aggregates
  std::vector<double> iter_median_db;
  std::vector<double> iter_dev_plus_db;
  std::vector<double> iter_dev_minus_db;
};

struct AggregateResult {
  double grid_value = 0.0;
  std::vector<AlgoAggregate> per_algo;

  const AlgoAggregate* find(const std::string& algo) const;
};

/// Runs `trials` seeded instances per grid point, executes the requested
/// algorithms, clips NMSEs at 1 and aggregates. Numerical failures count as
/// NMSE = 1 and never abort the sweep. Deterministic given config.seed,
/// independent of the worker count (workers = 0 picks the hardware count).
std::vector<AggregateResult> run_experiment(const ExperimentConfig& config,
                                            int workers = 0);

struct GaussianityReport {
  double var_ratio = 0.0;
  double excess_kurtosis = 0.0;
  double skewness = 0.0;
};

/// Sample moments of r1 - x0 against a predicted variance.
GaussianityReport gaussianity_report(const Vector& r1, const Vector& x0,
                                     double tau_pred);

/// Clips raw NMSEs at 1 (non-finite values count as 1, and as divergences
/// together with values > 1) and aggregates: median, mean, standard error,
/// and the asymmetric dB deviations about the median.
AlgoAggregate aggregate_nmse(const std::string& algo,
                             const std::vector<double>& raw_finals);

void write_results_csv(const std::vector<AggregateResult>& results,
                       std::ostream& out);
void write_iter_trace_csv(const std::vector<AggregateResult>& results,
                          std::ostream& out);
void write_manifest_json(const ExperimentConfig& config, double wall_clock_sec,
                         const std::string& path);

/// results.csv + iter_trace.csv (iter_trace kind) + manifest.json under
/// config.out_dir.
void write_experiment_outputs(const ExperimentConfig& config,
                              const std::vector<AggregateResult>& results,
                              double wall_clock_sec);

/// 10*log10 with a floor that keeps output finite.
double to_db(double nmse_linear);

// JSON round trip for config files (field names match the struct).
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);

}  // namespace vamp
