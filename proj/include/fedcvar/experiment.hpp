#pragma once

// Experiment harness: loads data, trains, evaluates on a fixed cadence and
// writes run artifacts (metrics.csv, run.json, params.bin, charts).

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedcvar/config.hpp"
#include "fedcvar/data.hpp"
#include "fedcvar/error.hpp"
#include "fedcvar/fed.hpp"

namespace fedcvar::exp {

struct LoadedData {
  Dataset train;
  Dataset test;
  Partition partition;
  std::vector<Dataset> shards;
};

/// Throws Error when dataset files are missing or malformed.
LoadedData load_data(const ExperimentConfig& cfg);

struct EvalPoint {
  std::size_t round = 0;
  double overall_acc = 0.0;
  std::vector<std::optional<double>> per_class_acc;
  double global_t = 0.0;
  std::vector<double> selection_freq;  // per user, fraction of rounds so far
};

/// Header: round,overall_acc,per_class_acc_0..C-1,global_t,selected_user_freq_snapshot.
/// Undefined per-class accuracies are empty fields; the frequency snapshot
/// is a semicolon-separated list.
std::string metrics_header(std::size_t num_classes);
void write_metrics_csv(std::ostream& out, const std::vector<EvalPoint>& points,
                       std::size_t num_classes);
std::vector<EvalPoint> parse_metrics_csv(std::istream& in);

struct RunSummary {
  double overall = 0.0;
  std::vector<std::optional<double>> per_class;
  std::optional<double> rare_mean;  // mean accuracy over the rare classes
};

/// Averages the trailing `points` evaluation points (at least one).
RunSummary summarize(const std::vector<EvalPoint>& points, std::size_t trailing,
                     const std::vector<int>& rare_classes);

struct RunOptions {
  std::filesystem::path out_dir;  // empty: the config's output directory
  bool write_artifacts = true;
  std::function<void(const EvalPoint&)> on_eval;
};

struct RunOutcome {
  std::vector<EvalPoint> points;
  RunSummary summary;
  std::optional<DivergenceError> failure;
  std::size_t rounds_completed = 0;
  ModelParams theta;
  double t_global = 0.0;
  std::vector<int> rare_classes;
  std::filesystem::path out_dir;

  bool ok() const noexcept { return !failure; }
};

std::filesystem::path output_dir(const ExperimentConfig& cfg);

RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Run on already loaded data; used by sweeps and tests to avoid re-reading.
RunOutcome run_experiment(const ExperimentConfig& cfg, const LoadedData& data,
                          const RunOptions& opts);

// --- sweeps ---------------------------------------------------------------

struct SweepStat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
};

struct SweepCell {
  double alpha = 1.0;
  double gamma = 1.0;
  std::size_t runs = 0;
  std::size_t failures = 0;
  SweepStat overall;
  std::vector<SweepStat> rare;  // one per rare class
  std::vector<std::string> errors;
};

struct SweepResult {
  std::vector<int> rare_classes;
  std::vector<SweepCell> cells;
};

/// Seed of one sweep cell repeat.
std::uint64_t sweep_seed(std::uint64_t base, double alpha, double gamma, std::size_t repeat);

/// One run per (alpha, gamma, repeat); cell artifacts go under
/// <out_dir>/a<alpha>_g<gamma>/r<repeat>. Failed runs are counted and the
/// sweep carries on.
SweepResult sweep(const ExperimentConfig& base, const std::vector<double>& alphas,
                  const std::vector<double>& gammas, std::size_t repeats, std::uint64_t base_seed,
                  const std::filesystem::path& out_dir, bool write_cell_artifacts = true);

void write_sweep_csv(std::ostream& out, const SweepResult& result);

}  // namespace fedcvar::exp
