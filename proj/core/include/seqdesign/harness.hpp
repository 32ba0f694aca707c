#pragma once

// Replicated sequential-design campaigns: configuration, the per-replicate
// design loop, the versioned record CSV, summaries and SVG charts.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqdesign/common.hpp"
#include "seqdesign/design.hpp"
#include "seqdesign/gp.hpp"
#include "seqdesign/mcmc.hpp"
#include "seqdesign/testbeds.hpp"

namespace seqdesign::harness {

inline constexpr int kRecordSchemaVersion = 1;

struct ExperimentConfig {
  std::string testbed = "banana";
  testbeds::NuclearData nuclear_data;
  std::optional<Vector> x_th;           // noiseless input for model-based observations
  std::optional<Vector> obs_center;     // overrides the default observation mean
  std::optional<Matrix> c_obs;
  int n_obs = 0;                        // 0: test-bed default
  std::vector<design::DesignStrategy> strategies;
  int n0 = 10;
  int n_iterations = 20;
  int n_replicates = 10;
  int chain_length = 20000;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int reference_points = 200;           // 0 disables the reference posterior and KL
  int reference_chain_length = 20000;
  bool kde_metrics = true;              // false skips entropy and KL
  Eigen::Index kde_eval_points = 2000;
  bool independent_metric_chain = false;
  bool refit_every_iteration = true;
  gp::KernelFamily kernel = gp::KernelFamily::matern52;
  double nugget = 1e-6;
  gp::FitOptions fit;
  optim::AnnealConfig optim;            // default for strategies that give none
  mcmc::AdaptiveMetropolisConfig mcmc;

  void validate() const;
  /// Seed of replicate r; distinct for distinct r.
  [[nodiscard]] std::uint64_t replicate_seed(int r) const;
};

/// Parses the JSON experiment document. Throws ConfigError on unknown keys,
/// invalid values, unknown test beds or unknown strategies.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct RecordRow {
  std::string strategy;
  int replicate = 0;
  int iteration = 0;
  double ivar = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  Vector x_selected;  // empty on the last iteration and on failures
  double criterion = 0.0;
  double acceptance_rate = 0.0;
  double wall_time_s = 0.0;
  std::string status = "ok";  // "ok" or "failed: <reason>"
};

std::string record_header();
std::string format_row(const RecordRow& row);
std::vector<RecordRow> read_record(const std::string& path);

struct RunSummary {
  std::string record_path;
  int cells_run = 0;
  int cells_skipped = 0;   // already complete in an existing record
  int cells_failed = 0;
  int numerical_failures = 0;
};

/// Runs every (replicate, strategy) cell missing from <output_dir>/record.csv,
/// appending rows as they are produced. Replicates run on a thread pool
/// sized by SEQDESIGN_THREADS (default: hardware concurrency).
RunSummary run_experiment(const ExperimentConfig& cfg);

/// Observations of an experiment: fixed across replicates and strategies.
inverse::ObservationSet experiment_observations(const ExperimentConfig& cfg, const testbeds::DirectModel& model);

/// Reference posterior draws from a GP trained on cfg.reference_points space-filling inputs.
Matrix reference_chain(const ExperimentConfig& cfg, const testbeds::DirectModel& model,
                       const inverse::ObservationSet& obs);

struct SummaryRow {
  std::string strategy;
  std::string metric;
  int iteration = 0;
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool degenerate = false;  // fewer than two replicates: the interval is a point
};

/// Per (strategy, metric, iteration): mean and mean +/- 1.96 sd / sqrt(R). Failed rows are skipped.
std::vector<SummaryRow> summarize(const std::vector<RecordRow>& rows);
void write_summary(const std::vector<SummaryRow>& rows, const std::string& path);
std::vector<SummaryRow> read_summary(const std::string& path);

/// One SVG line chart per metric with a CI band per strategy, plus summary.csv.
/// Returns the written paths.
std::vector<std::string> emit_plots(const std::vector<SummaryRow>& summary, const std::string& outdir);

/// Number of pool threads from SEQDESIGN_THREADS.
int thread_count();

}  // namespace seqdesign::harness
