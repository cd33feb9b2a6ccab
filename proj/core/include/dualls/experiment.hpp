#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualls/config.hpp"
#include "dualls/metrics.hpp"

namespace dualls {

inline constexpr const char* kOutputRootEnv = "DUALLS_OUTPUT_ROOT";

struct RunSpec {
  std::size_t index = 0;
  TrainerKind trainer = TrainerKind::DualLS;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  std::string run_id;
};

// "<trainer>-b<budget>-s<seed>"
std::string make_run_id(TrainerKind trainer, std::size_t budget, std::uint64_t seed);

// Trainer-major, then budget, then seed, in config order.
std::vector<RunSpec> plan_runs(const ExperimentConfig& config);

struct RunRecord {
  std::string run_id;
  std::string config_hash;
  TrainerKind trainer = TrainerKind::DualLS;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ErrorMatrix fde;
  ErrorMatrix mr;
  // Final-task aggregates.
  double fde_bwt = 0.0;
  double mr_bwt = 0.0;
  double fde_ave = 0.0;
  double mr_ave = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t processed = 0;
  double wall_seconds = 0.0;
  std::filesystem::path run_dir;
};

// Per-run file names inside the run directory.
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kCompositionFile = "composition.csv";
inline constexpr const char* kFdeMatrixFile = "fde_matrix.csv";
inline constexpr const char* kMrMatrixFile = "mr_matrix.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
// Experiment-level files.
inline constexpr const char* kSummaryFile = "summary.csv";
inline constexpr const char* kRecordsFile = "records.json";
inline constexpr const char* kConfigFile = "config.json";

struct ExperimentOptions {
  std::optional<std::filesystem::path> output_root;  // beats the env var and the config
  std::optional<std::size_t> workers;
  bool resume = false;  // continue from per-run checkpoints when present
  std::function<void(const std::string&)> log;
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<RunRecord> records;
  std::size_t failed = 0;
};

// <root>/<config name>, where root is the option, else DUALLS_OUTPUT_ROOT,
// else config.output_dir.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const ExperimentOptions& options);

// One (trainer, budget, seed) run writing its files into `run_dir`. Failures
// are reported in the record, not thrown.
RunRecord execute_run(const ExperimentConfig& config, const RunSpec& spec, const std::filesystem::path& run_dir,
                      bool resume = false);

// Runs every planned run on a bounded worker pool, then writes the summary,
// records.json and config.json. Results do not depend on the worker count.
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options = {});

// Per-(trainer, budget) mean and sample std of the final aggregates over
// successful runs.
struct SummaryRow {
  TrainerKind trainer = TrainerKind::DualLS;
  std::size_t budget = 0;
  std::size_t runs = 0;
  double fde_bwt_mean = 0.0, fde_bwt_std = 0.0;
  double mr_bwt_mean = 0.0, mr_bwt_std = 0.0;
  double fde_ave_mean = 0.0, fde_ave_std = 0.0;
  double mr_ave_mean = 0.0, mr_ave_std = 0.0;
  double processed_mean = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

}  // namespace dualls
