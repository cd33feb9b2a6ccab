#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualls/predictor.hpp"
#include "dualls/runner.hpp"
#include "dualls/stream.hpp"
#include "dualls/trainer.hpp"

namespace dualls {

// Everything needed to reproduce a set of runs. Each (trainer, budget, seed)
// triple is one run.
struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<TrainerKind> trainers{TrainerKind::DualLS};
  HyperParams hyper;
  std::vector<std::size_t> budgets{1000};
  double reservoir_fraction = 0.5;
  StreamSpec stream;
  // Hidden widths and loss constants; layout and grid always follow the scene.
  PredictorConfig model;
  EvalOptions eval;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "results";
  std::size_t workers = 1;
  std::size_t composition_every = 10;
  std::size_t checkpoint_every = 0;  // steps between checkpoints, 0 disables
  bool final_checkpoint = false;

  PredictorConfig predictor_config() const;
  BufferBudget budget(std::size_t total) const { return {total, reservoir_fraction}; }

  // Throws ConfigError with a path-qualified message.
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Default config with the eight-task synthetic benchmark.
ExperimentConfig default_experiment();

// Parses YAML. Unknown keys and malformed values raise ConfigError. Relative
// CSV task paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON text of every field that can change results (output
// location and worker count are excluded). Keys are sorted.
std::string canonical_json(const ExperimentConfig& config);
// Full config as JSON, including output location and workers.
std::string config_json(const ExperimentConfig& config);
// 16 hex digits of FNV-1a 64 over canonical_json.
std::string config_hash(const ExperimentConfig& config);

}  // namespace dualls
