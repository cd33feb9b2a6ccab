#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "dualls/metrics.hpp"
#include "dualls/predictor.hpp"
#include "dualls/stream.hpp"
#include "dualls/trainer.hpp"

namespace dualls {

struct EvalOptions {
  std::size_t goals_k = 6;
  ModelRole role = ModelRole::Slow;  // Dual-LS only; baselines evaluate the working model
  bool sampled_goals = false;        // draw goals from the heatmap instead of top-K
  std::uint64_t sample_seed = 0;
  friend bool operator==(const EvalOptions&, const EvalOptions&) = default;
};

struct TaskEvaluation {
  double fde = 0.0;
  double mr = 0.0;
  std::vector<double> sample_fde;
  std::size_t misses = 0;
  std::size_t goals = 0;
};

// FDE and MR over one test set, both from the same goal extraction.
TaskEvaluation evaluate_task(const Predictor& model, const ParamVector& params, std::span<const Sample> test,
                             const EvalOptions& options, std::uint64_t eval_salt = 0);

using Composition = std::map<int, std::size_t>;

struct TraceRow {
  StepRecord step;
  std::size_t task_index = 0;  // harness bookkeeping; never shown to the learner
  bool task_end = false;
  bool has_composition = false;
  Composition reservoir;
  Composition diversity;
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct RunSnapshot {
  LearnerState learner;
  StreamPosition position;
  ErrorMatrix fde;
  ErrorMatrix mr;
  std::vector<TraceRow> trace;
  EvalOptions eval;
  std::size_t composition_every = 10;

  friend bool operator==(const RunSnapshot&, const RunSnapshot&) = default;
};

struct StreamResult {
  ParamVector theta_w;
  ParamVector theta_f;
  ParamVector theta_s;
  ErrorMatrix fde;
  ErrorMatrix mr;
  std::vector<TraceRow> trace;
  std::uint64_t steps = 0;
  std::uint64_t processed = 0;
};

// Single-pass run over a task stream. After the last batch of each task the
// evaluation model is scored on every task's test set, filling one row of the
// FDE and MR error matrices.
class StreamRun {
 public:
  StreamRun(TaskStream& stream, const Predictor& model, LearnerState learner, EvalOptions eval,
            std::size_t composition_every = 10);
  StreamRun(TaskStream& stream, const Predictor& model, RunSnapshot snapshot);

  bool done() const { return done_; }
  // Runs at most `max_steps` gradient steps; returns the number taken.
  std::size_t advance(std::size_t max_steps = std::numeric_limits<std::size_t>::max());

  const RunSnapshot& snapshot() const { return snap_; }
  StreamResult result() const;

 private:
  void evaluate_row(std::size_t task);

  TaskStream* stream_;
  const Predictor* model_;
  RunSnapshot snap_;
  bool done_ = false;
};

// Initial weights shared by every trainer run with this seed.
ParamVector initial_params(const Predictor& model, std::uint64_t seed);

// Learner for run `seed`: shared initial weights, generators salted by kind.
LearnerState seeded_learner(TrainerKind kind, const Predictor& model, const HyperParams& hyper,
                            const BufferBudget& budget, std::uint64_t seed);

StreamResult run_stream(TrainerKind kind, TaskStream& stream, const Predictor& model, const HyperParams& hyper,
                        const BufferBudget& budget, std::uint64_t seed, const EvalOptions& eval = {},
                        std::size_t composition_every = 10);

}  // namespace dualls
