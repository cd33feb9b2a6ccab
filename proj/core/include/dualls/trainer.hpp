#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "dualls/buffers.hpp"
#include "dualls/param_vector.hpp"
#include "dualls/predictor.hpp"
#include "dualls/rng.hpp"

namespace dualls {

enum class TrainerKind { DualLS, Vanilla, DER, GSS, AGEM };
enum class ModelRole { Working, Fast, Slow };

std::string_view to_string(TrainerKind kind);
TrainerKind parse_trainer_kind(std::string_view name);
std::string_view to_string(ModelRole role);
ModelRole parse_model_role(std::string_view name);

struct HyperParams {
  double lr = 1e-2;           // working-model step size
  double decay_fast = 0.9;    // EMA decay of the fast model
  double decay_slow = 0.999;  // EMA decay of the slow model
  double p_fast = 0.9;        // per-step probability of a fast EMA update
  double p_slow = 0.1;        // per-step probability of a slow EMA update
  double alpha_r = 0.5;       // KL weight, reservoir replay
  double beta_r = 0.5;        // focal weight, reservoir replay
  double alpha_d = 0.5;       // KL weight, diversity replay
  double beta_d = 0.5;        // focal weight, diversity replay
  std::size_t stream_batch = 8;
  std::size_t replay_r = 8;   // draws from the reservoir buffer per step
  std::size_t replay_d = 8;   // draws from the diversity buffer per step
  std::size_t score_batch = 8;  // stored samples scored against per diversity offer

  void validate() const;
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

// Total replay memory and its reservoir/diversity split. Single-buffer
// baselines get the whole budget.
struct BufferBudget {
  std::size_t total = 1000;
  double reservoir_fraction = 0.5;

  std::size_t reservoir_capacity(TrainerKind kind) const;
  std::size_t diversity_capacity(TrainerKind kind) const;
  friend bool operator==(const BufferBudget&, const BufferBudget&) = default;
};

// Everything a learner carries between stream steps. Baselines use only
// theta_w and the buffers their kind requires.
struct LearnerState {
  TrainerKind kind = TrainerKind::DualLS;
  HyperParams hyper;
  ParamVector theta_w;
  ParamVector theta_f;
  ParamVector theta_s;
  ReservoirBuffer reservoir;
  DiversityBuffer diversity;
  Rng rng;
  std::uint64_t step_count = 0;
  std::uint64_t stream_seen = 0;  // stream samples consumed so far
  std::uint64_t processed = 0;    // stream samples + replay draws used in gradient steps

  const ParamVector& params(ModelRole role) const;
  friend bool operator==(const LearnerState&, const LearnerState&) = default;
};

// theta_f = theta_s = theta_w = init. Buffer generators are seeded from `seed`.
LearnerState make_learner(TrainerKind kind, const HyperParams& hyper, const BufferBudget& budget, ParamVector init,
                          std::uint64_t seed);

// Per-step log. Loss components are weighted as they enter the objective.
struct StepRecord {
  std::uint64_t step = 0;
  double stream_loss = 0.0;
  double reservoir_kl = 0.0;
  double reservoir_focal = 0.0;
  double diversity_kl = 0.0;
  double diversity_focal = 0.0;
  std::size_t reservoir_draws = 0;
  std::size_t diversity_draws = 0;
  bool fast_update = false;
  bool slow_update = false;
  bool projected = false;  // A-GEM only
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

// Fast-model heatmap iff its focal loss on the sample is strictly smaller,
// otherwise the slow-model heatmap.
Heatmap select_teacher(const Predictor& model, const Sample& sample, const ParamVector& theta_fast,
                       const ParamVector& theta_slow);

struct Projection {
  ParamVector grad;
  bool projected = false;
};

// A-GEM: drop the component of g opposing g_ref when <g, g_ref> < 0.
Projection agem_project(const ParamVector& g, const ParamVector& g_ref);

// Plain SGD on the mean focal loss of the batch.
ParamVector vanilla_step(const Predictor& model, const ParamVector& params, std::span<const Sample> batch, double lr);

StepRecord dualls_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch);
StepRecord vanilla_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch);
StepRecord der_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch);
StepRecord gss_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch);
StepRecord agem_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch);

// Dispatches on state.kind.
StepRecord train_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch);

}  // namespace dualls
