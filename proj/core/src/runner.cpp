#include "dualls/runner.hpp"

#include "dualls/errors.hpp"

namespace dualls {

namespace {
constexpr std::uint64_t kInitSalt = 0x496e;
}

TaskEvaluation evaluate_task(const Predictor& model, const ParamVector& params, std::span<const Sample> test,
                             const EvalOptions& options, std::uint64_t eval_salt) {
  TaskEvaluation out;
  if (test.empty()) return out;
  Rng rng(mix_seed(options.sample_seed, eval_salt));
  out.sample_fde.reserve(test.size());
  double fde_sum = 0.0;
  for (const Sample& s : test) {
    const Heatmap h = model.forward(params, s);
    const GoalSet goals = options.sampled_goals ? sample_goals(h, options.goals_k, rng) : extract_goals(h, options.goals_k);
    const double e = fde(goals, s.goal);
    out.sample_fde.push_back(e);
    fde_sum += e;
    for (const Vec2& g : goals.positions) {
      ++out.goals;
      if (miss(g, s.goal, s.heading, s.speed)) ++out.misses;
    }
  }
  out.fde = fde_sum / static_cast<double>(test.size());
  out.mr = static_cast<double>(out.misses) / static_cast<double>(out.goals);
  return out;
}

StreamRun::StreamRun(TaskStream& stream, const Predictor& model, LearnerState learner, EvalOptions eval,
                     std::size_t composition_every)
    : stream_(&stream), model_(&model) {
  if (stream.task_count() == 0) throw InputError("empty task stream");
  if (learner.theta_w.size() != model.param_count()) throw ConfigError("learner does not match the predictor");
  snap_.learner = std::move(learner);
  snap_.fde = ErrorMatrix(stream.task_count(), MetricKind::FDE);
  snap_.mr = ErrorMatrix(stream.task_count(), MetricKind::MR);
  snap_.eval = eval;
  snap_.composition_every = composition_every;
}

StreamRun::StreamRun(TaskStream& stream, const Predictor& model, RunSnapshot snapshot)
    : stream_(&stream), model_(&model), snap_(std::move(snapshot)) {
  if (snap_.fde.tasks() != stream.task_count() || snap_.mr.tasks() != stream.task_count()) {
    throw InputError("snapshot does not match the task stream");
  }
  if (snap_.learner.theta_w.size() != model.param_count()) throw InputError("snapshot does not match the predictor");
  done_ = snap_.position.task >= stream.task_count();
}

void StreamRun::evaluate_row(std::size_t task) {
  const LearnerState& L = snap_.learner;
  const ParamVector& params = L.kind == TrainerKind::DualLS ? L.params(snap_.eval.role) : L.theta_w;
  const std::size_t tasks = stream_->task_count();
  std::vector<double> fde_row(tasks);
  std::vector<double> mr_row(tasks);
  for (std::size_t j = 0; j < tasks; ++j) {
    const TaskEvaluation e = evaluate_task(*model_, params, stream_->task(j).test, snap_.eval, task * tasks + j);
    fde_row[j] = e.fde;
    mr_row[j] = e.mr;
  }
  snap_.fde.set_row(task, fde_row);
  snap_.mr.set_row(task, mr_row);
}

std::size_t StreamRun::advance(std::size_t max_steps) {
  std::size_t taken = 0;
  BatchStream batches(*stream_, snap_.learner.hyper.stream_batch, snap_.position);
  while (taken < max_steps) {
    const std::optional<Batch> batch = batches.next();
    if (!batch) {
      done_ = true;
      break;
    }
    TraceRow row;
    row.step = train_step(snap_.learner, *model_, batch->samples);
    row.task_index = batch->task_index;
    row.task_end = batch->ends_task;
    ++taken;
    if (batch->ends_task) evaluate_row(batch->task_index);
    if (row.task_end || (snap_.composition_every > 0 && row.step.step % snap_.composition_every == 0)) {
      row.has_composition = true;
      row.reservoir = composition(snap_.learner.reservoir);
      row.diversity = composition(snap_.learner.diversity);
    }
    snap_.trace.push_back(std::move(row));
    snap_.position = batches.position();
  }
  if (snap_.position.task >= stream_->task_count()) done_ = true;
  return taken;
}

StreamResult StreamRun::result() const {
  const LearnerState& L = snap_.learner;
  return {L.theta_w, L.theta_f, L.theta_s, snap_.fde, snap_.mr, snap_.trace, L.step_count, L.processed};
}

ParamVector initial_params(const Predictor& model, std::uint64_t seed) {
  Rng rng(mix_seed(seed, kInitSalt));
  return model.init_params(rng);
}

LearnerState seeded_learner(TrainerKind kind, const Predictor& model, const HyperParams& hyper,
                            const BufferBudget& budget, std::uint64_t seed) {
  return make_learner(kind, hyper, budget, initial_params(model, seed),
                      mix_seed(seed, static_cast<std::uint64_t>(kind) + 1));
}

StreamResult run_stream(TrainerKind kind, TaskStream& stream, const Predictor& model, const HyperParams& hyper,
                        const BufferBudget& budget, std::uint64_t seed, const EvalOptions& eval,
                        std::size_t composition_every) {
  if (stream.task_count() == 0) throw InputError("empty task stream");
  StreamRun run(stream, model, seeded_learner(kind, model, hyper, budget, seed), eval, composition_every);
  run.advance();
  return run.result();
}

}  // namespace dualls
