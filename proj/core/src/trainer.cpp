#include "dualls/trainer.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "dualls/errors.hpp"

namespace dualls {

namespace {

constexpr std::uint64_t kReservoirSalt = 0x5265;
constexpr std::uint64_t kDiversitySalt = 0x4469;
constexpr std::uint64_t kLearnerSalt = 0x4c65;

bool finite_unit(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

// Adds `group` gradient into `total` unless the group had no active terms.
void accumulate(ParamVector& total, const LossAndGrad& group, bool active) {
  if (!active) return;
  if (total.empty()) {
    total = group.grad;
    return;
  }
  for (std::size_t i = 0; i < total.size(); ++i) total[i] += group.grad[i];
}

bool has_active(std::span<const LossTerm> terms) {
  for (const LossTerm& t : terms) {
    if (t.focal_weight != 0.0 || t.kl_weight != 0.0) return true;
  }
  return false;
}

std::vector<LossTerm> batch_terms(std::span<const Sample> batch) {
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<LossTerm> terms;
  terms.reserve(batch.size());
  for (const Sample& s : batch) terms.push_back({&s, nullptr, weight, 0.0});
  return terms;
}

// Replay terms over drawn entries; teachers[i] is the KL target of draws[i].
std::vector<LossTerm> replay_terms(const std::vector<const BufferEntry*>& draws, const std::vector<Heatmap>& teachers,
                                   double kl_weight, double focal_weight) {
  std::vector<LossTerm> terms;
  if (draws.empty()) return terms;
  const double scale = 1.0 / static_cast<double>(draws.size());
  terms.reserve(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    terms.push_back({&draws[i]->sample, &teachers[i], focal_weight * scale, kl_weight * scale});
  }
  return terms;
}

std::vector<Heatmap> stored_teachers(const std::vector<const BufferEntry*>& draws) {
  std::vector<Heatmap> out;
  out.reserve(draws.size());
  for (const BufferEntry* e : draws) out.push_back(e->teacher);
  return out;
}

std::vector<Heatmap> working_heatmaps(const Predictor& model, const ParamVector& params,
                                      std::span<const Sample> batch) {
  std::vector<Heatmap> out;
  out.reserve(batch.size());
  for (const Sample& s : batch) out.push_back(model.forward(params, s));
  return out;
}

void check_batch(const LearnerState& state, std::span<const Sample> batch, TrainerKind expected) {
  if (batch.empty()) throw InputError("training step on an empty batch");
  if (state.kind != expected) throw InternalError("step function does not match the learner kind");
}

// Offers the batch to the buffers the learner owns. Stored teachers are the
// working-model outputs from before this step's update.
void offer_batch(LearnerState& state, const Predictor& model, std::span<const Sample> batch,
                 std::vector<Heatmap>& teachers, bool to_reservoir, bool to_diversity) {
  const DiversityBuffer::ScoreFn score_of = [&](const Sample& candidate, std::span<const Sample* const> refs) {
    const FactoredGradient g = model.factored_grad(state.theta_w, candidate);
    std::vector<FactoredGradient> ref_grads;
    ref_grads.reserve(refs.size());
    for (const Sample* r : refs) ref_grads.push_back(model.factored_grad(state.theta_w, *r));
    return diversity_score_with(g, std::span<const FactoredGradient>(ref_grads),
                                [](const FactoredGradient& a, const FactoredGradient& b) { return dot(a, b); });
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ++state.stream_seen;
    BufferEntry entry{batch[i], std::move(teachers[i]), 0.0, state.stream_seen};
    if (to_reservoir && to_diversity) {
      state.reservoir.offer(entry);
      state.diversity.offer_with_scorer(std::move(entry), score_of);
    } else if (to_reservoir) {
      state.reservoir.offer(std::move(entry));
    } else if (to_diversity) {
      state.diversity.offer_with_scorer(std::move(entry), score_of);
    }
  }
}

}  // namespace

std::string_view to_string(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::DualLS: return "dualls";
    case TrainerKind::Vanilla: return "vanilla";
    case TrainerKind::DER: return "der";
    case TrainerKind::GSS: return "gss";
    case TrainerKind::AGEM: return "agem";
  }
  return "unknown";
}

TrainerKind parse_trainer_kind(std::string_view name) {
  for (TrainerKind k : {TrainerKind::DualLS, TrainerKind::Vanilla, TrainerKind::DER, TrainerKind::GSS,
                        TrainerKind::AGEM}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown trainer kind '" + std::string(name) + "'");
}

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::Working: return "working";
    case ModelRole::Fast: return "fast";
    case ModelRole::Slow: return "slow";
  }
  return "unknown";
}

ModelRole parse_model_role(std::string_view name) {
  for (ModelRole r : {ModelRole::Working, ModelRole::Fast, ModelRole::Slow}) {
    if (name == to_string(r)) return r;
  }
  throw ConfigError("unknown model role '" + std::string(name) + "'");
}

void HyperParams::validate() const {
  if (!(std::isfinite(lr) && lr > 0.0)) throw ConfigError("lr must be finite and > 0");
  if (!(std::isfinite(decay_fast) && decay_fast >= 0.0 && decay_fast <= 1.0) ||
      !(std::isfinite(decay_slow) && decay_slow >= 0.0 && decay_slow <= 1.0)) {
    throw ConfigError("EMA decay rates must lie in [0, 1]");
  }
  if (!finite_unit(p_fast) || !finite_unit(p_slow)) throw ConfigError("update probabilities must lie in [0, 1]");
  for (double w : {alpha_r, beta_r, alpha_d, beta_d}) {
    if (!(std::isfinite(w) && w >= 0.0)) throw ConfigError("replay weights must be finite and >= 0");
  }
  if (stream_batch == 0) throw ConfigError("stream batch size must be >= 1");
  if (score_batch == 0) throw ConfigError("diversity score batch must be >= 1");
}

std::size_t BufferBudget::reservoir_capacity(TrainerKind kind) const {
  switch (kind) {
    case TrainerKind::DualLS:
      return static_cast<std::size_t>(std::llround(static_cast<double>(total) * reservoir_fraction));
    case TrainerKind::DER:
    case TrainerKind::AGEM: return total;
    case TrainerKind::GSS:
    case TrainerKind::Vanilla: return 0;
  }
  return 0;
}

std::size_t BufferBudget::diversity_capacity(TrainerKind kind) const {
  switch (kind) {
    case TrainerKind::DualLS: return total - reservoir_capacity(kind);
    case TrainerKind::GSS: return total;
    default: return 0;
  }
}

const ParamVector& LearnerState::params(ModelRole role) const {
  switch (role) {
    case ModelRole::Fast: return theta_f;
    case ModelRole::Slow: return theta_s;
    case ModelRole::Working: break;
  }
  return theta_w;
}

LearnerState make_learner(TrainerKind kind, const HyperParams& hyper, const BufferBudget& budget, ParamVector init,
                          std::uint64_t seed) {
  hyper.validate();
  if (!(budget.reservoir_fraction >= 0.0 && budget.reservoir_fraction <= 1.0)) {
    throw ConfigError("reservoir fraction must lie in [0, 1]");
  }
  if (!init.all_finite()) throw ConfigError("initial parameters must be finite");
  LearnerState state;
  state.kind = kind;
  state.hyper = hyper;
  state.theta_w = std::move(init);
  state.theta_f = state.theta_w;
  state.theta_s = state.theta_w;
  state.reservoir = ReservoirBuffer(budget.reservoir_capacity(kind), mix_seed(seed, kReservoirSalt));
  state.diversity = DiversityBuffer(budget.diversity_capacity(kind), hyper.score_batch, mix_seed(seed, kDiversitySalt));
  state.rng = Rng(mix_seed(seed, kLearnerSalt));
  return state;
}

Heatmap select_teacher(const Predictor& model, const Sample& sample, const ParamVector& theta_fast,
                       const ParamVector& theta_slow) {
  const PredictorConfig& cfg = model.config();
  Heatmap fast = model.forward(theta_fast, sample);
  Heatmap slow = model.forward(theta_slow, sample);
  const double fast_loss = focal_loss(fast, sample.goal, cfg.focal_gamma, cfg.target_sigma);
  const double slow_loss = focal_loss(slow, sample.goal, cfg.focal_gamma, cfg.target_sigma);
  return fast_loss < slow_loss ? fast : slow;
}

Projection agem_project(const ParamVector& g, const ParamVector& g_ref) {
  const double ref_sq = dot(g_ref, g_ref);
  const double overlap = dot(g, g_ref);
  if (ref_sq == 0.0 || !(overlap < 0.0)) return {g, false};
  ParamVector out(g.size());
  const double coef = overlap / ref_sq;
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] - coef * g_ref[i];
  return {std::move(out), true};
}

ParamVector vanilla_step(const Predictor& model, const ParamVector& params, std::span<const Sample> batch, double lr) {
  return sgd_step(params, model.grad(params, batch), lr);
}

StepRecord vanilla_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch) {
  check_batch(state, batch, TrainerKind::Vanilla);
  StepRecord rec;
  rec.step = ++state.step_count;
  const std::vector<LossTerm> terms = batch_terms(batch);
  const LossAndGrad g = model.loss_and_grad(state.theta_w, terms);
  rec.stream_loss = g.loss;
  state.theta_w = sgd_step(state.theta_w, g.grad, state.hyper.lr);
  state.stream_seen += batch.size();
  state.processed += batch.size();
  return rec;
}

StepRecord dualls_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch) {
  check_batch(state, batch, TrainerKind::DualLS);
  const HyperParams& h = state.hyper;
  StepRecord rec;
  rec.step = ++state.step_count;

  // (1) replay draws, (2) per-entry teacher from the fast/slow pair.
  const JointDraw draw = sample_joint(state.reservoir, state.diversity, h.replay_r, h.replay_d, state.rng);
  std::vector<Heatmap> res_teachers;
  std::vector<Heatmap> div_teachers;
  res_teachers.reserve(draw.reservoir.size());
  div_teachers.reserve(draw.diversity.size());
  for (const BufferEntry* e : draw.reservoir) {
    res_teachers.push_back(select_teacher(model, e->sample, state.theta_f, state.theta_s));
  }
  for (const BufferEntry* e : draw.diversity) {
    div_teachers.push_back(select_teacher(model, e->sample, state.theta_f, state.theta_s));
  }

  // (3) objective.
  const std::vector<LossTerm> stream = batch_terms(batch);
  const std::vector<LossTerm> res = replay_terms(draw.reservoir, res_teachers, h.alpha_r, h.beta_r);
  const std::vector<LossTerm> div = replay_terms(draw.diversity, div_teachers, h.alpha_d, h.beta_d);
  std::vector<Heatmap> insert_teachers = working_heatmaps(model, state.theta_w, batch);

  ParamVector total;
  const LossAndGrad gs = model.loss_and_grad(state.theta_w, stream);
  accumulate(total, gs, true);
  rec.stream_loss = gs.loss;
  if (has_active(res)) {
    const LossAndGrad gr = model.loss_and_grad(state.theta_w, res);
    accumulate(total, gr, true);
    rec.reservoir_kl = gr.kl;
    rec.reservoir_focal = gr.focal;
  }
  if (has_active(div)) {
    const LossAndGrad gd = model.loss_and_grad(state.theta_w, div);
    accumulate(total, gd, true);
    rec.diversity_kl = gd.kl;
    rec.diversity_focal = gd.focal;
  }
  rec.reservoir_draws = draw.reservoir.size();
  rec.diversity_draws = draw.diversity.size();

  // (4) working update, (5) stochastic EMA of the fast and slow models.
  state.theta_w = sgd_step(state.theta_w, total, h.lr);
  const double a = state.rng.uniform01();
  const double b = state.rng.uniform01();
  rec.fast_update = a < h.p_fast;
  rec.slow_update = b < h.p_slow;
  if (rec.fast_update) state.theta_f = ema_update(state.theta_f, state.theta_w, h.decay_fast);
  if (rec.slow_update) state.theta_s = ema_update(state.theta_s, state.theta_w, h.decay_slow);

  // (6) buffer maintenance.
  state.processed += batch.size() + rec.reservoir_draws + rec.diversity_draws;
  offer_batch(state, model, batch, insert_teachers, true, true);
  return rec;
}

StepRecord der_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch) {
  check_batch(state, batch, TrainerKind::DER);
  const HyperParams& h = state.hyper;
  StepRecord rec;
  rec.step = ++state.step_count;

  const auto draws = sample_uniform(state.reservoir.entries(), h.replay_r + h.replay_d, state.rng);
  const std::vector<Heatmap> teachers = stored_teachers(draws);
  const std::vector<LossTerm> stream = batch_terms(batch);
  const std::vector<LossTerm> res = replay_terms(draws, teachers, h.alpha_r, h.beta_r);
  std::vector<Heatmap> insert_teachers = working_heatmaps(model, state.theta_w, batch);

  ParamVector total;
  const LossAndGrad gs = model.loss_and_grad(state.theta_w, stream);
  accumulate(total, gs, true);
  rec.stream_loss = gs.loss;
  if (has_active(res)) {
    const LossAndGrad gr = model.loss_and_grad(state.theta_w, res);
    accumulate(total, gr, true);
    rec.reservoir_kl = gr.kl;
    rec.reservoir_focal = gr.focal;
  }
  rec.reservoir_draws = draws.size();
  state.theta_w = sgd_step(state.theta_w, total, h.lr);

  state.processed += batch.size() + draws.size();
  offer_batch(state, model, batch, insert_teachers, true, false);
  return rec;
}

StepRecord gss_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch) {
  check_batch(state, batch, TrainerKind::GSS);
  const HyperParams& h = state.hyper;
  StepRecord rec;
  rec.step = ++state.step_count;

  const auto draws = sample_uniform(state.diversity.entries(), h.replay_r + h.replay_d, state.rng);
  std::vector<LossTerm> div;
  if (!draws.empty()) {
    const double weight = h.beta_d / static_cast<double>(draws.size());
    for (const BufferEntry* e : draws) div.push_back({&e->sample, nullptr, weight, 0.0});
  }
  const std::vector<LossTerm> stream = batch_terms(batch);
  std::vector<Heatmap> insert_teachers = working_heatmaps(model, state.theta_w, batch);

  ParamVector total;
  const LossAndGrad gs = model.loss_and_grad(state.theta_w, stream);
  accumulate(total, gs, true);
  rec.stream_loss = gs.loss;
  if (has_active(div)) {
    const LossAndGrad gd = model.loss_and_grad(state.theta_w, div);
    accumulate(total, gd, true);
    rec.diversity_focal = gd.focal;
  }
  rec.diversity_draws = draws.size();
  state.theta_w = sgd_step(state.theta_w, total, h.lr);

  state.processed += batch.size() + draws.size();
  offer_batch(state, model, batch, insert_teachers, false, true);
  return rec;
}

StepRecord agem_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch) {
  check_batch(state, batch, TrainerKind::AGEM);
  const HyperParams& h = state.hyper;
  StepRecord rec;
  rec.step = ++state.step_count;

  const auto draws = sample_uniform(state.reservoir.entries(), h.replay_r + h.replay_d, state.rng);
  std::vector<Heatmap> insert_teachers = working_heatmaps(model, state.theta_w, batch);
  const std::vector<LossTerm> stream = batch_terms(batch);
  const LossAndGrad gs = model.loss_and_grad(state.theta_w, stream);
  rec.stream_loss = gs.loss;

  ParamVector step_grad = gs.grad;
  if (!draws.empty()) {
    const double weight = 1.0 / static_cast<double>(draws.size());
    std::vector<LossTerm> ref;
    for (const BufferEntry* e : draws) ref.push_back({&e->sample, nullptr, weight, 0.0});
    const LossAndGrad gr = model.loss_and_grad(state.theta_w, ref);
    rec.reservoir_focal = gr.loss;
    Projection p = agem_project(gs.grad, gr.grad);
    rec.projected = p.projected;
    step_grad = std::move(p.grad);
  }
  rec.reservoir_draws = draws.size();
  state.theta_w = sgd_step(state.theta_w, step_grad, h.lr);

  state.processed += batch.size() + draws.size();
  offer_batch(state, model, batch, insert_teachers, true, false);
  return rec;
}

StepRecord train_step(LearnerState& state, const Predictor& model, std::span<const Sample> batch) {
  switch (state.kind) {
    case TrainerKind::DualLS: return dualls_step(state, model, batch);
    case TrainerKind::Vanilla: return vanilla_step(state, model, batch);
    case TrainerKind::DER: return der_step(state, model, batch);
    case TrainerKind::GSS: return gss_step(state, model, batch);
    case TrainerKind::AGEM: return agem_step(state, model, batch);
  }
  throw InternalError("unhandled trainer kind");
}

}  // namespace dualls
