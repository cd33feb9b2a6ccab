#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "dualls/buffers.hpp"
#include "dualls/predictor.hpp"
#include "dualls/runner.hpp"
#include "dualls/stream.hpp"
#include "dualls/trainer.hpp"

using namespace dualls;

namespace {

StreamSpec bench_spec() {
  StreamSpec spec;
  spec.tasks = default_benchmark_tasks(512, 8);
  spec.tasks.resize(2);
  return spec;
}

PredictorConfig bench_model(std::size_t width) {
  PredictorConfig c;
  c.layout = bench_spec().scene.layout;
  c.grid = bench_spec().scene.grid;
  c.hidden = {width, width};
  return c;
}

const std::vector<Sample>& train_samples() {
  static TaskStream stream(bench_spec(), 1);
  return stream.task(0).train;
}

}  // namespace

static void Forward(benchmark::State& state) {
  const Predictor model(bench_model(static_cast<std::size_t>(state.range(0))));
  const ParamVector p = initial_params(model, 1);
  const Sample& s = train_samples().front();
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(p, s));
}
BENCHMARK(Forward)->Arg(32)->Arg(64)->Arg(128);

static void BatchGradient(benchmark::State& state) {
  const Predictor model(bench_model(static_cast<std::size_t>(state.range(0))));
  const ParamVector p = initial_params(model, 1);
  const std::span<const Sample> batch(train_samples().data(), 8);
  for (auto _ : state) benchmark::DoNotOptimize(model.grad(p, batch));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BatchGradient)->Arg(32)->Arg(64)->Arg(128);

// Cosine scoring of one candidate against 8 references, factored vs dense.
static void ScoreFactored(benchmark::State& state) {
  const Predictor model(bench_model(64));
  const ParamVector p = initial_params(model, 1);
  std::vector<FactoredGradient> refs;
  for (std::size_t i = 1; i <= 8; ++i) refs.push_back(model.factored_grad(p, train_samples()[i]));
  const FactoredGradient g = model.factored_grad(p, train_samples()[0]);
  for (auto _ : state) {
    benchmark::DoNotOptimize(diversity_score_with<FactoredGradient>(
        g, refs, [](const FactoredGradient& a, const FactoredGradient& b) { return dot(a, b); }));
  }
}
BENCHMARK(ScoreFactored);

static void ScoreDense(benchmark::State& state) {
  const Predictor model(bench_model(64));
  const ParamVector p = initial_params(model, 1);
  std::vector<ParamVector> refs;
  for (std::size_t i = 1; i <= 8; ++i) refs.push_back(model.expand(model.factored_grad(p, train_samples()[i])));
  const ParamVector g = model.expand(model.factored_grad(p, train_samples()[0]));
  for (auto _ : state) benchmark::DoNotOptimize(diversity_score(g, refs));
}
BENCHMARK(ScoreDense);

static void ReservoirOffer(benchmark::State& state) {
  Reservoir<int> r(static_cast<std::size_t>(state.range(0)), 3);
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(r.offer(i++));
}
BENCHMARK(ReservoirOffer)->Arg(500)->Arg(5000);

// One training step per trainer on a warm stream, buffers full.
static void TrainStep(benchmark::State& state) {
  const auto kind = static_cast<TrainerKind>(state.range(0));
  const Predictor model(bench_model(64));
  LearnerState s = seeded_learner(kind, model, HyperParams{}, BufferBudget{128, 0.5}, 1);
  const auto& data = train_samples();
  std::size_t at = 0;
  const auto next = [&] {
    const std::span<const Sample> b(data.data() + at, 8);
    at = (at + 8) % data.size();
    return b;
  };
  for (std::size_t i = 0; i < 32; ++i) train_step(s, model, next());
  for (auto _ : state) benchmark::DoNotOptimize(train_step(s, model, next()));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(TrainStep)->DenseRange(0, 4)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
