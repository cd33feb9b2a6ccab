#include "dualls/stream.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "dualls/audit.hpp"
#include "dualls/csv_ingest.hpp"
#include "dualls/errors.hpp"
#include "dualls/rng.hpp"

namespace dualls {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void write_agent_row(std::vector<double>& dynamic, std::size_t row, const SceneConfig& scene, Vec2 current,
                     Vec2 velocity) {
  const std::size_t frames = scene.history_frames();
  const std::size_t width = scene.layout.agent_features;
  const double dt = scene.history_s / static_cast<double>(frames - 1);
  for (std::size_t k = 0; k < frames; ++k) {
    const double t = -static_cast<double>(frames - 1 - k) * dt;
    const Vec2 p = current + t * velocity;
    dynamic[row * width + 2 * k] = p.x / scene.feature_scale;
    dynamic[row * width + 2 * k + 1] = p.y / scene.feature_scale;
  }
  dynamic[row * width + width - 1] = 1.0;  // presence
}

void shuffle(std::vector<Sample>& samples, Rng& rng) {
  for (std::size_t i = samples.size(); i > 1; --i) {
    std::swap(samples[i - 1], samples[rng.index(i)]);
  }
}

Sample synthetic_sample(const TaskSpec& spec, const SceneConfig& scene, Rng& rng) {
  const FeatureLayout& layout = scene.layout;
  Sample s;
  s.dynamic_features.assign(layout.agents * layout.agent_features, 0.0);
  s.static_features.assign(layout.static_features, 0.0);
  s.tag = audit::make_tag(spec.task_id);

  const double rotation = spec.rotation_deg * kDegToRad;
  const double spread = spec.heading_spread_deg * kDegToRad;
  const double heading = spread > 0.0 ? rng.uniform(-spread, spread) : 0.0;
  const double speed = spec.speed_max > spec.speed_min ? rng.uniform(spec.speed_min, spec.speed_max) : spec.speed_min;
  const Vec2 direction{std::cos(heading), std::sin(heading)};
  s.speed = speed;
  s.heading = direction;
  write_agent_row(s.dynamic_features, 0, scene, {0.0, 0.0}, speed * direction);

  const std::size_t max_others = std::min(spec.agents_max, layout.agents - 1);
  const std::size_t min_others = std::min(spec.agents_min, max_others);
  const auto others = static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(min_others), static_cast<std::int64_t>(max_others)));
  for (std::size_t a = 0; a < others; ++a) {
    const Vec2 position{rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0)};
    const double their_heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double their_speed = rng.uniform(spec.speed_min, spec.speed_max);
    write_agent_row(s.dynamic_features, a + 1, scene, position,
                    their_speed * Vec2{std::cos(their_heading), std::sin(their_heading)});
  }

  for (std::size_t j = 0; j < layout.static_features; ++j) {
    const double harmonic = static_cast<double>(j / 2 + 1);
    s.static_features[j] = j % 2 == 0 ? std::cos(harmonic * rotation) : std::sin(harmonic * rotation);
  }

  const Vec2 clean = scene.horizon_s * speed * Vec2{std::cos(heading + rotation), std::sin(heading + rotation)};
  s.goal = clean;
  if (spec.noise_scale > 0.0) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Vec2 noisy = clean + Vec2{rng.normal(0.0, spec.noise_scale), rng.normal(0.0, spec.noise_scale)};
      if (scene.grid.contains(noisy)) {
        s.goal = noisy;
        break;
      }
    }
  }
  return s;
}

}  // namespace

void SceneConfig::validate() const {
  if (layout.agents < 1 || layout.static_features < 1) throw ConfigError("feature dimensions must be at least 1");
  if (layout.agent_features < 5 || layout.agent_features % 2 == 0) {
    throw ConfigError("agent_features must be odd and >= 5 (2 per history frame plus a presence flag)");
  }
  if (grid.rows < 2 || grid.cols < 2 || !(grid.cell_size > 0.0)) throw ConfigError("invalid heatmap grid");
  if (!(horizon_s > 0.0) || !(history_s > 0.0) || !(feature_scale > 0.0)) {
    throw ConfigError("horizon, history and feature scale must be positive");
  }
  if (csv_stride == 0) throw ConfigError("csv stride must be >= 1");
}

void validate_task(const TaskSpec& spec, const SceneConfig& scene) {
  if (spec.n_train < 1 || spec.n_test < 1) throw ConfigError("tasks need n_train >= 1 and n_test >= 1");
  if (spec.source == TaskSource::Csv) {
    if (spec.csv_path.empty()) throw ConfigError("csv task without a path");
    return;
  }
  if (!(spec.speed_min >= 0.0) || !(spec.speed_max >= spec.speed_min)) throw ConfigError("invalid speed range");
  if (spec.agents_max < spec.agents_min) throw ConfigError("invalid agent-count range");
  if (!(spec.noise_scale >= 0.0) || !(spec.heading_spread_deg >= 0.0)) {
    throw ConfigError("noise scale and heading spread must be >= 0");
  }
  if (!std::isfinite(spec.rotation_deg)) throw ConfigError("rotation must be finite");
  if (scene.layout.static_features < 2) throw ConfigError("synthetic tasks need at least 2 static features");
  const double reach = scene.horizon_s * spec.speed_max;
  const GridSpec& g = scene.grid;
  const double right = g.origin.x + static_cast<double>(g.cols) * g.cell_size;
  const double top = g.origin.y + static_cast<double>(g.rows) * g.cell_size;
  if (g.origin.x > -reach || g.origin.y > -reach || right < reach || top < reach) {
    throw ConfigError("task " + std::to_string(spec.task_id) + ": goals at speed " + std::to_string(spec.speed_max) +
                      " m/s leave the heatmap grid");
  }
}

TaskData generate_synthetic(const TaskSpec& spec, const SceneConfig& scene, std::uint64_t seed) {
  scene.validate();
  validate_task(spec, scene);
  if (spec.source != TaskSource::Synthetic) throw ConfigError("generate_synthetic on a csv task");
  Rng rng(seed);
  TaskData data;
  data.train.reserve(spec.n_train);
  data.test.reserve(spec.n_test);
  for (std::size_t i = 0; i < spec.n_train; ++i) data.train.push_back(synthetic_sample(spec, scene, rng));
  for (std::size_t i = 0; i < spec.n_test; ++i) data.test.push_back(synthetic_sample(spec, scene, rng));
  shuffle(data.train, rng);
  return data;
}

Vec2 synthetic_goal_from_features(const Sample& sample, const SceneConfig& scene) {
  const std::size_t frames = scene.history_frames();
  const auto& row = sample.dynamic_features;
  const Vec2 first{row[0], row[1]};
  const Vec2 last{row[2 * (frames - 1)], row[2 * (frames - 1) + 1]};
  const Vec2 velocity = (scene.feature_scale / scene.history_s) * (last - first);
  const double rotation = std::atan2(sample.static_features[1], sample.static_features[0]);
  return scene.horizon_s * rotate(velocity, rotation);
}

std::vector<TaskSpec> default_benchmark_tasks(std::size_t n_train, std::size_t n_test) {
  static constexpr double kSpeedLow[8] = {1.0, 4.0, 2.0, 5.5, 3.0, 6.0, 1.5, 4.5};
  std::vector<TaskSpec> tasks;
  for (int t = 0; t < 8; ++t) {
    TaskSpec spec;
    spec.task_id = t + 1;
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.rotation_deg = 45.0 * t;
    spec.speed_min = kSpeedLow[t];
    spec.speed_max = kSpeedLow[t] + 3.0;
    tasks.push_back(spec);
  }
  return tasks;
}

void StreamSpec::validate() const {
  scene.validate();
  if (tasks.empty()) throw InputError("stream has no tasks");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    validate_task(tasks[i], scene);
    for (std::size_t j = 0; j < i; ++j) {
      if (tasks[j].task_id == tasks[i].task_id) throw ConfigError("duplicate task id");
      TaskSpec a = tasks[i];
      TaskSpec b = tasks[j];
      a.task_id = b.task_id;
      a.n_train = b.n_train;
      a.n_test = b.n_test;
      if (a == b) {
        throw ConfigError("tasks " + std::to_string(tasks[j].task_id) + " and " + std::to_string(tasks[i].task_id) +
                          " share every distribution parameter");
      }
    }
  }
}

TaskStream::TaskStream(StreamSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), cache_(spec_.tasks.size()) {
  spec_.validate();
}

const TaskData& TaskStream::task(std::size_t index) {
  if (index >= cache_.size()) throw InternalError("task index out of range");
  if (!cache_[index]) {
    const TaskSpec& spec = spec_.tasks[index];
    const std::uint64_t task_seed = mix_seed(seed_, index);
    if (spec.source == TaskSource::Synthetic) {
      cache_[index] = generate_synthetic(spec, spec_.scene, task_seed);
    } else {
      CsvLoad loaded = load_csv(spec.csv_path, spec_.scene, spec.task_id);
      cache_[index] = split_csv_task(std::move(loaded.samples), spec, task_seed);
    }
  }
  return *cache_[index];
}

std::size_t TaskStream::total_train() {
  std::size_t total = 0;
  for (std::size_t i = 0; i < task_count(); ++i) total += task(i).train.size();
  return total;
}

BatchStream::BatchStream(TaskStream& stream, std::size_t batch_size, StreamPosition start)
    : stream_(&stream), batch_size_(batch_size), pos_(start) {
  if (batch_size_ == 0) throw ConfigError("batch size must be >= 1");
}

std::optional<Batch> BatchStream::next() {
  while (pos_.task < stream_->task_count()) {
    const std::vector<Sample>& train = stream_->task(pos_.task).train;
    if (pos_.offset < train.size()) {
      const std::size_t take = std::min(batch_size_, train.size() - pos_.offset);
      Batch batch{pos_.task, std::span<const Sample>(train).subspan(pos_.offset, take), false};
      pos_.offset += take;
      batch.ends_task = pos_.offset == train.size();
      if (batch.ends_task) {
        ++pos_.task;
        pos_.offset = 0;
      }
      return batch;
    }
    ++pos_.task;
    pos_.offset = 0;
  }
  return std::nullopt;
}

BatchStream stream_batches(TaskStream& stream, std::size_t batch_size) { return BatchStream(stream, batch_size); }

}  // namespace dualls
