#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualls/heatmap.hpp"
#include "dualls/sample.hpp"

namespace dualls {

enum class TaskSource { Synthetic, Csv };

// One domain of the incremental stream.
struct TaskSpec {
  int task_id = 0;
  TaskSource source = TaskSource::Synthetic;
  std::string csv_path;          // TaskSource::Csv only
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  double rotation_deg = 0.0;     // turn of the goal field relative to the travel direction
  double speed_min = 2.0;        // m/s
  double speed_max = 5.0;
  std::size_t agents_min = 1;    // surrounding agents, excluding the target
  std::size_t agents_max = 3;
  double noise_scale = 0.5;      // goal noise std-dev, metres
  double heading_spread_deg = 20.0;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Geometry shared by generation and ingestion.
struct SceneConfig {
  FeatureLayout layout;
  GridSpec grid;
  double horizon_s = 3.0;      // goal lead time
  double history_s = 1.0;      // observed history length
  double feature_scale = 10.0; // metres per feature unit
  std::size_t csv_stride = 10; // frames between CSV windows

  // History frames per agent row; agent_features = 2 * frames + 1.
  std::size_t history_frames() const { return (layout.agent_features - 1) / 2; }
  void validate() const;
  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct TaskData {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Throws ConfigError on degenerate ranges.
void validate_task(const TaskSpec& spec, const SceneConfig& scene);

// Samples whose goal is horizon * speed * (direction of travel turned by the
// task rotation) plus Gaussian noise. Map encoding carries the rotation.
TaskData generate_synthetic(const TaskSpec& spec, const SceneConfig& scene, std::uint64_t seed);

// Noise-free goal implied by a synthetic sample's features.
Vec2 synthetic_goal_from_features(const Sample& sample, const SceneConfig& scene);

// Eight-task default benchmark: rotations 0, 45, ..., 315 degrees with
// distinct speed ranges.
std::vector<TaskSpec> default_benchmark_tasks(std::size_t n_train = 2000, std::size_t n_test = 500);

struct StreamSpec {
  SceneConfig scene;
  std::vector<TaskSpec> tasks;
  void validate() const;
  friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

// Ordered tasks with per-task train/test sets, generated on first access.
class TaskStream {
 public:
  TaskStream(StreamSpec spec, std::uint64_t seed);

  const StreamSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t task_count() const { return spec_.tasks.size(); }
  const TaskData& task(std::size_t index);
  std::size_t total_train();

 private:
  StreamSpec spec_;
  std::uint64_t seed_;
  std::vector<std::optional<TaskData>> cache_;
};

struct StreamPosition {
  std::size_t task = 0;
  std::size_t offset = 0;
  friend bool operator==(const StreamPosition&, const StreamPosition&) = default;
};

struct Batch {
  std::size_t task_index = 0;
  std::span<const Sample> samples;
  bool ends_task = false;
};

// Training batches in task order; never crosses a task boundary, so the last
// batch of a task may be short.
class BatchStream {
 public:
  BatchStream(TaskStream& stream, std::size_t batch_size, StreamPosition start = {});
  std::optional<Batch> next();
  StreamPosition position() const { return pos_; }

 private:
  TaskStream* stream_;
  std::size_t batch_size_;
  StreamPosition pos_;
};

BatchStream stream_batches(TaskStream& stream, std::size_t batch_size);

}  // namespace dualls
