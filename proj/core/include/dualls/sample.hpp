#pragma once

#include <cstddef>
#include <vector>

#include "dualls/geometry.hpp"
#include "dualls/heatmap.hpp"

namespace dualls {

class TaskTag;

namespace audit {
TaskTag make_tag(int task_id);
int task_id(const TaskTag& tag);
}  // namespace audit

// Hidden task membership of a sample. Opaque to learners; only the
// evaluation harness reads it, through dualls/audit.hpp.
class TaskTag {
 public:
  TaskTag() = default;
  friend bool operator==(const TaskTag&, const TaskTag&) = default;

 private:
  explicit TaskTag(int id) : id_(id) {}
  int id_ = -1;

  friend TaskTag audit::make_tag(int task_id);
  friend int audit::task_id(const TaskTag& tag);
};

// Input dimensions, fixed per experiment.
struct FeatureLayout {
  std::size_t agents = 4;            // d_v
  std::size_t agent_features = 11;   // d_s
  std::size_t static_features = 4;   // d_e

  std::size_t input_size() const { return agents * agent_features + static_features; }
  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

// One observation: agent histories, map encoding and the 2-D goal reached by
// the target agent.
struct Sample {
  std::vector<double> dynamic_features;  // agents x agent_features, row-major
  std::vector<double> static_features;
  Vec2 goal;
  double speed = 0.0;   // m/s at prediction time
  Vec2 heading{1.0, 0.0};  // unit direction of the last observed velocity
  TaskTag tag;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Throws ConfigError/InputError if the sample violates the layout, has a
// negative speed or its goal falls off the grid.
void validate_sample(const Sample& sample, const FeatureLayout& layout, const GridSpec& grid);

// Unit heading from a velocity; +x when the speed is below 1e-6 m/s.
Vec2 heading_from_velocity(Vec2 velocity);

}  // namespace dualls
