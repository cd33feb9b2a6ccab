#include "dualls/sample.hpp"

#include <cmath>

#include "dualls/errors.hpp"

namespace dualls {

void validate_sample(const Sample& sample, const FeatureLayout& layout, const GridSpec& grid) {
  if (sample.dynamic_features.size() != layout.agents * layout.agent_features ||
      sample.static_features.size() != layout.static_features) {
    throw ConfigError("sample feature dimensions do not match the layout");
  }
  if (!(sample.speed >= 0.0)) throw InputError("sample speed must be non-negative");
  if (!grid.contains(sample.goal)) throw InputError("sample goal lies outside the heatmap grid");
}

Vec2 heading_from_velocity(Vec2 velocity) {
  const double speed = length(velocity);
  if (speed < 1e-6) return {1.0, 0.0};
  return {velocity.x / speed, velocity.y / speed};
}

}  // namespace dualls
