#include "dualls/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualls/errors.hpp"

namespace dualls {

Vec2 GridSpec::cell_center(std::size_t index) const {
  const std::size_t row = index / cols;
  const std::size_t col = index % cols;
  return {origin.x + (static_cast<double>(col) + 0.5) * cell_size,
          origin.y + (static_cast<double>(row) + 0.5) * cell_size};
}

bool GridSpec::contains(Vec2 p) const {
  return p.x >= origin.x && p.y >= origin.y &&
         p.x <= origin.x + static_cast<double>(cols) * cell_size &&
         p.y <= origin.y + static_cast<double>(rows) * cell_size;
}

Vec2 GridSpec::to_cell_coords(Vec2 p) const {
  return {(p.x - origin.x) / cell_size, (p.y - origin.y) / cell_size};
}

Heatmap::Heatmap(GridSpec grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (grid_.rows < 2 || grid_.cols < 2) throw ConfigError("heatmap grid must be at least 2x2");
  if (values_.size() != grid_.cells()) {
    throw InputError("heatmap has " + std::to_string(values_.size()) + " cells, grid expects " +
                     std::to_string(grid_.cells()));
  }
}

Heatmap Heatmap::uniform(const GridSpec& grid) {
  return Heatmap(grid, std::vector<double>(grid.cells(), 1.0 / static_cast<double>(grid.cells())));
}

Heatmap Heatmap::from_logits(const GridSpec& grid, std::span<const double> logits) {
  if (logits.size() != grid.cells()) throw InputError("logit count does not match grid");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> values(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    values[i] = std::exp(logits[i] - peak);
    total += values[i];
  }
  for (double& v : values) v /= total;
  return Heatmap(grid, std::move(values));
}

double Heatmap::mass() const {
  double total = 0.0;
  for (double v : values_) total += v;
  return total;
}

bool Heatmap::is_normalized(double tol) const {
  if (std::any_of(values_.begin(), values_.end(), [](double v) { return !(v >= 0.0); })) return false;
  return std::abs(mass() - 1.0) <= tol;
}

}  // namespace dualls
