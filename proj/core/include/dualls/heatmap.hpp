#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualls/geometry.hpp"

namespace dualls {

// Spatial layout of a goal heatmap: `rows` cells along y, `cols` along x,
// starting at `origin` (the lower-left corner) with square cells.
struct GridSpec {
  std::size_t rows = 16;
  std::size_t cols = 16;
  Vec2 origin{-32.0, -32.0};
  double cell_size = 4.0;

  std::size_t cells() const { return rows * cols; }
  Vec2 cell_center(std::size_t index) const;
  bool contains(Vec2 p) const;
  // Continuous (col, row) coordinate of p in cell units.
  Vec2 to_cell_coords(Vec2 p) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Non-negative probability mass per cell, row-major, summing to one.
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(GridSpec grid, std::vector<double> values);

  static Heatmap uniform(const GridSpec& grid);
  // Softmax over raw logits.
  static Heatmap from_logits(const GridSpec& grid, std::span<const double> logits);

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  // Sum of cells, for invariant checks.
  double mass() const;
  bool is_normalized(double tol = 1e-6) const;

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

}  // namespace dualls
