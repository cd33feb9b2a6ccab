#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dualls/geometry.hpp"
#include "dualls/heatmap.hpp"
#include "dualls/rng.hpp"

namespace dualls {

// K candidate goals ordered by descending predicted probability.
struct GoalSet {
  std::vector<Vec2> positions;
  std::vector<double> probabilities;
};

// Centers of the K most probable cells; ties go to the lower row-major index.
GoalSet extract_goals(const Heatmap& heatmap, std::size_t k);

// K distinct cells drawn without replacement in proportion to their mass.
GoalSet sample_goals(const Heatmap& heatmap, std::size_t k, Rng& rng);

// Minimum Euclidean distance from any goal to the truth.
double fde(const GoalSet& goals, Vec2 truth);

// Longitudinal half-length of the miss box (metres) at speed v (m/s).
double mr_threshold(double speed);

inline constexpr double kLateralMissThreshold = 1.0;

// True when the goal leaves the heading-aligned box around the truth.
bool miss(Vec2 goal, Vec2 truth, Vec2 heading, double speed);

// Fraction of all K * N goals that miss.
double mr_task(std::span<const GoalSet> predictions, std::span<const Vec2> truths, std::span<const double> speeds,
               std::span<const Vec2> headings);

enum class MetricKind { FDE, MR };
std::string_view to_string(MetricKind kind);

// R(i, j): error on task j after training through task i (0-based).
class ErrorMatrix {
 public:
  ErrorMatrix() = default;
  ErrorMatrix(std::size_t tasks, MetricKind kind);

  std::size_t tasks() const { return tasks_; }
  MetricKind kind() const { return kind_; }
  double operator()(std::size_t i, std::size_t j) const;
  bool row_filled(std::size_t i) const { return filled_.at(i); }
  std::span<const double> row(std::size_t i) const;

  void set_row(std::size_t i, std::span<const double> values);

  friend bool operator==(const ErrorMatrix&, const ErrorMatrix&) = default;

 private:
  std::size_t tasks_ = 0;
  MetricKind kind_ = MetricKind::FDE;
  std::vector<double> values_;
  std::vector<bool> filled_;
};

// Mean over past tasks i < c of R(c, i) - R(i, i). Needs c >= 1 and rows
// 0..c filled.
double bwt(const ErrorMatrix& r, std::size_t current);

// Mean of row c over all tasks.
double averages(const ErrorMatrix& r, std::size_t current);

}  // namespace dualls
