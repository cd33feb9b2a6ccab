#include "dualls/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dualls/errors.hpp"

namespace dualls {

namespace {

GoalSet goals_from_cells(const Heatmap& heatmap, std::span<const std::size_t> cells) {
  GoalSet out;
  for (std::size_t c : cells) {
    out.positions.push_back(heatmap.grid().cell_center(c));
    out.probabilities.push_back(heatmap[c]);
  }
  return out;
}

}  // namespace

GoalSet extract_goals(const Heatmap& heatmap, std::size_t k) {
  if (k == 0 || k > heatmap.size()) throw ConfigError("K must lie in [1, cells]");
  std::vector<std::size_t> order(heatmap.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return heatmap[a] > heatmap[b] || (heatmap[a] == heatmap[b] && a < b); });
  order.resize(k);
  return goals_from_cells(heatmap, order);
}

GoalSet sample_goals(const Heatmap& heatmap, std::size_t k, Rng& rng) {
  if (k == 0 || k > heatmap.size()) throw ConfigError("K must lie in [1, cells]");
  std::vector<double> mass(heatmap.values().begin(), heatmap.values().end());
  std::vector<std::size_t> picked;
  for (std::size_t n = 0; n < k; ++n) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    std::size_t cell = 0;
    if (total > 0.0) {
      const double u = rng.uniform01() * total;
      double cumulative = 0.0;
      for (std::size_t c = 0; c < mass.size(); ++c) {
        if (mass[c] <= 0.0) continue;
        cumulative += mass[c];
        cell = c;  // last positive cell absorbs rounding at the top end
        if (u < cumulative) break;
      }
    } else {
      while (std::find(picked.begin(), picked.end(), cell) != picked.end()) ++cell;
    }
    picked.push_back(cell);
    mass[cell] = 0.0;
  }
  std::stable_sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) { return heatmap[a] > heatmap[b]; });
  return goals_from_cells(heatmap, picked);
}

double fde(const GoalSet& goals, Vec2 truth) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& g : goals.positions) best = std::min(best, distance(g, truth));
  return best;
}

double mr_threshold(double speed) {
  if (!(speed >= 0.0)) throw InputError("speed must be non-negative");
  if (speed < 1.4) return 1.0;
  if (speed <= 11.0) return 1.0 + (speed - 1.4) / (11.0 - 1.4);
  return 2.0;
}

bool miss(Vec2 goal, Vec2 truth, Vec2 heading, double speed) {
  const double h = length(heading);
  if (h == 0.0 || !std::isfinite(h)) throw InputError("miss box needs a non-zero heading");
  const Vec2 u{heading.x / h, heading.y / h};
  const Vec2 d = goal - truth;
  const double longitudinal = d.x * u.x + d.y * u.y;
  const double lateral = -d.x * u.y + d.y * u.x;
  return std::abs(lateral) > kLateralMissThreshold || std::abs(longitudinal) > mr_threshold(speed);
}

double mr_task(std::span<const GoalSet> predictions, std::span<const Vec2> truths, std::span<const double> speeds,
               std::span<const Vec2> headings) {
  if (predictions.size() != truths.size() || truths.size() != speeds.size() || speeds.size() != headings.size()) {
    throw InputError("mr_task: input lengths differ");
  }
  std::size_t goals = 0;
  std::size_t misses = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (const Vec2& g : predictions[i].positions) {
      ++goals;
      if (miss(g, truths[i], headings[i], speeds[i])) ++misses;
    }
  }
  if (goals == 0) return 0.0;
  return static_cast<double>(misses) / static_cast<double>(goals);
}

std::string_view to_string(MetricKind kind) { return kind == MetricKind::FDE ? "fde" : "mr"; }

ErrorMatrix::ErrorMatrix(std::size_t tasks, MetricKind kind)
    : tasks_(tasks), kind_(kind), values_(tasks * tasks, 0.0), filled_(tasks, false) {}

double ErrorMatrix::operator()(std::size_t i, std::size_t j) const {
  if (i >= tasks_ || j >= tasks_) throw InternalError("error matrix index out of range");
  return values_[i * tasks_ + j];
}

std::span<const double> ErrorMatrix::row(std::size_t i) const {
  if (i >= tasks_) throw InternalError("error matrix row out of range");
  return std::span<const double>(values_).subspan(i * tasks_, tasks_);
}

void ErrorMatrix::set_row(std::size_t i, std::span<const double> values) {
  if (i >= tasks_ || values.size() != tasks_) throw InternalError("error matrix row shape mismatch");
  for (double v : values) {
    if (!(v >= 0.0)) throw InputError("error matrix entries must be non-negative");
  }
  std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(i * tasks_));
  filled_[i] = true;
}

double bwt(const ErrorMatrix& r, std::size_t current) {
  if (current < 1) throw InputError("backward transfer is undefined before the second task");
  if (current >= r.tasks()) throw InternalError("bwt: task index out of range");
  for (std::size_t i = 0; i <= current; ++i) {
    if (!r.row_filled(i)) throw InternalError("bwt: row " + std::to_string(i) + " not filled");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < current; ++i) sum += r(current, i) - r(i, i);
  return sum / static_cast<double>(current);
}

double averages(const ErrorMatrix& r, std::size_t current) {
  if (!r.row_filled(current)) throw InternalError("averages: row not filled");
  const auto row = r.row(current);
  return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

}  // namespace dualls
