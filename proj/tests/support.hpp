#pragma once

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "dualls/audit.hpp"
#include "dualls/buffers.hpp"
#include "dualls/config.hpp"
#include "dualls/predictor.hpp"
#include "dualls/rng.hpp"
#include "dualls/sample.hpp"
#include "dualls/stream.hpp"

namespace dualls::testing {

// 2 agents x 3 features + 2 static inputs, 4x4 grid of 1 m cells.
inline PredictorConfig tiny_config(std::vector<std::size_t> hidden = {5, 4}) {
  PredictorConfig c;
  c.layout = {2, 3, 2};
  c.grid.rows = 4;
  c.grid.cols = 4;
  c.grid.origin = {-2.0, -2.0};
  c.grid.cell_size = 1.0;
  c.hidden = std::move(hidden);
  return c;
}

inline Sample random_sample(const PredictorConfig& c, Rng& rng, int task = 0) {
  Sample s;
  s.dynamic_features.resize(c.layout.agents * c.layout.agent_features);
  s.static_features.resize(c.layout.static_features);
  for (double& v : s.dynamic_features) v = rng.uniform(-1.0, 1.0);
  for (double& v : s.static_features) v = rng.uniform(-1.0, 1.0);
  const double w = c.grid.cell_size * static_cast<double>(c.grid.cols);
  const double h = c.grid.cell_size * static_cast<double>(c.grid.rows);
  s.goal = {c.grid.origin.x + rng.uniform(0.05, 0.95) * w, c.grid.origin.y + rng.uniform(0.05, 0.95) * h};
  s.speed = rng.uniform(0.0, 15.0);
  s.tag = audit::make_tag(task);
  return s;
}

inline ParamVector random_params(const Predictor& model, Rng& rng, double scale = 0.5) {
  ParamVector p(model.param_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(-scale, scale);
  return p;
}

// First `tasks` benchmark tasks on the default scene, shortened.
inline StreamSpec short_stream(std::size_t tasks, std::size_t n_train, std::size_t n_test) {
  StreamSpec s;
  auto all = default_benchmark_tasks(n_train, n_test);
  s.tasks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(tasks));
  return s;
}

// Desk-benchmark preset used by the acceptance suite; mirrors
// configs/desk_benchmark.yaml. Library defaults apart from a larger step and
// a faster slow-model EMA.
inline ExperimentConfig desk_benchmark_config() {
  ExperimentConfig c = default_experiment();
  c.name = "desk_benchmark";
  c.trainers = {TrainerKind::DualLS, TrainerKind::Vanilla, TrainerKind::DER, TrainerKind::GSS, TrainerKind::AGEM};
  c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  c.budgets = {1000};
  c.hyper.lr = 0.05;
  c.hyper.decay_slow = 0.95;
  c.hyper.p_slow = 0.5;
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dualls_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Kolmogorov distribution tail, P(K > lambda).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Two-sample Kolmogorov-Smirnov test; asymptotic p-value with the
// Stephens small-sample correction.
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d);
}

inline double chi_square_p(double statistic, double dof) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), statistic));
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
inline double sign_test_p(std::size_t wins, std::size_t n) {
  if (wins == 0) return 1.0;
  const boost::math::binomial b(static_cast<double>(n), 0.5);
  return boost::math::cdf(boost::math::complement(b, static_cast<double>(wins) - 1.0));
}

// One-sided paired t-test of mean(a - b) < 0.
inline double paired_t_less_p(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return mean < 0.0 ? 0.0 : 1.0;
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  return boost::math::cdf(boost::math::students_t(static_cast<double>(n - 1)), t);
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Constructed stream whose "gradients" live in the sample features: 90
// near-copies of a direction d and the 10 unit axes e_k of R^10, shuffled.
// d points along -(1, ..., 1), so every axis sits at cosine -1/sqrt(10) to it;
// the axes are mutually orthogonal.
inline constexpr std::size_t kContestDim = 10;

inline std::vector<Sample> gradient_contest_stream(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> stream;
  for (std::size_t i = 0; i < 90; ++i) {
    Sample s;
    s.dynamic_features.resize(kContestDim);
    for (double& v : s.dynamic_features) v = -1.0 + rng.normal(0.0, 0.05);
    s.tag = audit::make_tag(0);
    stream.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < kContestDim; ++k) {
    Sample s;
    s.dynamic_features.assign(kContestDim, 0.0);
    s.dynamic_features[k] = 1.0;
    s.tag = audit::make_tag(1);
    stream.push_back(std::move(s));
  }
  std::shuffle(stream.begin(), stream.end(), rng.engine());
  return stream;
}

inline ParamVector contest_gradient(const Sample& s) { return ParamVector(s.dynamic_features); }

inline double mean_pairwise_cosine(const std::vector<BufferEntry>& entries) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      sum += cosine(contest_gradient(entries[i].sample), contest_gradient(entries[j].sample));
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

struct ContestResult {
  double diversity_cosine = 0.0;
  double reservoir_cosine = 0.0;
};

// Feeds the same stream to a capacity-10 reservoir and diversity buffer.
inline ContestResult run_gradient_contest(std::uint64_t seed) {
  const std::vector<Sample> stream = gradient_contest_stream(seed);
  ReservoirBuffer res(10, mix_seed(seed, 1));
  DiversityBuffer div(10, 8, mix_seed(seed, 2));
  std::uint64_t index = 0;
  for (const Sample& s : stream) {
    BufferEntry e{s, {}, 0.0, ++index};
    res.offer(e);
    div.offer(std::move(e), contest_gradient);
  }
  return {mean_pairwise_cosine(div.entries()), mean_pairwise_cosine(res.entries())};
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace dualls::testing
