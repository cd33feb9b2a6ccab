#include "dualls/csv_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include "dualls/audit.hpp"
#include "dualls/errors.hpp"
#include "dualls/rng.hpp"

namespace dualls {

namespace {

struct Row {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  bool target = false;
};

using Track = std::map<std::int64_t, Row>;       // timestamp -> row
using Case = std::map<std::int64_t, Track>;      // agent id -> track

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  return s;
}

Vec2 position(const Row& r) { return {r.x, r.y}; }

// Consecutive runs (frame period apart) of a track's timestamps.
std::vector<std::vector<std::int64_t>> consecutive_runs(const Track& track) {
  std::vector<std::vector<std::int64_t>> runs;
  for (const auto& [ts, row] : track) {
    if (runs.empty() || ts - runs.back().back() != kCsvFramePeriodMs) runs.emplace_back();
    runs.back().push_back(ts);
  }
  return runs;
}

void write_row(std::vector<double>& dynamic, std::size_t row, std::size_t width, const std::vector<Vec2>& history,
               Vec2 anchor, double scale) {
  for (std::size_t k = 0; k < history.size(); ++k) {
    dynamic[row * width + 2 * k] = (history[k].x - anchor.x) / scale;
    dynamic[row * width + 2 * k + 1] = (history[k].y - anchor.y) / scale;
  }
  dynamic[row * width + width - 1] = 1.0;
}

void windows_for_case(const Case& c, std::int64_t target_id, const SceneConfig& scene, int task_id, CsvLoad& out) {
  const Track& target = c.at(target_id);
  const auto history_frames = static_cast<std::size_t>(std::llround(scene.history_s * 1000.0 / kCsvFramePeriodMs));
  const auto horizon_frames = static_cast<std::size_t>(std::llround(scene.horizon_s * 1000.0 / kCsvFramePeriodMs));
  const std::size_t layout_frames = scene.history_frames();
  const std::size_t width = scene.layout.agent_features;
  if (history_frames < 2) throw ConfigError("csv history must span at least two frames");

  // Which of the observed history frames feed the feature rows.
  std::vector<std::size_t> picks(layout_frames);
  for (std::size_t k = 0; k < layout_frames; ++k) {
    picks[k] = static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(history_frames - 1) /
                                                     static_cast<double>(layout_frames - 1)));
  }

  for (const std::vector<std::int64_t>& run : consecutive_runs(target)) {
    const std::size_t span = history_frames + horizon_frames;
    if (run.size() < span) continue;
    for (std::size_t start = 0; start + span <= run.size(); start += scene.csv_stride) {
      const std::size_t now = start + history_frames - 1;
      const Row& current = target.at(run[now]);
      const Vec2 anchor = position(current);
      const Vec2 goal = position(target.at(run[now + horizon_frames])) - anchor;
      if (!scene.grid.contains(goal)) {
        ++out.off_grid;
        continue;
      }

      Sample s;
      s.dynamic_features.assign(scene.layout.agents * width, 0.0);
      s.static_features.assign(scene.layout.static_features, 0.0);
      s.goal = goal;
      s.speed = std::hypot(current.vx, current.vy);
      s.heading = heading_from_velocity({current.vx, current.vy});
      s.tag = audit::make_tag(task_id);

      std::vector<Vec2> history(layout_frames);
      for (std::size_t k = 0; k < layout_frames; ++k) history[k] = position(target.at(run[start + picks[k]]));
      write_row(s.dynamic_features, 0, width, history, anchor, scene.feature_scale);

      // Surrounding agents visible at the prediction frame, nearest first.
      std::vector<std::pair<double, std::int64_t>> others;
      for (const auto& [agent, track] : c) {
        if (agent == target_id) continue;
        const auto it = track.find(run[now]);
        if (it != track.end()) others.emplace_back(distance(position(it->second), anchor), agent);
      }
      std::sort(others.begin(), others.end());
      const std::size_t keep = std::min(others.size(), scene.layout.agents - 1);
      for (std::size_t a = 0; a < keep; ++a) {
        const Track& track = c.at(others[a].second);
        const Vec2 held = position(track.at(run[now]));
        for (std::size_t k = 0; k < layout_frames; ++k) {
          const auto it = track.find(run[start + picks[k]]);
          history[k] = it != track.end() ? position(it->second) : held;
        }
        write_row(s.dynamic_features, a + 1, width, history, anchor, scene.feature_scale);
      }
      out.samples.push_back(std::move(s));
    }
  }
}

}  // namespace

CsvLoad load_csv(std::istream& in, const SceneConfig& scene, int task_id) {
  scene.validate();
  CsvLoad out;
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != kCsvHeader) {
    throw InputError("csv header must be exactly: " + std::string(kCsvHeader));
  }

  std::map<std::string, Case> cases;
  std::map<std::string, std::int64_t> targets;
  while (std::getline(in, line)) {
    const std::string_view text = trim_cr(line);
    if (text.empty()) continue;
    const std::vector<std::string_view> f = split(text);
    if (f.size() != 8) {
      ++out.warnings;
      continue;
    }
    if (std::any_of(f.begin(), f.end(), [](std::string_view v) { return v.empty(); })) {
      ++out.dropped_missing;
      continue;
    }
    std::int64_t agent = 0;
    std::int64_t ts = 0;
    int flag = 0;
    Row row;
    if (!parse_number(f[1], agent) || !parse_number(f[2], ts) || !parse_number(f[3], row.x) ||
        !parse_number(f[4], row.y) || !parse_number(f[5], row.vx) || !parse_number(f[6], row.vy) ||
        !parse_number(f[7], flag) || (flag != 0 && flag != 1) || !std::isfinite(row.x) || !std::isfinite(row.y) ||
        !std::isfinite(row.vx) || !std::isfinite(row.vy)) {
      ++out.warnings;
      continue;
    }
    row.target = flag == 1;
    const std::string case_id(f[0]);
    cases[case_id][agent][ts] = row;
    if (row.target) targets.emplace(case_id, agent);
  }

  for (const auto& [case_id, c] : cases) {
    const auto t = targets.find(case_id);
    if (t == targets.end()) {
      ++out.cases_without_target;
      continue;
    }
    windows_for_case(c, t->second, scene, task_id, out);
  }
  return out;
}

CsvLoad load_csv(const std::filesystem::path& path, const SceneConfig& scene, int task_id) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open csv file " + path.string());
  return load_csv(in, scene, task_id);
}

TaskData split_csv_task(std::vector<Sample> samples, const TaskSpec& spec, std::uint64_t seed) {
  if (samples.size() < 2) {
    throw InputError("csv task " + std::to_string(spec.task_id) + " yields fewer than two usable samples");
  }
  Rng rng(seed);
  for (std::size_t i = samples.size(); i > 1; --i) std::swap(samples[i - 1], samples[rng.index(i)]);
  TaskData data;
  const std::size_t n_test = std::min(spec.n_test, samples.size() - 1);
  const std::size_t n_train = std::min(spec.n_train, samples.size() - n_test);
  data.test.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.begin() + n_test));
  data.train.assign(std::make_move_iterator(samples.begin() + n_test),
                    std::make_move_iterator(samples.begin() + n_test + n_train));
  return data;
}

}  // namespace dualls
