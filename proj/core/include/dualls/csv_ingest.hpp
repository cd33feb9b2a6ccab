#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string_view>
#include <vector>

#include "dualls/sample.hpp"
#include "dualls/stream.hpp"

namespace dualls {

// Fixed trajectory-table header. One row per (case, agent, frame) at 10 Hz;
// exactly one agent per case has is_target = 1.
inline constexpr std::string_view kCsvHeader = "case_id,agent_id,timestamp_ms,x,y,vx,vy,is_target";
inline constexpr std::int64_t kCsvFramePeriodMs = 100;

struct CsvLoad {
  std::vector<Sample> samples;
  std::size_t warnings = 0;         // malformed rows (bad field count, non-numeric values)
  std::size_t dropped_missing = 0;  // rows with empty fields
  std::size_t off_grid = 0;         // windows whose goal left the heatmap grid
  std::size_t cases_without_target = 0;
};

// Cuts every target track into (history -> goal) windows: `history_s` of
// past positions and the position `horizon_s` after the last observed frame,
// advancing `csv_stride` frames between windows. Throws InputError on a
// missing file or a header mismatch.
CsvLoad load_csv(const std::filesystem::path& path, const SceneConfig& scene, int task_id);
CsvLoad load_csv(std::istream& in, const SceneConfig& scene, int task_id);

// Seeded shuffle, then the first min(n_test, size - 1) samples become the
// test set and up to n_train of the rest the training set. Throws InputError
// when fewer than two samples are available.
TaskData split_csv_task(std::vector<Sample> samples, const TaskSpec& spec, std::uint64_t seed);

}  // namespace dualls
