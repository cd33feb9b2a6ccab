#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dualls {

// curves: per-metric task curves (mean over seeds with a one-std band)
// matrix: error-matrix heat grid per run, cells annotated with R values
// composition: stacked buffer composition over steps per run and buffer
// loss: training-loss trace per run with task-boundary shading
inline const std::vector<std::string> kPlotKinds{"curves", "matrix", "composition", "loss"};

struct PlotReport {
  std::vector<std::filesystem::path> files;  // SVGs and their plot-data CSVs
  std::vector<std::string> warnings;
};

// Reads records.json and the run CSVs under `records_dir`, writes into
// `records_dir`/plots. An empty `kinds` means all kinds. Unknown kinds are
// skipped with a warning; an empty record set is a no-op with a warning.
PlotReport emit_plots(const std::filesystem::path& records_dir, const std::vector<std::string>& kinds = {});

// Text used to annotate an error-matrix cell.
std::string matrix_label(double value);

}  // namespace dualls
