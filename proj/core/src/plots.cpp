#include "dualls/plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "dualls/errors.hpp"
#include "dualls/experiment.hpp"
#include "dualls/table.hpp"

namespace dualls {

namespace {

namespace fs = std::filesystem;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, const std::string& fill, double opacity = 1.0,
            const std::string& stroke = "none") {
    out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
         << "\" fill=\"" << fill << "\" fill-opacity=\"" << num(opacity) << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
         << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, double size = 11, const std::string& anchor = "middle",
            const std::string& extra = "") {
    out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\"" << extra << ">" << escape(s)
         << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width = 1.5) {
    out_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\" points=\"";
    for (const auto& [x, y] : pts) out_ << num(x) << "," << num(y) << " ";
    out_ << "\"/>\n";
  }
  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill, double opacity) {
    out_ << "<polygon stroke=\"none\" fill=\"" << fill << "\" fill-opacity=\"" << num(opacity) << "\" points=\"";
    for (const auto& [x, y] : pts) out_ << num(x) << "," << num(y) << " ";
    out_ << "\"/>\n";
  }
  std::string str() const {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\"" << num(height_)
      << "\" viewBox=\"0 0 " << num(width_) << " " << num(height_) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << out_.str() << "</svg>\n";
    return s.str();
  }

 private:
  double width_;
  double height_;
  std::ostringstream out_;
};

// Data-to-pixel mapping for one plot area, with axes and ticks.
struct Frame {
  double x0, x1, y0, y1;
  double left = 70, top = 40, width = 520, height = 300;

  double px(double x) const { return left + (x1 == x0 ? 0.5 : (x - x0) / (x1 - x0)) * width; }
  double py(double y) const { return top + height - (y1 == y0 ? 0.5 : (y - y0) / (y1 - y0)) * height; }

  void axes(Svg& svg, const std::string& title, const std::string& xlabel, const std::string& ylabel) const {
    svg.text(left + width / 2, 22, title, 14);
    svg.line(left, top + height, left + width, top + height, "black");
    svg.line(left, top, left, top + height, "black");
    for (int i = 0; i <= 4; ++i) {
      const double xv = x0 + (x1 - x0) * i / 4.0;
      const double yv = y0 + (y1 - y0) * i / 4.0;
      svg.line(px(xv), top + height, px(xv), top + height + 4, "black");
      svg.text(px(xv), top + height + 16, tick(xv), 10);
      svg.line(left - 4, py(yv), left, py(yv), "black");
      svg.text(left - 7, py(yv) + 3, tick(yv), 10, "end");
    }
    svg.text(left + width / 2, top + height + 34, xlabel, 12);
    svg.text(18, top + height / 2, ylabel, 12, "middle",
             " transform=\"rotate(-90 18 " + num(top + height / 2) + ")\"");
  }
};

struct RunInfo {
  std::string run_id;
  std::string group;  // "<trainer> b<budget>"
  fs::path dir;
};

void emit(PlotReport& report, const fs::path& path, const std::string& text) {
  write_text(path, text);
  report.files.push_back(path);
}

void emit(PlotReport& report, const fs::path& path, const Table& table) {
  write_table(path, table);
  report.files.push_back(path);
}

void plot_curves(const std::vector<RunInfo>& runs, const fs::path& out, PlotReport& report) {
  for (const std::string metric : {"fde", "mr"}) {
    // group -> task index -> per-seed values
    std::map<std::string, std::map<std::size_t, std::vector<double>>> data;
    std::vector<std::string> order;
    for (const RunInfo& run : runs) {
      const Table t = read_table(run.dir / kMetricsFile);
      const std::size_t ti = t.column("task_index");
      const std::size_t vi = t.column(metric + "_ave");
      if (!data.count(run.group)) order.push_back(run.group);
      for (const auto& row : t.rows) data[run.group][std::stoul(row[ti])].push_back(parse_number(row[vi]));
    }
    Table csv;
    csv.header = {"group", "task_index", "mean", "std", "runs"};
    double lo = INFINITY, hi = -INFINITY;
    std::size_t tasks = 1;
    std::map<std::string, std::vector<std::array<double, 3>>> curves;  // task, mean, std
    for (const std::string& g : order) {
      for (const auto& [task, values] : data[g]) {
        double m = 0.0;
        for (double v : values) m += v;
        m /= static_cast<double>(values.size());
        double s = 0.0;
        for (double v : values) s += (v - m) * (v - m);
        s = values.size() > 1 ? std::sqrt(s / static_cast<double>(values.size() - 1)) : 0.0;
        curves[g].push_back({static_cast<double>(task), m, s});
        csv.rows.push_back({g, std::to_string(task), format_number(m), format_number(s), std::to_string(values.size())});
        lo = std::min(lo, m - s);
        hi = std::max(hi, m + s);
        tasks = std::max(tasks, task + 1);
      }
    }
    if (!(hi > lo)) hi = lo + 1.0;
    Frame f{0.0, static_cast<double>(tasks - 1), std::min(0.0, lo), hi + 0.05 * (hi - lo)};
    Svg svg(760, 400);
    f.axes(svg, metric == "fde" ? "FDE-AVE after each task" : "MR-AVE after each task", "task", metric + "_ave");
    for (std::size_t gi = 0; gi < order.size(); ++gi) {
      const auto& c = curves[order[gi]];
      std::vector<std::pair<double, double>> band, mean;
      for (const auto& p : c) band.emplace_back(f.px(p[0]), f.py(p[1] + p[2]));
      for (auto it = c.rbegin(); it != c.rend(); ++it) band.emplace_back(f.px((*it)[0]), f.py((*it)[1] - (*it)[2]));
      for (const auto& p : c) mean.emplace_back(f.px(p[0]), f.py(p[1]));
      svg.polygon(band, color(gi), 0.2);
      svg.polyline(mean, color(gi));
      svg.rect(610, 50 + 18.0 * gi, 12, 12, color(gi));
      svg.text(628, 60 + 18.0 * gi, order[gi], 11, "start");
    }
    emit(report, out / ("curves_" + metric + ".csv"), csv);
    emit(report, out / ("curves_" + metric + ".svg"), svg.str());
  }
}

void plot_matrix(const RunInfo& run, const fs::path& out, PlotReport& report) {
  for (const auto& [metric, file] : {std::pair<std::string, const char*>{"fde", kFdeMatrixFile}, {"mr", kMrMatrixFile}}) {
    const Table t = read_table(run.dir / file);
    const std::size_t n = t.header.size() - 1;
    double hi = 0.0;
    for (const auto& row : t.rows) {
      for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, parse_number(row[j + 1]));
    }
    const double cell = std::max(36.0, 420.0 / static_cast<double>(std::max<std::size_t>(n, 1)));
    const double left = 90, top = 50;
    Svg svg(left + cell * n + 30, top + cell * n + 50);
    svg.text(left + cell * n / 2, 25, metric == "fde" ? "FDE error matrix " + run.run_id : "MR error matrix " + run.run_id, 13);
    Table csv;
    csv.header = {"after_task", "task", "value", "label"};
    for (const auto& row : t.rows) {
      const std::size_t i = std::stoul(row[0]);
      for (std::size_t j = 0; j < n; ++j) {
        const double v = parse_number(row[j + 1]);
        const double shade = hi > 0.0 ? v / hi : 0.0;
        char fill[16];
        const int gb = static_cast<int>(std::lround(255.0 * (1.0 - 0.85 * shade)));
        std::snprintf(fill, sizeof fill, "#ff%02x%02x", gb, gb);
        const double x = left + cell * j, y = top + cell * i;
        svg.rect(x, y, cell, cell, fill, 1.0, "#999999");
        const std::string label = matrix_label(v);
        svg.text(x + cell / 2, y + cell / 2 + 4, label, std::min(11.0, cell / 4));
        csv.rows.push_back({std::to_string(i), std::to_string(j), row[j + 1], label});
      }
      svg.text(left - 8, top + cell * i + cell / 2 + 4, "after " + std::to_string(i), 10, "end");
    }
    for (std::size_t j = 0; j < n; ++j) svg.text(left + cell * j + cell / 2, top + cell * n + 16, "task " + std::to_string(j), 10);
    emit(report, out / ("matrix_" + run.run_id + "_" + metric + ".csv"), csv);
    emit(report, out / ("matrix_" + run.run_id + "_" + metric + ".svg"), svg.str());
  }
}

void plot_composition(const RunInfo& run, const fs::path& out, PlotReport& report) {
  const Table t = read_table(run.dir / kCompositionFile);
  const std::size_t si = t.column("step"), bi = t.column("buffer"), ti = t.column("task"), ci = t.column("count");
  for (const std::string buffer : {"reservoir", "diversity"}) {
    std::map<std::uint64_t, std::map<int, std::size_t>> steps;
    std::set<int> tasks;
    for (const auto& row : t.rows) {
      if (row[bi] != buffer) continue;
      const int task = std::stoi(row[ti]);
      steps[std::stoull(row[si])][task] = std::stoul(row[ci]);
      tasks.insert(task);
    }
    if (steps.empty()) continue;
    Table csv;
    csv.header = {"step", "task", "count", "lower", "upper"};
    std::size_t most = 1;
    for (const auto& [step, counts] : steps) {
      std::size_t acc = 0;
      for (int task : tasks) {
        const auto it = counts.find(task);
        const std::size_t c = it == counts.end() ? 0 : it->second;
        csv.rows.push_back({std::to_string(step), std::to_string(task), std::to_string(c), std::to_string(acc),
                            std::to_string(acc + c)});
        acc += c;
      }
      most = std::max(most, acc);
    }
    Frame f{static_cast<double>(steps.begin()->first), static_cast<double>(steps.rbegin()->first), 0.0,
            static_cast<double>(most)};
    Svg svg(760, 400);
    f.axes(svg, buffer + " buffer composition " + run.run_id, "step", "stored samples");
    std::size_t k = 0;
    for (int task : tasks) {
      std::vector<std::pair<double, double>> upper, lower;
      for (const auto& [step, counts] : steps) {
        std::size_t below = 0;
        for (int other : tasks) {
          if (other == task) break;
          const auto it = counts.find(other);
          below += it == counts.end() ? 0 : it->second;
        }
        const auto it = counts.find(task);
        const std::size_t c = it == counts.end() ? 0 : it->second;
        upper.emplace_back(f.px(static_cast<double>(step)), f.py(static_cast<double>(below + c)));
        lower.emplace_back(f.px(static_cast<double>(step)), f.py(static_cast<double>(below)));
      }
      std::vector<std::pair<double, double>> poly(upper);
      poly.insert(poly.end(), lower.rbegin(), lower.rend());
      svg.polygon(poly, color(k), 0.75);
      svg.rect(610, 50 + 18.0 * k, 12, 12, color(k));
      svg.text(628, 60 + 18.0 * k, "task " + std::to_string(task), 11, "start");
      ++k;
    }
    emit(report, out / ("composition_" + run.run_id + "_" + buffer + ".csv"), csv);
    emit(report, out / ("composition_" + run.run_id + "_" + buffer + ".svg"), svg.str());
  }
}

void plot_loss(const RunInfo& run, const fs::path& out, PlotReport& report) {
  const Table t = read_table(run.dir / kTraceFile);
  const std::size_t si = t.column("step"), ti = t.column("task_index"), li = t.column("stream_loss");
  const std::size_t replay[] = {t.column("reservoir_kl"), t.column("reservoir_focal"), t.column("diversity_kl"),
                                t.column("diversity_focal")};
  Table csv;
  csv.header = {"step", "task_index", "stream_loss", "replay_loss", "total_loss"};
  std::vector<std::array<double, 4>> points;  // step, task, stream, total
  double hi = 0.0;
  for (const auto& row : t.rows) {
    const double stream = parse_number(row[li]);
    double rep = 0.0;
    for (std::size_t c : replay) rep += parse_number(row[c]);
    points.push_back({static_cast<double>(std::stoull(row[si])), static_cast<double>(std::stoul(row[ti])), stream,
                      stream + rep});
    hi = std::max(hi, stream + rep);
    csv.rows.push_back({row[si], row[ti], row[li], format_number(rep), format_number(stream + rep)});
  }
  if (points.empty()) return;
  Frame f{points.front()[0], points.back()[0], 0.0, hi > 0.0 ? hi * 1.05 : 1.0};
  Svg svg(760, 400);
  std::size_t start = 0;
  for (std::size_t i = 1; i <= points.size(); ++i) {
    if (i == points.size() || points[i][1] != points[start][1]) {
      const double x0 = f.px(points[start][0]), x1 = f.px(points[i - 1][0]);
      svg.rect(x0, f.top, std::max(x1 - x0, 1.0), f.height, static_cast<int>(points[start][1]) % 2 ? "#dddddd" : "#f3f3f3");
      svg.text((x0 + x1) / 2, f.top + 12, "task " + std::to_string(static_cast<int>(points[start][1])), 9);
      start = i;
    }
  }
  f.axes(svg, "training loss " + run.run_id, "step", "loss");
  std::vector<std::pair<double, double>> total, stream;
  for (const auto& p : points) {
    total.emplace_back(f.px(p[0]), f.py(p[3]));
    stream.emplace_back(f.px(p[0]), f.py(p[2]));
  }
  svg.polyline(total, color(0), 1.0);
  svg.polyline(stream, color(1), 1.0);
  svg.rect(610, 50, 12, 12, color(0));
  svg.text(628, 60, "total", 11, "start");
  svg.rect(610, 68, 12, 12, color(1));
  svg.text(628, 78, "stream batch", 11, "start");
  emit(report, out / ("loss_" + run.run_id + ".csv"), csv);
  emit(report, out / ("loss_" + run.run_id + ".svg"), svg.str());
}

}  // namespace

std::string matrix_label(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", value);
  return buf;
}

PlotReport emit_plots(const fs::path& records_dir, const std::vector<std::string>& kinds) {
  PlotReport report;
  const fs::path records_path = records_dir / kRecordsFile;
  std::ifstream in(records_path);
  if (!in) throw InputError("no " + std::string(kRecordsFile) + " in " + records_dir.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(records_path.string() + ": " + e.what());
  }

  std::vector<std::string> wanted;
  for (const std::string& k : kinds.empty() ? kPlotKinds : kinds) {
    if (std::find(kPlotKinds.begin(), kPlotKinds.end(), k) == kPlotKinds.end()) {
      report.warnings.push_back("unknown plot kind '" + k + "' skipped");
    } else if (std::find(wanted.begin(), wanted.end(), k) == wanted.end()) {
      wanted.push_back(k);
    }
  }

  std::vector<RunInfo> runs;
  for (const auto& r : doc.value("runs", nlohmann::json::array())) {
    if (!r.value("ok", false)) continue;
    const std::string id = r.at("run_id").get<std::string>();
    runs.push_back({id, r.at("trainer").get<std::string>() + " b" + std::to_string(r.at("buffer_budget").get<std::size_t>()),
                    records_dir / "runs" / id});
  }
  if (runs.empty()) {
    report.warnings.push_back("no successful runs in " + records_path.string() + "; nothing to plot");
    return report;
  }
  if (wanted.empty()) return report;

  const fs::path out = records_dir / "plots";
  fs::create_directories(out);
  for (const std::string& kind : wanted) {
    if (kind == "curves") plot_curves(runs, out, report);
    for (const RunInfo& run : runs) {
      if (kind == "matrix") plot_matrix(run, out, report);
      if (kind == "composition") plot_composition(run, out, report);
      if (kind == "loss") plot_loss(run, out, report);
    }
  }
  return report;
}

}  // namespace dualls
