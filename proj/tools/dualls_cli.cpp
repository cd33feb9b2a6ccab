// dualls: run continual-learning experiments, plot them and inspect checkpoints.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dualls/audit.hpp"
#include "dualls/buffers.hpp"
#include "dualls/checkpoint.hpp"
#include "dualls/config.hpp"
#include "dualls/errors.hpp"
#include "dualls/experiment.hpp"
#include "dualls/plots.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

nlohmann::json buffer_json(const std::vector<dualls::BufferEntry>& entries, std::size_t capacity, std::uint64_t seen,
                           bool with_scores, bool list_entries) {
  nlohmann::json j{{"capacity", capacity}, {"size", entries.size()}, {"seen", seen}};
  nlohmann::json comp = nlohmann::json::object();
  for (const auto& [task, count] : dualls::composition(entries)) comp[std::to_string(task)] = count;
  j["composition"] = comp;
  if (with_scores && !entries.empty()) {
    double lo = entries.front().score_q, hi = lo, sum = 0.0;
    for (const auto& e : entries) {
      lo = std::min(lo, e.score_q);
      hi = std::max(hi, e.score_q);
      sum += e.score_q;
    }
    j["score_q"] = {{"min", lo}, {"mean", sum / static_cast<double>(entries.size())}, {"max", hi}};
  }
  if (list_entries) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : entries) {
      nlohmann::json item{{"insertion_index", e.insertion_index},
                          {"task", dualls::audit::task_id(e.sample)},
                          {"speed", e.sample.speed},
                          {"goal", {e.sample.goal.x, e.sample.goal.y}}};
      if (with_scores) item["score_q"] = e.score_q;
      list.push_back(item);
    }
    j["entries"] = list;
  }
  return j;
}

void print_buffer(const std::string& name, const nlohmann::json& b) {
  std::printf("%s buffer: %zu / %zu stored, %llu offered\n", name.c_str(), b["size"].get<std::size_t>(),
              b["capacity"].get<std::size_t>(), static_cast<unsigned long long>(b["seen"].get<std::uint64_t>()));
  for (const auto& [task, count] : b["composition"].items()) {
    std::printf("  task %s: %zu\n", task.c_str(), count.get<std::size_t>());
  }
  if (b.contains("score_q")) {
    std::printf("  q min %.4f  mean %.4f  max %.4f\n", b["score_q"]["min"].get<double>(),
                b["score_q"]["mean"].get<double>(), b["score_q"]["max"].get<double>());
  }
  if (b.contains("entries")) {
    for (const auto& e : b["entries"]) {
      std::printf("  #%llu task %d speed %.3f", static_cast<unsigned long long>(e["insertion_index"].get<std::uint64_t>()),
                  e["task"].get<int>(), e["speed"].get<double>());
      if (e.contains("score_q")) std::printf(" q %.4f", e["score_q"].get<double>());
      std::printf("\n");
    }
  }
}

int cmd_run(const std::string& path, const std::string& output, std::size_t workers, bool resume, bool quiet) {
  const dualls::ExperimentConfig config = dualls::load_config(path);
  dualls::ExperimentOptions options;
  if (!output.empty()) options.output_root = output;
  if (workers > 0) options.workers = workers;
  options.resume = resume;
  if (!quiet) options.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
  const dualls::ExperimentResult result = dualls::run_experiment(config, options);
  std::printf("wrote %zu runs to %s\n", result.records.size(), result.output_dir.string().c_str());
  if (result.failed > 0) {
    std::fprintf(stderr, "%zu of %zu runs failed\n", result.failed, result.records.size());
    return kRuntimeFailure;
  }
  return kOk;
}

int cmd_plot(const std::string& dir, const std::vector<std::string>& kinds) {
  const dualls::PlotReport report = dualls::emit_plots(dir, kinds);
  for (const std::string& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("wrote %zu plot files\n", report.files.size());
  return kOk;
}

int cmd_inspect(const std::string& path, bool as_json, bool list_entries) {
  const dualls::Checkpoint ckpt = dualls::load_checkpoint(path);
  const dualls::LearnerState& L = ckpt.snapshot.learner;
  nlohmann::json j{{"run_id", ckpt.run_id},
                   {"config_hash", ckpt.config_hash},
                   {"trainer", std::string(dualls::to_string(L.kind))},
                   {"steps", L.step_count},
                   {"stream_seen", L.stream_seen},
                   {"processed", L.processed},
                   {"position", {{"task", ckpt.snapshot.position.task}, {"offset", ckpt.snapshot.position.offset}}},
                   {"reservoir", buffer_json(L.reservoir.entries(), L.reservoir.capacity(), L.reservoir.seen_count(),
                                             false, list_entries)},
                   {"diversity", buffer_json(L.diversity.entries(), L.diversity.capacity(), L.diversity.seen_count(),
                                             true, list_entries)}};
  if (as_json) {
    std::printf("%s\n", j.dump(2).c_str());
    return kOk;
  }
  std::printf("run %s (config %s), trainer %s\n", ckpt.run_id.c_str(), ckpt.config_hash.c_str(),
              j["trainer"].get<std::string>().c_str());
  std::printf("steps %llu, stream samples %llu, processed %llu, next task %zu offset %zu\n",
              static_cast<unsigned long long>(L.step_count), static_cast<unsigned long long>(L.stream_seen),
              static_cast<unsigned long long>(L.processed), ckpt.snapshot.position.task,
              ckpt.snapshot.position.offset);
  print_buffer("reservoir", j["reservoir"]);
  print_buffer("diversity", j["diversity"]);
  return kOk;
}

int cmd_validate(const std::string& path) {
  const dualls::ExperimentConfig config = dualls::load_config(path);
  const std::size_t runs = dualls::plan_runs(config).size();
  std::printf("%s: ok (%zu runs, %zu tasks, config hash %s)\n", path.c_str(), runs, config.stream.tasks.size(),
              dualls::config_hash(config).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-LS continual learning experiments"};
  app.require_subcommand(1);

  std::string config_path, output, records_dir, checkpoint_path;
  std::size_t workers = 0;
  bool resume = false, quiet = false, as_json = false, list_entries = false;
  std::vector<std::string> kinds;

  CLI::App* run = app.add_subcommand("run", "Run every (trainer, budget, seed) in a config");
  run->add_option("config", config_path, "YAML experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output, "Output root (overrides the config and $DUALLS_OUTPUT_ROOT)");
  run->add_option("-j,--workers", workers, "Parallel runs (overrides the config)");
  run->add_flag("--resume", resume, "Continue runs from their checkpoints");
  run->add_flag("-q,--quiet", quiet, "No per-run progress lines");

  CLI::App* plot = app.add_subcommand("plot", "Write SVG plots and plot-data CSVs for a results directory");
  plot->add_option("records-dir", records_dir, "Directory containing records.json")->required();
  plot->add_option("-k,--kinds", kinds, "Plot kinds: curves, matrix, composition, loss (default all)");

  CLI::App* inspect = app.add_subcommand("inspect-buffer", "Summarize the replay buffers stored in a checkpoint");
  inspect->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required();
  inspect->add_flag("--json", as_json, "Print JSON");
  inspect->add_flag("--entries", list_entries, "List every stored entry");

  CLI::App* validate = app.add_subcommand("validate-config", "Check a config without running it");
  validate->add_option("config", config_path, "YAML experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, output, workers, resume, quiet);
    if (plot->parsed()) return cmd_plot(records_dir, kinds);
    if (inspect->parsed()) return cmd_inspect(checkpoint_path, as_json, list_entries);
    if (validate->parsed()) return cmd_validate(config_path);
  } catch (const dualls::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
