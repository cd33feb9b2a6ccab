#include "dualls/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <nlohmann/json.hpp>
#include <thread>

#include "dualls/checkpoint.hpp"
#include "dualls/errors.hpp"
#include "dualls/runner.hpp"
#include "dualls/table.hpp"

namespace dualls {

namespace {

using nlohmann::json;

std::string bool_text(bool b) { return b ? "1" : "0"; }

// One row per completed task c: the just-learned task's error and the
// aggregates after training through c. BWT is blank for the first task.
Table metrics_table(const RunRecord& r) {
  Table t;
  t.header = {"run_id", "seed",    "trainer", "buffer_budget", "task_index", "fde",
              "mr",     "fde_bwt", "mr_bwt",  "fde_ave",       "mr_ave"};
  for (std::size_t c = 0; c < r.fde.tasks(); ++c) {
    if (!r.fde.row_filled(c)) break;
    t.rows.push_back({r.run_id, std::to_string(r.seed), std::string(to_string(r.trainer)), std::to_string(r.budget),
                      std::to_string(c), format_number(r.fde(c, c)), format_number(r.mr(c, c)),
                      c == 0 ? "" : format_number(bwt(r.fde, c)), c == 0 ? "" : format_number(bwt(r.mr, c)),
                      format_number(averages(r.fde, c)), format_number(averages(r.mr, c))});
  }
  return t;
}

Table matrix_table(const ErrorMatrix& m) {
  Table t;
  t.header.push_back("after_task");
  for (std::size_t j = 0; j < m.tasks(); ++j) t.header.push_back("task_" + std::to_string(j));
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    if (!m.row_filled(i)) continue;
    std::vector<std::string> row{std::to_string(i)};
    for (std::size_t j = 0; j < m.tasks(); ++j) row.push_back(format_number(m(i, j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table trace_table(const std::vector<TraceRow>& trace) {
  Table t;
  t.header = {"step",           "task_index",     "task_end",        "stream_loss",     "reservoir_kl",
              "reservoir_focal", "diversity_kl",  "diversity_focal", "reservoir_draws", "diversity_draws",
              "fast_update",    "slow_update",    "projected"};
  for (const TraceRow& row : trace) {
    const StepRecord& s = row.step;
    t.rows.push_back({std::to_string(s.step), std::to_string(row.task_index), bool_text(row.task_end),
                      format_number(s.stream_loss), format_number(s.reservoir_kl), format_number(s.reservoir_focal),
                      format_number(s.diversity_kl), format_number(s.diversity_focal),
                      std::to_string(s.reservoir_draws), std::to_string(s.diversity_draws),
                      bool_text(s.fast_update), bool_text(s.slow_update), bool_text(s.projected)});
  }
  return t;
}

Table composition_table(const std::vector<TraceRow>& trace) {
  Table t;
  t.header = {"step", "buffer", "task", "count"};
  for (const TraceRow& row : trace) {
    if (!row.has_composition) continue;
    const std::string step = std::to_string(row.step.step);
    for (const auto& [task, count] : row.reservoir) {
      t.rows.push_back({step, "reservoir", std::to_string(task), std::to_string(count)});
    }
    for (const auto& [task, count] : row.diversity) {
      t.rows.push_back({step, "diversity", std::to_string(task), std::to_string(count)});
    }
  }
  return t;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

json record_json(const RunRecord& r, const std::filesystem::path& root) {
  json j{{"run_id", r.run_id},
         {"config_hash", r.config_hash},
         {"trainer", std::string(to_string(r.trainer))},
         {"buffer_budget", r.budget},
         {"seed", r.seed},
         {"ok", r.ok},
         {"wall_seconds", r.wall_seconds},
         {"steps", r.steps},
         {"processed", r.processed}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["fde_bwt"] = r.fde_bwt;
  j["mr_bwt"] = r.mr_bwt;
  j["fde_ave"] = r.fde_ave;
  j["mr_ave"] = r.mr_ave;
  const std::filesystem::path dir = r.run_dir.lexically_relative(root);
  j["files"] = {{"metrics", (dir / kMetricsFile).generic_string()},
                {"trace", (dir / kTraceFile).generic_string()},
                {"composition", (dir / kCompositionFile).generic_string()},
                {"fde_matrix", (dir / kFdeMatrixFile).generic_string()},
                {"mr_matrix", (dir / kMrMatrixFile).generic_string()}};
  if (std::filesystem::exists(r.run_dir / kCheckpointFile)) {
    j["files"]["checkpoint"] = (dir / kCheckpointFile).generic_string();
  }
  return j;
}

}  // namespace

std::string make_run_id(TrainerKind trainer, std::size_t budget, std::uint64_t seed) {
  return std::string(to_string(trainer)) + "-b" + std::to_string(budget) + "-s" + std::to_string(seed);
}

std::vector<RunSpec> plan_runs(const ExperimentConfig& config) {
  std::vector<RunSpec> runs;
  for (TrainerKind k : config.trainers) {
    for (std::size_t b : config.budgets) {
      for (std::uint64_t s : config.seeds) {
        runs.push_back({runs.size(), k, b, s, make_run_id(k, b, s)});
      }
    }
  }
  return runs;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const ExperimentOptions& options) {
  std::filesystem::path root = config.output_dir;
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') root = env;
  if (options.output_root) root = *options.output_root;
  return root / config.name;
}

RunRecord execute_run(const ExperimentConfig& config, const RunSpec& spec, const std::filesystem::path& run_dir,
                      bool resume) {
  RunRecord rec;
  rec.run_id = spec.run_id;
  rec.config_hash = config_hash(config);
  rec.trainer = spec.trainer;
  rec.budget = spec.budget;
  rec.seed = spec.seed;
  rec.run_dir = run_dir;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::filesystem::create_directories(run_dir);
    const Predictor model(config.predictor_config());
    TaskStream stream(config.stream, spec.seed);
    const std::filesystem::path ckpt_path = run_dir / kCheckpointFile;

    std::optional<StreamRun> run;
    if (resume && std::filesystem::exists(ckpt_path)) {
      Checkpoint ckpt = load_checkpoint(ckpt_path);
      if (ckpt.run_id != rec.run_id || ckpt.config_hash != rec.config_hash) {
        throw InputError("checkpoint " + ckpt_path.string() + " belongs to a different run or config");
      }
      run.emplace(stream, model, std::move(ckpt.snapshot));
    } else {
      run.emplace(stream, model,
                  seeded_learner(spec.trainer, model, config.hyper, config.budget(spec.budget), spec.seed),
                  config.eval, config.composition_every);
    }

    const std::size_t chunk = config.checkpoint_every > 0 ? config.checkpoint_every : SIZE_MAX;
    while (!run->done()) {
      run->advance(chunk);
      if (config.checkpoint_every > 0 && !run->done()) {
        save_checkpoint({rec.run_id, rec.config_hash, run->snapshot()}, ckpt_path);
      }
    }
    if (config.final_checkpoint) save_checkpoint({rec.run_id, rec.config_hash, run->snapshot()}, ckpt_path);

    const StreamResult result = run->result();
    const std::size_t last = result.fde.tasks() - 1;
    rec.fde = result.fde;
    rec.mr = result.mr;
    rec.fde_bwt = last > 0 ? bwt(result.fde, last) : 0.0;
    rec.mr_bwt = last > 0 ? bwt(result.mr, last) : 0.0;
    rec.fde_ave = averages(result.fde, last);
    rec.mr_ave = averages(result.mr, last);
    rec.steps = result.steps;
    rec.processed = result.processed;

    write_table(run_dir / kMetricsFile, metrics_table(rec));
    write_table(run_dir / kFdeMatrixFile, matrix_table(rec.fde));
    write_table(run_dir / kMrMatrixFile, matrix_table(rec.mr));
    write_table(run_dir / kTraceFile, trace_table(result.trace));
    write_table(run_dir / kCompositionFile, composition_table(result.trace));
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> out;
  for (const RunRecord& r : records) {
    if (!r.ok) continue;
    bool seen = false;
    for (const SummaryRow& s : out) seen = seen || (s.trainer == r.trainer && s.budget == r.budget);
    if (seen) continue;
    std::vector<double> fb, mb, fa, ma, pr;
    for (const RunRecord& q : records) {
      if (!q.ok || q.trainer != r.trainer || q.budget != r.budget) continue;
      fb.push_back(q.fde_bwt);
      mb.push_back(q.mr_bwt);
      fa.push_back(q.fde_ave);
      ma.push_back(q.mr_ave);
      pr.push_back(static_cast<double>(q.processed));
    }
    SummaryRow row;
    row.trainer = r.trainer;
    row.budget = r.budget;
    row.runs = fb.size();
    row.fde_bwt_mean = mean_of(fb);
    row.fde_bwt_std = std_of(fb);
    row.mr_bwt_mean = mean_of(mb);
    row.mr_bwt_std = std_of(mb);
    row.fde_ave_mean = mean_of(fa);
    row.fde_ave_std = std_of(fa);
    row.mr_ave_mean = mean_of(ma);
    row.mr_ave_std = std_of(ma);
    row.processed_mean = mean_of(pr);
    out.push_back(row);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options) {
  config.validate();
  ExperimentResult result;
  result.output_dir = resolve_output_dir(config, options);
  std::filesystem::create_directories(result.output_dir / "runs");

  const std::vector<RunSpec> runs = plan_runs(config);
  result.records.resize(runs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers.value_or(config.workers), runs.size()));

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&]() {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      const RunSpec& spec = runs[i];
      RunRecord rec = execute_run(config, spec, result.output_dir / "runs" / spec.run_id, options.resume);
      if (options.log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        options.log(rec.ok ? spec.run_id + ": FDE-BWT " + format_number(rec.fde_bwt) + ", FDE-AVE " +
                                 format_number(rec.fde_ave) + " (" + std::to_string(rec.steps) + " steps)"
                           : spec.run_id + ": FAILED: " + rec.error);
      }
      result.records[i] = std::move(rec);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (const RunRecord& r : result.records) result.failed += r.ok ? 0 : 1;

  Table summary;
  summary.header = {"trainer",      "buffer_budget", "runs",        "fde_bwt_mean", "fde_bwt_std", "mr_bwt_mean",
                    "mr_bwt_std",   "fde_ave_mean",  "fde_ave_std", "mr_ave_mean",  "mr_ave_std",  "processed_mean"};
  for (const SummaryRow& s : summarize(result.records)) {
    summary.rows.push_back({std::string(to_string(s.trainer)), std::to_string(s.budget), std::to_string(s.runs),
                            format_number(s.fde_bwt_mean), format_number(s.fde_bwt_std), format_number(s.mr_bwt_mean),
                            format_number(s.mr_bwt_std), format_number(s.fde_ave_mean), format_number(s.fde_ave_std),
                            format_number(s.mr_ave_mean), format_number(s.mr_ave_std),
                            format_number(s.processed_mean)});
  }
  write_table(result.output_dir / kSummaryFile, summary);

  json records = json::array();
  for (const RunRecord& r : result.records) records.push_back(record_json(r, result.output_dir));
  const json doc{{"name", config.name},
                 {"config_hash", config_hash(config)},
                 {"tasks", config.stream.tasks.size()},
                 {"runs", records}};
  write_text(result.output_dir / kRecordsFile, doc.dump(2) + "\n");
  write_text(result.output_dir / kConfigFile, config_json(config) + "\n");
  return result;
}

}  // namespace dualls
