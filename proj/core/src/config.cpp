#include "dualls/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <type_traits>

#include "dualls/errors.hpp"

namespace dualls {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void require_map(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected a mapping");
}

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed) {
  require_map(node, path);
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!known.count(key)) throw ConfigError(join(path, key) + ": unknown key");
  }
}

template <typename T>
T convert(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError(path + ": expected a scalar");
  const std::string& text = node.Scalar();
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (text.empty() || text.front() == '-') throw ConfigError(path + ": expected a non-negative integer");
      return static_cast<T>(node.as<unsigned long long>());
    } else {
      return node.as<T>();
    }
  } catch (const YAML::Exception&) {
    throw ConfigError(path + ": cannot parse '" + text + "'");
  }
}

template <typename T>
void read(const YAML::Node& parent, const char* key, const std::string& path, T& out) {
  const YAML::Node node = parent[key];
  if (!node) return;
  out = convert<T>(node, join(path, key));
}

template <typename T>
void read_list(const YAML::Node& parent, const char* key, const std::string& path, std::vector<T>& out) {
  const YAML::Node node = parent[key];
  if (!node) return;
  const std::string where = join(path, key);
  if (!node.IsSequence()) throw ConfigError(where + ": expected a list");
  out.clear();
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(convert<T>(node[i], where + "[" + std::to_string(i) + "]"));
}

TrainerKind parse_kind(const std::string& name, const std::string& path) {
  try {
    return parse_trainer_kind(name);
  } catch (const std::exception&) {
    throw ConfigError(path + ": unknown trainer '" + name + "' (expected dualls, vanilla, der, gss or agem)");
  }
}

void read_hyper(const YAML::Node& node, HyperParams& h) {
  const std::string p = "hyper";
  check_keys(node, p,
             {"lr", "decay_fast", "decay_slow", "p_fast", "p_slow", "alpha_r", "beta_r", "alpha_d", "beta_d",
              "stream_batch", "replay_r", "replay_d", "score_batch"});
  read(node, "lr", p, h.lr);
  read(node, "decay_fast", p, h.decay_fast);
  read(node, "decay_slow", p, h.decay_slow);
  read(node, "p_fast", p, h.p_fast);
  read(node, "p_slow", p, h.p_slow);
  read(node, "alpha_r", p, h.alpha_r);
  read(node, "beta_r", p, h.beta_r);
  read(node, "alpha_d", p, h.alpha_d);
  read(node, "beta_d", p, h.beta_d);
  read(node, "stream_batch", p, h.stream_batch);
  read(node, "replay_r", p, h.replay_r);
  read(node, "replay_d", p, h.replay_d);
  read(node, "score_batch", p, h.score_batch);
}

void read_scene(const YAML::Node& node, SceneConfig& s) {
  const std::string p = "scene";
  check_keys(node, p,
             {"agents", "agent_features", "static_features", "grid", "horizon_s", "history_s", "feature_scale",
              "csv_stride"});
  read(node, "agents", p, s.layout.agents);
  read(node, "agent_features", p, s.layout.agent_features);
  read(node, "static_features", p, s.layout.static_features);
  read(node, "horizon_s", p, s.horizon_s);
  read(node, "history_s", p, s.history_s);
  read(node, "feature_scale", p, s.feature_scale);
  read(node, "csv_stride", p, s.csv_stride);
  if (const YAML::Node g = node["grid"]) {
    const std::string gp = "scene.grid";
    check_keys(g, gp, {"rows", "cols", "origin", "cell_size"});
    read(g, "rows", gp, s.grid.rows);
    read(g, "cols", gp, s.grid.cols);
    read(g, "cell_size", gp, s.grid.cell_size);
    std::vector<double> origin;
    read_list(g, "origin", gp, origin);
    if (g["origin"]) {
      if (origin.size() != 2) throw ConfigError(gp + ".origin: expected [x, y]");
      s.grid.origin = {origin[0], origin[1]};
    }
  }
}

TaskSpec read_task(const YAML::Node& node, const std::string& p, const TaskSpec& defaults,
                   const std::filesystem::path& base_dir) {
  check_keys(node, p,
             {"id", "source", "path", "n_train", "n_test", "rotation_deg", "speed_min", "speed_max", "agents_min",
              "agents_max", "noise_scale", "heading_spread_deg"});
  TaskSpec t = defaults;
  std::string source = "synthetic";
  read(node, "id", p, t.task_id);
  read(node, "source", p, source);
  if (source == "synthetic") {
    t.source = TaskSource::Synthetic;
  } else if (source == "csv") {
    t.source = TaskSource::Csv;
    read(node, "path", p, t.csv_path);
    if (t.csv_path.empty()) throw ConfigError(p + ".path: CSV tasks need a path");
    const std::filesystem::path csv(t.csv_path);
    if (csv.is_relative() && !base_dir.empty()) t.csv_path = (base_dir / csv).lexically_normal().string();
  } else {
    throw ConfigError(p + ".source: expected synthetic or csv, got '" + source + "'");
  }
  read(node, "n_train", p, t.n_train);
  read(node, "n_test", p, t.n_test);
  read(node, "rotation_deg", p, t.rotation_deg);
  read(node, "speed_min", p, t.speed_min);
  read(node, "speed_max", p, t.speed_max);
  read(node, "agents_min", p, t.agents_min);
  read(node, "agents_max", p, t.agents_max);
  read(node, "noise_scale", p, t.noise_scale);
  read(node, "heading_spread_deg", p, t.heading_spread_deg);
  return t;
}

void read_stream(const YAML::Node& node, StreamSpec& s, const std::filesystem::path& base_dir) {
  const std::string p = "stream";
  check_keys(node, p, {"preset", "n_train", "n_test", "tasks"});
  std::string preset = node["tasks"] ? "none" : "benchmark";
  read(node, "preset", p, preset);
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  read(node, "n_train", p, n_train);
  read(node, "n_test", p, n_test);
  if (preset == "benchmark") {
    if (node["tasks"]) throw ConfigError("stream: give either preset: benchmark or a task list, not both");
    s.tasks = default_benchmark_tasks(n_train, n_test);
    return;
  }
  if (preset != "none") throw ConfigError("stream.preset: expected benchmark or none, got '" + preset + "'");
  const YAML::Node tasks = node["tasks"];
  if (!tasks || !tasks.IsSequence()) throw ConfigError("stream.tasks: expected a list of tasks");
  TaskSpec defaults;
  defaults.n_train = n_train;
  defaults.n_test = n_test;
  s.tasks.clear();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    defaults.task_id = static_cast<int>(i) + 1;
    s.tasks.push_back(read_task(tasks[i], "stream.tasks[" + std::to_string(i) + "]", defaults, base_dir));
  }
}

json task_json(const TaskSpec& t) {
  json j{{"id", t.task_id},
         {"source", t.source == TaskSource::Csv ? "csv" : "synthetic"},
         {"n_train", t.n_train},
         {"n_test", t.n_test}};
  if (t.source == TaskSource::Csv) {
    j["path"] = t.csv_path;
  } else {
    j["rotation_deg"] = t.rotation_deg;
    j["speed_min"] = t.speed_min;
    j["speed_max"] = t.speed_max;
    j["agents_min"] = t.agents_min;
    j["agents_max"] = t.agents_max;
    j["noise_scale"] = t.noise_scale;
    j["heading_spread_deg"] = t.heading_spread_deg;
  }
  return j;
}

json result_json(const ExperimentConfig& c) {
  json trainers = json::array();
  for (TrainerKind k : c.trainers) trainers.push_back(std::string(to_string(k)));
  json tasks = json::array();
  for (const TaskSpec& t : c.stream.tasks) tasks.push_back(task_json(t));
  const HyperParams& h = c.hyper;
  const SceneConfig& s = c.stream.scene;
  return json{
      {"name", c.name},
      {"trainers", trainers},
      {"seeds", c.seeds},
      {"hyper",
       {{"lr", h.lr},
        {"decay_fast", h.decay_fast},
        {"decay_slow", h.decay_slow},
        {"p_fast", h.p_fast},
        {"p_slow", h.p_slow},
        {"alpha_r", h.alpha_r},
        {"beta_r", h.beta_r},
        {"alpha_d", h.alpha_d},
        {"beta_d", h.beta_d},
        {"stream_batch", h.stream_batch},
        {"replay_r", h.replay_r},
        {"replay_d", h.replay_d},
        {"score_batch", h.score_batch}}},
      {"buffer", {{"budgets", c.budgets}, {"reservoir_fraction", c.reservoir_fraction}}},
      {"model",
       {{"hidden", c.model.hidden},
        {"focal_gamma", c.model.focal_gamma},
        {"target_sigma", c.model.target_sigma},
        {"kl_floor", c.model.kl_floor}}},
      {"eval",
       {{"goals_k", c.eval.goals_k},
        {"role", std::string(to_string(c.eval.role))},
        {"sampled_goals", c.eval.sampled_goals},
        {"sample_seed", c.eval.sample_seed}}},
      {"trace", {{"composition_every", c.composition_every}}},
      {"scene",
       {{"agents", s.layout.agents},
        {"agent_features", s.layout.agent_features},
        {"static_features", s.layout.static_features},
        {"grid",
         {{"rows", s.grid.rows},
          {"cols", s.grid.cols},
          {"origin", {s.grid.origin.x, s.grid.origin.y}},
          {"cell_size", s.grid.cell_size}}},
        {"horizon_s", s.horizon_s},
        {"history_s", s.history_s},
        {"feature_scale", s.feature_scale},
        {"csv_stride", s.csv_stride}}},
      {"stream", {{"tasks", tasks}}},
  };
}

}  // namespace

PredictorConfig ExperimentConfig::predictor_config() const {
  PredictorConfig p = model;
  p.layout = stream.scene.layout;
  p.grid = stream.scene.grid;
  return p;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name: must not be empty");
  if (name.find_first_of("/\\") != std::string::npos) throw ConfigError("name: must not contain path separators");
  if (trainers.empty()) throw ConfigError("trainers: at least one trainer is required");
  for (std::size_t i = 0; i < trainers.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (trainers[i] == trainers[j]) throw ConfigError("trainers: '" + std::string(to_string(trainers[i])) + "' listed twice");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: duplicate seed");
  }
  if (budgets.empty()) throw ConfigError("buffer.budgets: at least one budget is required");
  if (std::set<std::size_t>(budgets.begin(), budgets.end()).size() != budgets.size()) {
    throw ConfigError("buffer.budgets: duplicate budget");
  }
  if (!(std::isfinite(reservoir_fraction) && reservoir_fraction >= 0.0 && reservoir_fraction <= 1.0)) {
    throw ConfigError("buffer.reservoir_fraction: must lie in [0, 1]");
  }
  if (workers == 0) throw ConfigError("workers: must be >= 1");
  if (composition_every == 0) throw ConfigError("trace.composition_every: must be >= 1");
  if (eval.goals_k == 0 || eval.goals_k > stream.scene.grid.cells()) {
    throw ConfigError("eval.goals_k: must lie in [1, grid cells]");
  }
  try {
    hyper.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("hyper: ") + e.what());
  }
  if (stream.tasks.empty()) throw ConfigError("stream: no tasks");
  try {
    stream.validate();
    predictor_config().validate();
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }

  // The memory must stay well below the stream length: at most a quarter of
  // the training samples when every task is synthetic (CSV sizes are only
  // known after loading).
  const bool all_synthetic = std::all_of(stream.tasks.begin(), stream.tasks.end(),
                                         [](const TaskSpec& t) { return t.source == TaskSource::Synthetic; });
  std::size_t total_train = 0;
  for (const TaskSpec& t : stream.tasks) total_train += t.n_train;
  for (std::size_t b : budgets) {
    if (b == 0) throw ConfigError("buffer.budgets: budgets must be >= 1");
    if (all_synthetic && 4 * b > total_train) {
      throw ConfigError("buffer.budgets: budget " + std::to_string(b) + " exceeds a quarter of the " +
                        std::to_string(total_train) + " training samples");
    }
    for (TrainerKind k : trainers) {
      const BufferBudget split = budget(b);
      if (k == TrainerKind::DualLS && (split.reservoir_capacity(k) == 0 || split.diversity_capacity(k) == 0)) {
        throw ConfigError("buffer: the Dual-LS split of budget " + std::to_string(b) + " leaves a buffer empty");
      }
    }
  }
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.stream.tasks = default_benchmark_tasks();
  return c;
}

ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML syntax error: ") + e.what());
  }
  if (!root || root.IsNull()) throw ConfigError("config is empty");
  check_keys(root, "",
             {"name", "trainers", "seeds", "output_dir", "workers", "hyper", "buffer", "model", "eval", "trace",
              "checkpoint", "scene", "stream"});

  ExperimentConfig c = default_experiment();
  read(root, "name", "", c.name);
  read(root, "output_dir", "", c.output_dir);
  read(root, "workers", "", c.workers);
  read_list(root, "seeds", "", c.seeds);
  if (root["trainers"]) {
    std::vector<std::string> names;
    read_list(root, "trainers", "", names);
    c.trainers.clear();
    for (std::size_t i = 0; i < names.size(); ++i) c.trainers.push_back(parse_kind(names[i], "trainers[" + std::to_string(i) + "]"));
  }
  if (const YAML::Node n = root["hyper"]) read_hyper(n, c.hyper);
  if (const YAML::Node n = root["buffer"]) {
    check_keys(n, "buffer", {"budgets", "reservoir_fraction"});
    read_list(n, "budgets", "buffer", c.budgets);
    read(n, "reservoir_fraction", "buffer", c.reservoir_fraction);
  }
  if (const YAML::Node n = root["model"]) {
    check_keys(n, "model", {"hidden", "focal_gamma", "target_sigma", "kl_floor"});
    read_list(n, "hidden", "model", c.model.hidden);
    read(n, "focal_gamma", "model", c.model.focal_gamma);
    read(n, "target_sigma", "model", c.model.target_sigma);
    read(n, "kl_floor", "model", c.model.kl_floor);
  }
  if (const YAML::Node n = root["eval"]) {
    check_keys(n, "eval", {"goals_k", "role", "sampled_goals", "sample_seed"});
    read(n, "goals_k", "eval", c.eval.goals_k);
    read(n, "sampled_goals", "eval", c.eval.sampled_goals);
    read(n, "sample_seed", "eval", c.eval.sample_seed);
    std::string role;
    read(n, "role", "eval", role);
    if (!role.empty()) {
      try {
        c.eval.role = parse_model_role(role);
      } catch (const std::exception&) {
        throw ConfigError("eval.role: expected working, fast or slow, got '" + role + "'");
      }
    }
  }
  if (const YAML::Node n = root["trace"]) {
    check_keys(n, "trace", {"composition_every"});
    read(n, "composition_every", "trace", c.composition_every);
  }
  if (const YAML::Node n = root["checkpoint"]) {
    check_keys(n, "checkpoint", {"every", "final"});
    read(n, "every", "checkpoint", c.checkpoint_every);
    read(n, "final", "checkpoint", c.final_checkpoint);
  }
  if (const YAML::Node n = root["scene"]) read_scene(n, c.stream.scene);
  if (const YAML::Node n = root["stream"]) read_stream(n, c.stream, base_dir);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string canonical_json(const ExperimentConfig& config) { return result_json(config).dump(); }

std::string config_json(const ExperimentConfig& config) {
  json j = result_json(config);
  j["output_dir"] = config.output_dir;
  j["workers"] = config.workers;
  j["checkpoint"] = {{"every", config.checkpoint_every}, {"final", config.final_checkpoint}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = canonical_json(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dualls
