#include "dualls/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dualls/audit.hpp"
#include "dualls/errors.hpp"

namespace dualls {

namespace {

using nlohmann::json;

json doubles(std::span<const double> values) { return json(std::vector<double>(values.begin(), values.end())); }

std::vector<double> read_doubles(const json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number()) throw InputError("checkpoint: expected a number");
    out.push_back(v.get<double>());
  }
  return out;
}

json vec2(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 read_vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InputError("checkpoint: expected a 2-vector");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json grid_json(const GridSpec& g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"origin", vec2(g.origin)}, {"cell_size", g.cell_size}};
}
GridSpec read_grid(const json& j) {
  GridSpec g;
  g.rows = j.at("rows").get<std::size_t>();
  g.cols = j.at("cols").get<std::size_t>();
  g.origin = read_vec2(j.at("origin"));
  g.cell_size = j.at("cell_size").get<double>();
  return g;
}

json sample_json(const Sample& s) {
  return {{"dynamic", doubles(s.dynamic_features)},
          {"static", doubles(s.static_features)},
          {"goal", vec2(s.goal)},
          {"speed", s.speed},
          {"heading", vec2(s.heading)},
          {"task", audit::task_id(s)}};
}
Sample read_sample(const json& j) {
  Sample s;
  s.dynamic_features = read_doubles(j.at("dynamic"));
  s.static_features = read_doubles(j.at("static"));
  s.goal = read_vec2(j.at("goal"));
  s.speed = j.at("speed").get<double>();
  s.heading = read_vec2(j.at("heading"));
  s.tag = audit::make_tag(j.at("task").get<int>());
  return s;
}

json entry_json(const BufferEntry& e) {
  return {{"sample", sample_json(e.sample)},
          {"teacher_grid", grid_json(e.teacher.grid())},
          {"teacher", doubles(e.teacher.values())},
          {"q", e.score_q},
          {"index", e.insertion_index}};
}
BufferEntry read_entry(const json& j) {
  BufferEntry e;
  e.sample = read_sample(j.at("sample"));
  e.teacher = Heatmap(read_grid(j.at("teacher_grid")), read_doubles(j.at("teacher")));
  e.score_q = j.at("q").get<double>();
  e.insertion_index = j.at("index").get<std::uint64_t>();
  return e;
}

json entries_json(const std::vector<BufferEntry>& entries) {
  json out = json::array();
  for (const BufferEntry& e : entries) out.push_back(entry_json(e));
  return out;
}
std::vector<BufferEntry> read_entries(const json& j) {
  std::vector<BufferEntry> out;
  for (const json& e : j) out.push_back(read_entry(e));
  return out;
}

json hyper_json(const HyperParams& h) {
  return {{"lr", h.lr},           {"decay_fast", h.decay_fast}, {"decay_slow", h.decay_slow},
          {"p_fast", h.p_fast},   {"p_slow", h.p_slow},         {"alpha_r", h.alpha_r},
          {"beta_r", h.beta_r},   {"alpha_d", h.alpha_d},       {"beta_d", h.beta_d},
          {"stream_batch", h.stream_batch}, {"replay_r", h.replay_r}, {"replay_d", h.replay_d},
          {"score_batch", h.score_batch}};
}
HyperParams read_hyper(const json& j) {
  HyperParams h;
  h.lr = j.at("lr").get<double>();
  h.decay_fast = j.at("decay_fast").get<double>();
  h.decay_slow = j.at("decay_slow").get<double>();
  h.p_fast = j.at("p_fast").get<double>();
  h.p_slow = j.at("p_slow").get<double>();
  h.alpha_r = j.at("alpha_r").get<double>();
  h.beta_r = j.at("beta_r").get<double>();
  h.alpha_d = j.at("alpha_d").get<double>();
  h.beta_d = j.at("beta_d").get<double>();
  h.stream_batch = j.at("stream_batch").get<std::size_t>();
  h.replay_r = j.at("replay_r").get<std::size_t>();
  h.replay_d = j.at("replay_d").get<std::size_t>();
  h.score_batch = j.at("score_batch").get<std::size_t>();
  return h;
}

json learner_json(const LearnerState& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"hyper", hyper_json(s.hyper)},
          {"theta_w", doubles(s.theta_w.values())},
          {"theta_f", doubles(s.theta_f.values())},
          {"theta_s", doubles(s.theta_s.values())},
          {"reservoir",
           {{"capacity", s.reservoir.capacity()},
            {"seen", s.reservoir.seen_count()},
            {"rng", s.reservoir.rng().serialize()},
            {"entries", entries_json(s.reservoir.entries())}}},
          {"diversity",
           {{"capacity", s.diversity.capacity()},
            {"score_batch", s.diversity.score_batch()},
            {"seen", s.diversity.seen_count()},
            {"rng", s.diversity.rng().serialize()},
            {"entries", entries_json(s.diversity.entries())}}},
          {"rng", s.rng.serialize()},
          {"step_count", s.step_count},
          {"stream_seen", s.stream_seen},
          {"processed", s.processed}};
}
LearnerState read_learner(const json& j) {
  LearnerState s;
  s.kind = parse_trainer_kind(j.at("kind").get<std::string>());
  s.hyper = read_hyper(j.at("hyper"));
  s.theta_w = ParamVector(read_doubles(j.at("theta_w")));
  s.theta_f = ParamVector(read_doubles(j.at("theta_f")));
  s.theta_s = ParamVector(read_doubles(j.at("theta_s")));
  const json& r = j.at("reservoir");
  s.reservoir = ReservoirBuffer::restore(r.at("capacity").get<std::size_t>(), r.at("seen").get<std::uint64_t>(),
                                         read_entries(r.at("entries")),
                                         Rng::deserialize(r.at("rng").get<std::string>()));
  const json& d = j.at("diversity");
  s.diversity = DiversityBuffer::restore(d.at("capacity").get<std::size_t>(), d.at("score_batch").get<std::size_t>(),
                                         d.at("seen").get<std::uint64_t>(), read_entries(d.at("entries")),
                                         Rng::deserialize(d.at("rng").get<std::string>()));
  s.rng = Rng::deserialize(j.at("rng").get<std::string>());
  s.step_count = j.at("step_count").get<std::uint64_t>();
  s.stream_seen = j.at("stream_seen").get<std::uint64_t>();
  s.processed = j.at("processed").get<std::uint64_t>();
  if (s.theta_f.size() != s.theta_w.size() || s.theta_s.size() != s.theta_w.size()) {
    throw InputError("checkpoint: parameter vectors differ in length");
  }
  return s;
}

json matrix_json(const ErrorMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.tasks(); ++i) rows.push_back(m.row_filled(i) ? doubles(m.row(i)) : json(nullptr));
  return {{"kind", std::string(to_string(m.kind()))}, {"tasks", m.tasks()}, {"rows", rows}};
}
ErrorMatrix read_matrix(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "fde" && kind != "mr") throw InputError("checkpoint: unknown metric '" + kind + "'");
  ErrorMatrix m(j.at("tasks").get<std::size_t>(), kind == "fde" ? MetricKind::FDE : MetricKind::MR);
  const json& rows = j.at("rows");
  if (rows.size() != m.tasks()) throw InputError("checkpoint: error matrix row count mismatch");
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    if (!rows[i].is_null()) m.set_row(i, read_doubles(rows[i]));
  }
  return m;
}

json composition_json(const Composition& c) {
  json out = json::array();
  for (const auto& [task, count] : c) out.push_back({task, count});
  return out;
}
Composition read_composition(const json& j) {
  Composition c;
  for (const json& kv : j) c[kv.at(0).get<int>()] = kv.at(1).get<std::size_t>();
  return c;
}

json trace_json(const std::vector<TraceRow>& trace) {
  json out = json::array();
  for (const TraceRow& t : trace) {
    const StepRecord& s = t.step;
    json row{{"step", s.step},
             {"loss", {s.stream_loss, s.reservoir_kl, s.reservoir_focal, s.diversity_kl, s.diversity_focal}},
             {"draws", {s.reservoir_draws, s.diversity_draws}},
             {"flags", {s.fast_update, s.slow_update, s.projected}},
             {"task", t.task_index},
             {"task_end", t.task_end}};
    if (t.has_composition) {
      row["reservoir"] = composition_json(t.reservoir);
      row["diversity"] = composition_json(t.diversity);
    }
    out.push_back(std::move(row));
  }
  return out;
}
std::vector<TraceRow> read_trace(const json& j) {
  std::vector<TraceRow> out;
  out.reserve(j.size());
  for (const json& row : j) {
    TraceRow t;
    StepRecord& s = t.step;
    s.step = row.at("step").get<std::uint64_t>();
    const json& loss = row.at("loss");
    s.stream_loss = loss.at(0).get<double>();
    s.reservoir_kl = loss.at(1).get<double>();
    s.reservoir_focal = loss.at(2).get<double>();
    s.diversity_kl = loss.at(3).get<double>();
    s.diversity_focal = loss.at(4).get<double>();
    s.reservoir_draws = row.at("draws").at(0).get<std::size_t>();
    s.diversity_draws = row.at("draws").at(1).get<std::size_t>();
    s.fast_update = row.at("flags").at(0).get<bool>();
    s.slow_update = row.at("flags").at(1).get<bool>();
    s.projected = row.at("flags").at(2).get<bool>();
    t.task_index = row.at("task").get<std::size_t>();
    t.task_end = row.at("task_end").get<bool>();
    if (row.contains("reservoir")) {
      t.has_composition = true;
      t.reservoir = read_composition(row.at("reservoir"));
      t.diversity = read_composition(row.at("diversity"));
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& c) {
  const RunSnapshot& s = c.snapshot;
  json j{{"format", kCheckpointFormat},
         {"version", kCheckpointVersion},
         {"run_id", c.run_id},
         {"config_hash", c.config_hash},
         {"learner", learner_json(s.learner)},
         {"position", {{"task", s.position.task}, {"offset", s.position.offset}}},
         {"fde", matrix_json(s.fde)},
         {"mr", matrix_json(s.mr)},
         {"trace", trace_json(s.trace)},
         {"eval",
          {{"goals_k", s.eval.goals_k},
           {"role", std::string(to_string(s.eval.role))},
           {"sampled_goals", s.eval.sampled_goals},
           {"sample_seed", s.eval.sample_seed}}},
         {"composition_every", s.composition_every}};
  return j.dump();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat) {
      throw InputError("file is not a checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw InputError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.run_id = j.at("run_id").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    RunSnapshot& s = c.snapshot;
    s.learner = read_learner(j.at("learner"));
    s.position.task = j.at("position").at("task").get<std::size_t>();
    s.position.offset = j.at("position").at("offset").get<std::size_t>();
    s.fde = read_matrix(j.at("fde"));
    s.mr = read_matrix(j.at("mr"));
    s.trace = read_trace(j.at("trace"));
    const json& e = j.at("eval");
    s.eval.goals_k = e.at("goals_k").get<std::size_t>();
    s.eval.role = parse_model_role(e.at("role").get<std::string>());
    s.eval.sampled_goals = e.at("sampled_goals").get<bool>();
    s.eval.sample_seed = e.at("sample_seed").get<std::uint64_t>();
    s.composition_every = j.at("composition_every").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint " + tmp.string());
    out << checkpoint_to_string(checkpoint);
    if (!out.flush()) throw InputError("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return checkpoint_from_string(text.str());
}

}  // namespace dualls
