#include "satq/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "satq/errors.hpp"
#include "satq/oracle.hpp"

namespace satq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Collects every problem in a config before throwing once.
class Issues {
 public:
  void add(std::string msg) { items_.push_back(std::move(msg)); }

  template <class F>
  void guard(const std::string& field, F&& f) {
    try {
      f();
    } catch (const json::exception& e) {
      add(field + ": " + e.what());
    } catch (const std::exception& e) {
      add(field + ": " + e.what());
    }
  }

  void raise() const {
    if (items_.empty()) return;
    std::string msg = "invalid config";
    for (const auto& s : items_) msg += "; " + s;
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> items_;
};

template <class T>
void read_field(const json& obj, const char* key, T& out, Issues& issues, const std::string& prefix) {
  if (!obj.contains(key)) return;
  issues.guard(prefix + key, [&] { out = obj.at(key).get<T>(); });
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, Issues& issues,
                const std::string& prefix) {
  if (!obj.is_object()) {
    issues.add(prefix + ": expected an object");
    return;
  }
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      issues.add(prefix + key + ": unknown field");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_trace_rows(std::ostream& out, std::uint64_t iteration, int state, std::span<const int> actions,
                      std::span<const double> costs, std::span<const double> z, std::span<const double> beta,
                      const std::vector<std::vector<double>>* rows) {
  const int N = static_cast<int>(z.size());
  for (int i = 0; i < N; ++i) {
    out << iteration << ',' << i << ',' << fmt(z[i]) << ',' << fmt(beta[i]) << ',' << fmt(beta[i] - z[i]) << ','
        << state << ',' << actions[i] << ',' << fmt(costs[i]);
    if (rows) {
      for (double w : (*rows)[i]) out << ',' << fmt(w);
    }
    out << '\n';
  }
}

std::vector<std::uint64_t> checksums(const Simulation& sim) {
  std::vector<std::uint64_t> out;
  for (const auto& a : sim.agents()) out.push_back(learned_checksum(a));
  return out;
}

}  // namespace

namespace {

void collect_issues(const ExperimentConfig& c, Issues& issues) {
  const auto& e = c.env;
  if (e.kind == "xor") {
    if (e.n_agents < 1) issues.add("env.n_agents: must be >= 1");
    if (e.n_states < 1) issues.add("env.n_states: must be >= 1");
    if (e.n_agents > 20) issues.add("env.n_agents: joint action space too large (max 20)");
  } else if (e.kind == "queueing" || e.kind == "gridworld") {
  } else if (e.kind == "file") {
    if (e.path.empty()) issues.add("env.path: required for kind \"file\"");
  } else {
    issues.add("env.kind: expected xor, queueing, gridworld or file");
  }
  issues.guard("schedule", [&] { c.schedule.validate(); });
  issues.guard("hyperparams", [&] { c.hyper.validate(); });
  if (c.learn_steps == 0) issues.add("learn_steps: must be positive");
  if (c.eval_steps == 0) issues.add("eval_steps: must be positive");
  if (c.trace.every == 0) issues.add("trace.every: must be positive");
  if (!(c.tolerance >= 0.0) || !std::isfinite(c.tolerance)) issues.add("tolerance: must be finite and >= 0");
  if (c.bounds.values.empty() && !std::isfinite(c.bounds.margin)) issues.add("bounds.margin: must be finite");
  for (double b : c.bounds.values)
    if (!std::isfinite(b)) issues.add("bounds.values: must be finite");
  if (c.graph.kind == GraphKind::Custom && c.graph.edges.empty()) issues.add("graph.edges: required for custom");
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  Issues issues;
  collect_issues(c, issues);
  issues.raise();
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  Issues issues;
  check_keys(doc,
             {"env", "graph", "scheme", "hyperparams", "schedule", "update_mode", "learn_steps", "eval_steps",
              "seed", "bounds", "trace", "tolerance", "output"},
             issues, "");
  if (!doc.is_object()) issues.raise();

  if (doc.contains("env")) {
    const json& e = doc["env"];
    check_keys(e, {"kind", "n_agents", "n_states", "cost_mode", "seed", "path"}, issues, "env.");
    if (e.is_object()) {
      read_field(e, "kind", c.env.kind, issues, "env.");
      read_field(e, "n_agents", c.env.n_agents, issues, "env.");
      read_field(e, "n_states", c.env.n_states, issues, "env.");
      read_field(e, "seed", c.env.seed, issues, "env.");
      read_field(e, "path", c.env.path, issues, "env.");
      if (e.contains("cost_mode"))
        issues.guard("env.cost_mode", [&] { c.env.cost_mode = cost_mode_from_string(e["cost_mode"]); });
    }
  }
  if (doc.contains("graph")) {
    const json& g = doc["graph"];
    check_keys(g, {"kind", "edges"}, issues, "graph.");
    if (g.is_object()) {
      if (g.contains("kind"))
        issues.guard("graph.kind", [&] { c.graph.kind = graph_kind_from_string(g["kind"]); });
      read_field(g, "edges", c.graph.edges, issues, "graph.");
    }
  }
  if (doc.contains("scheme"))
    issues.guard("scheme", [&] { c.hyper.scheme = weight_scheme_from_string(doc["scheme"]); });
  if (doc.contains("update_mode"))
    issues.guard("update_mode", [&] { c.hyper.update_mode = update_mode_from_string(doc["update_mode"]); });
  if (doc.contains("hyperparams")) {
    const json& h = doc["hyperparams"];
    check_keys(h, {"temperature", "gamma", "epsilon", "eps_w"}, issues, "hyperparams.");
    if (h.is_object()) {
      read_field(h, "temperature", c.hyper.temperature, issues, "hyperparams.");
      read_field(h, "gamma", c.hyper.mwu_gamma, issues, "hyperparams.");
      read_field(h, "epsilon", c.hyper.epsilon, issues, "hyperparams.");
      read_field(h, "eps_w", c.hyper.eps_w, issues, "hyperparams.");
    }
  }
  if (doc.contains("schedule")) {
    const json& s = doc["schedule"];
    check_keys(s, {"q_exponent", "z_exponent", "gossip_exponent"}, issues, "schedule.");
    if (s.is_object()) {
      read_field(s, "q_exponent", c.schedule.q_exponent, issues, "schedule.");
      read_field(s, "z_exponent", c.schedule.z_exponent, issues, "schedule.");
      read_field(s, "gossip_exponent", c.schedule.gossip_exponent, issues, "schedule.");
    }
  }
  read_field(doc, "learn_steps", c.learn_steps, issues, "");
  read_field(doc, "eval_steps", c.eval_steps, issues, "");
  read_field(doc, "seed", c.seed, issues, "");
  read_field(doc, "tolerance", c.tolerance, issues, "");
  read_field(doc, "output", c.output, issues, "");
  if (doc.contains("bounds")) {
    const json& b = doc["bounds"];
    check_keys(b, {"values", "calibrate"}, issues, "bounds.");
    if (b.is_object()) {
      read_field(b, "values", c.bounds.values, issues, "bounds.");
      if (b.contains("calibrate")) {
        const json& cal = b["calibrate"];
        check_keys(cal, {"reference_policy", "margin"}, issues, "bounds.calibrate.");
        if (cal.is_object()) {
          read_field(cal, "margin", c.bounds.margin, issues, "bounds.calibrate.");
          if (cal.contains("reference_policy")) {
            const json& r = cal["reference_policy"];
            if (r.is_string() && r.get<std::string>() == "uniform")
              c.bounds.reference_policy.reset();
            else if (r.is_number_unsigned())
              c.bounds.reference_policy = r.get<std::uint64_t>();
            else
              issues.add("bounds.calibrate.reference_policy: expected a policy number or \"uniform\"");
          }
        }
      }
    }
  }
  if (doc.contains("trace")) {
    const json& t = doc["trace"];
    check_keys(t, {"every", "rows"}, issues, "trace.");
    if (t.is_object()) {
      read_field(t, "every", c.trace.every, issues, "trace.");
      read_field(t, "rows", c.trace.rows, issues, "trace.");
    }
  }
  collect_issues(c, issues);
  issues.raise();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json env = {{"kind", c.env.kind},
              {"n_agents", c.env.n_agents},
              {"n_states", c.env.n_states},
              {"cost_mode", to_string(c.env.cost_mode)},
              {"seed", c.env.seed}};
  if (!c.env.path.empty()) env["path"] = c.env.path;
  json bounds;
  if (!c.bounds.values.empty()) {
    bounds["values"] = c.bounds.values;
  } else {
    json ref = c.bounds.reference_policy ? json(*c.bounds.reference_policy) : json("uniform");
    bounds["calibrate"] = {{"reference_policy", ref}, {"margin", c.bounds.margin}};
  }
  return {{"env", env},
          {"graph", {{"kind", to_string(c.graph.kind)}, {"edges", c.graph.edges}}},
          {"scheme", to_string(c.hyper.scheme)},
          {"update_mode", to_string(c.hyper.update_mode)},
          {"hyperparams",
           {{"temperature", c.hyper.temperature},
            {"gamma", c.hyper.mwu_gamma},
            {"epsilon", c.hyper.epsilon},
            {"eps_w", c.hyper.eps_w}}},
          {"schedule",
           {{"q_exponent", c.schedule.q_exponent},
            {"z_exponent", c.schedule.z_exponent},
            {"gossip_exponent", c.schedule.gossip_exponent}}},
          {"learn_steps", c.learn_steps},
          {"eval_steps", c.eval_steps},
          {"seed", c.seed},
          {"bounds", bounds},
          {"trace", {{"every", c.trace.every}, {"rows", c.trace.rows}}},
          {"tolerance", c.tolerance},
          {"output", c.output}};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return config_from_json(doc);
}

MmdpSpec build_environment(const EnvConfig& env) {
  if (env.kind == "xor") return build_xor_mdp(env.n_agents, env.n_states, env.cost_mode, env.seed);
  if (env.kind == "queueing") return build_queueing_env();
  if (env.kind == "gridworld") return build_gridworld_env();
  if (env.kind == "file") {
    std::ifstream in(env.path);
    if (!in) throw ArgumentError("cannot open environment " + env.path);
    return spec_from_json(json::parse(in));
  }
  throw ArgumentError("unknown environment kind " + env.kind);
}

MmdpSpec resolve_bounds(MmdpSpec spec, const BoundsConfig& bounds) {
  if (!bounds.values.empty()) {
    if (static_cast<int>(bounds.values.size()) != spec.n_agents)
      throw ValidationError("bounds.values: expected " + std::to_string(spec.n_agents) + " entries");
    spec.bounds = bounds.values;
    return spec;
  }
  if (!bounds.reference_policy) {
    const ProductPolicy uniform = ProductPolicy::uniform(spec);
    return calibrate_bounds(std::move(spec), uniform, bounds.margin);
  }
  const auto count = deterministic_policy_count(spec);
  if (count && *bounds.reference_policy >= *count)
    throw ValidationError("bounds.calibrate.reference_policy: out of range");
  const JointPolicy ref = policy_from_index(spec, *bounds.reference_policy);
  return calibrate_bounds(std::move(spec), ref, bounds.margin);
}

CommGraph build_graph(const GraphConfig& graph, int n_agents) {
  return satq::build_graph(graph.kind, n_agents, graph.edges);
}

int RunSummary::satisfied_count() const {
  return static_cast<int>(std::count(satisfied.begin(), satisfied.end(), true));
}

bool RunSummary::all_satisfied() const {
  return !satisfied.empty() && satisfied_count() == static_cast<int>(satisfied.size());
}

json RunSummary::to_json() const {
  return {{"schema_version", kTraceSchemaVersion},
          {"seed", seed},
          {"learn_steps", learn_steps},
          {"eval_steps", eval_steps},
          {"scheme", scheme},
          {"beta", beta},
          {"z_learn", z_learn},
          {"z_eval", z_eval},
          {"satisfied", satisfied},
          {"satisfied_count", satisfied_count()},
          {"all_satisfied", all_satisfied()},
          {"policy", {{"n_states", policy.n_states}, {"n_agents", policy.n_agents}, {"actions", policy.actions}}},
          {"checksum_freeze", checksum_freeze},
          {"checksum_end", checksum_end},
          {"frozen_unchanged", frozen_unchanged()}};
}

RunSummary RunSummary::from_json(const json& doc) {
  RunSummary r;
  try {
    r.seed = doc.at("seed");
    r.learn_steps = doc.at("learn_steps");
    r.eval_steps = doc.at("eval_steps");
    r.scheme = doc.at("scheme");
    r.beta = doc.at("beta").get<std::vector<double>>();
    r.z_learn = doc.at("z_learn").get<std::vector<double>>();
    r.z_eval = doc.at("z_eval").get<std::vector<double>>();
    r.satisfied = doc.at("satisfied").get<std::vector<bool>>();
    const json& p = doc.at("policy");
    r.policy = {p.at("n_states"), p.at("n_agents"), p.at("actions").get<std::vector<int>>()};
    r.checksum_freeze = doc.at("checksum_freeze").get<std::vector<std::uint64_t>>();
    r.checksum_end = doc.at("checksum_end").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed summary: ") + e.what());
  }
  return r;
}

RunSummary run_experiment(const ExperimentConfig& config, std::ostream* trace) {
  validate_config(config);
  auto spec = std::make_shared<const MmdpSpec>(resolve_bounds(build_environment(config.env), config.bounds));
  const int N = spec->n_agents;
  Simulation sim(spec, build_graph(config.graph, N), config.hyper, config.schedule, config.seed);
  sim.set_record_rows(trace && config.trace.rows);

  if (trace) {
    *trace << kTraceHeader;
    if (config.trace.rows)
      for (int j = 0; j < N; ++j) *trace << ",w" << j;
    *trace << '\n';
  }

  const std::uint64_t every = config.trace.every;
  for (std::uint64_t t = 1; t <= config.learn_steps; ++t) {
    const TraceRecord rec = sim.step();
    if (trace && (rec.n % every == 0 || t == config.learn_steps))
      write_trace_rows(*trace, rec.n, rec.state, rec.actions, rec.costs, rec.z, spec->bounds,
                       config.trace.rows ? &rec.rows : nullptr);
  }

  RunSummary out;
  out.seed = config.seed;
  out.learn_steps = config.learn_steps;
  out.eval_steps = config.eval_steps;
  out.scheme = to_string(config.hyper.scheme);
  out.beta = spec->bounds;
  for (const auto& a : sim.agents()) out.z_learn.push_back(a.z);
  out.policy = sim.greedy_policy();
  out.checksum_freeze = checksums(sim);

  // Frozen evaluation: the greedy policy drives the environment from where
  // learning left it; no learner state is touched.
  const JointActionCodec codec = spec->codec();
  std::vector<int> joint_of_state(spec->n_states);
  for (int s = 0; s < spec->n_states; ++s) {
    int code = 0;
    for (int i = 0; i < N; ++i) code = codec.replace(code, i, out.policy.at(s, i));
    joint_of_state[s] = code;
  }
  EnvState env = sim.env();
  std::vector<double> costs(N), sum(N, 0.0), mean(N, 0.0);
  const std::vector<std::vector<double>> frozen_rows = [&] {
    std::vector<std::vector<double>> rows;
    for (const auto& a : sim.agents()) rows.push_back(a.row);
    return rows;
  }();
  for (std::uint64_t t = 1; t <= config.eval_steps; ++t) {
    const int state = env.state;
    const int joint = joint_of_state[state];
    step_joint(*spec, env, joint, costs);
    for (int i = 0; i < N; ++i) {
      sum[i] += costs[i];
      mean[i] = sum[i] / static_cast<double>(t);
    }
    const std::uint64_t n = config.learn_steps + t;
    if (trace && (n % every == 0 || t == config.eval_steps)) {
      const std::vector<int> actions = codec.decode(joint);
      write_trace_rows(*trace, n, state, actions, costs, mean, spec->bounds,
                       config.trace.rows ? &frozen_rows : nullptr);
    }
  }
  out.z_eval = mean;
  out.checksum_end = checksums(sim);
  if (!out.frozen_unchanged()) throw NumericError("learned state changed after the policy was frozen");
  for (int i = 0; i < N; ++i) out.satisfied.push_back(out.z_eval[i] <= out.beta[i] + config.tolerance);
  return out;
}

RunSummary run_experiment_to_dir(const ExperimentConfig& config) {
  if (config.output.empty()) return run_experiment(config);
  const fs::path dir(config.output);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.json");
    cfg << config_to_json(config).dump(2) << '\n';
  }
  std::ofstream trace(dir / "trace.csv");
  if (!trace) throw ArgumentError("cannot write " + (dir / "trace.csv").string());
  const RunSummary summary = run_experiment(config, &trace);
  std::ofstream sum(dir / "summary.json");
  sum << summary.to_json().dump(2) << '\n';
  return summary;
}

double SweepSummary::satisfaction_rate() const {
  return total_agent_runs == 0 ? 0.0 : static_cast<double>(satisfied_agent_runs) / total_agent_runs;
}

json SweepSummary::to_json() const {
  json rows = json::array();
  for (const auto& r : runs) {
    json row = {{"index", r.index},   {"seed", r.seed},           {"scheme", r.scheme},
                {"n_agents", r.n_agents}, {"satisfied", r.satisfied}};
    if (!r.error.empty()) row["error"] = r.error;
    rows.push_back(row);
  }
  return {{"runs", rows},
          {"satisfied_agent_runs", satisfied_agent_runs},
          {"total_agent_runs", total_agent_runs},
          {"runs_all_satisfied", runs_all_satisfied},
          {"satisfaction_rate", satisfaction_rate()}};
}

SweepSummary run_sweep(const std::vector<ExperimentConfig>& configs, int parallelism) {
  if (parallelism < 1) throw ArgumentError("parallelism must be >= 1");
  std::vector<SweepEntry> entries(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      SweepEntry& e = entries[k];
      e.index = k;
      e.seed = configs[k].seed;
      e.scheme = to_string(configs[k].hyper.scheme);
      try {
        const RunSummary r = run_experiment_to_dir(configs[k]);
        e.n_agents = static_cast<int>(r.satisfied.size());
        e.satisfied = r.satisfied_count();
      } catch (const std::exception& ex) {
        e.error = ex.what();
      }
    }
  };
  const int threads = std::min<int>(parallelism, std::max<std::size_t>(configs.size(), 1));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  SweepSummary out;
  for (const auto& e : entries) {
    out.total_agent_runs += e.n_agents;
    out.satisfied_agent_runs += e.satisfied;
    if (e.error.empty() && e.n_agents > 0 && e.satisfied == e.n_agents) ++out.runs_all_satisfied;
  }
  out.runs = std::move(entries);
  return out;
}

json PolicyReport::to_json() const {
  json j = {{"exact", exact}, {"beta", beta}, {"z", z}};
  if (exact) {
    j["g"] = g;
    j["discrepancy"] = discrepancy;
  } else {
    j["reason"] = reason;
  }
  return j;
}

PolicyReport emit_policy_report(const MmdpSpec& spec, const JointPolicy& policy,
                                std::span<const double> z_empirical, std::uint64_t eval_steps) {
  if (eval_steps == 0) throw ValidationError("report needs a positive number of evaluation steps");
  if (static_cast<int>(z_empirical.size()) != spec.n_agents)
    throw ArgumentError("empirical averages do not match the agent count");
  PolicyReport r;
  r.beta = spec.bounds;
  r.z.assign(z_empirical.begin(), z_empirical.end());
  try {
    r.g = evaluate_policy(spec, policy).avg_cost;
    r.exact = true;
    for (int i = 0; i < spec.n_agents; ++i) r.discrepancy.push_back(std::abs(r.g[i] - r.z[i]));
  } catch (const CapacityError& e) {
    r.reason = e.what();
  } catch (const StructureError& e) {
    r.reason = e.what();
  }
  return r;
}

std::vector<double> rollout_average(const MmdpSpec& spec, const JointPolicy& policy, std::uint64_t steps,
                                    std::uint64_t seed) {
  if (steps == 0) throw ArgumentError("rollout needs at least one step");
  EnvState env = initial_env_state(spec, Rng::substream(seed, "rollout"));
  const JointActionCodec codec = spec.codec();
  std::vector<double> costs(spec.n_agents), sum(spec.n_agents, 0.0);
  for (std::uint64_t t = 0; t < steps; ++t) {
    int code = 0;
    for (int i = 0; i < spec.n_agents; ++i) code = codec.replace(code, i, policy.at(env.state, i));
    step_joint(spec, env, code, costs);
    for (int i = 0; i < spec.n_agents; ++i) sum[i] += costs[i];
  }
  for (double& v : sum) v /= static_cast<double>(steps);
  return sum;
}

}  // namespace satq
