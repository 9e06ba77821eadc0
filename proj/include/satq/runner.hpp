#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satq/env.hpp"
#include "satq/learner.hpp"
#include "satq/weights.hpp"

namespace satq {

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr const char* kTraceHeader = "iteration,agent,z,beta,beta_minus_z,state,action,cost";

struct EnvConfig {
  std::string kind = "xor";  // xor | queueing | gridworld | file
  int n_agents = 7;
  int n_states = 2;
  CostMode cost_mode = CostMode::Simple;
  std::uint64_t seed = 1;
  std::string path;  // spec document for kind == "file"
};

struct GraphConfig {
  GraphKind kind = GraphKind::Cycle;
  std::vector<Edge> edges;
};

// Either explicit bounds, or bounds calibrated as g(reference) + margin where
// the reference is a policy number or the uniformly random policy.
struct BoundsConfig {
  std::vector<double> values;
  std::optional<std::uint64_t> reference_policy = 0;  // nullopt: uniform random
  double margin = 0.1;
};

struct TraceConfig {
  std::uint64_t every = 100;  // 1 = full resolution
  bool rows = false;          // append gossip-row columns w0..w{N-1}
};

struct ExperimentConfig {
  EnvConfig env;
  GraphConfig graph;
  HyperParams hyper;
  StepSchedule schedule;
  std::uint64_t learn_steps = 200'000;
  std::uint64_t eval_steps = 100'000;
  std::uint64_t seed = 1;
  BoundsConfig bounds;
  TraceConfig trace;
  double tolerance = 0.0;  // agent i is satisfied iff z_eval <= beta + tolerance
  std::string output;      // run directory; empty writes nothing
};

// Parses and validates; ValidationError lists every offending field.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
void validate_config(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

MmdpSpec build_environment(const EnvConfig& env);
MmdpSpec resolve_bounds(MmdpSpec spec, const BoundsConfig& bounds);
CommGraph build_graph(const GraphConfig& graph, int n_agents);

struct RunSummary {
  std::uint64_t seed = 0;
  std::uint64_t learn_steps = 0;
  std::uint64_t eval_steps = 0;
  std::string scheme;
  std::vector<double> beta;
  std::vector<double> z_learn;  // running-cost iterate at the freeze
  std::vector<double> z_eval;   // empirical average over the evaluation phase
  std::vector<bool> satisfied;
  JointPolicy policy;
  std::vector<std::uint64_t> checksum_freeze;
  std::vector<std::uint64_t> checksum_end;

  int satisfied_count() const;
  bool all_satisfied() const;
  bool frozen_unchanged() const { return checksum_freeze == checksum_end; }
  nlohmann::json to_json() const;
  static RunSummary from_json(const nlohmann::json& doc);
};

// Learning phase (learn_steps iterations), then the greedy policy is frozen
// and rolled out for eval_steps steps. Trace rows go to `trace` when given.
RunSummary run_experiment(const ExperimentConfig& config, std::ostream* trace = nullptr);

// run_experiment writing trace.csv, summary.json and config.json under
// config.output (created if needed).
RunSummary run_experiment_to_dir(const ExperimentConfig& config);

struct SweepEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string scheme;
  int n_agents = 0;
  int satisfied = 0;
  std::string error;  // empty when the run finished
};

struct SweepSummary {
  std::vector<SweepEntry> runs;
  int satisfied_agent_runs = 0;
  int total_agent_runs = 0;
  int runs_all_satisfied = 0;

  double satisfaction_rate() const;
  nlohmann::json to_json() const;
};

// Independent runs on up to `parallelism` threads. Results are ordered by
// config index, and a failing run is recorded without stopping the sweep.
SweepSummary run_sweep(const std::vector<ExperimentConfig>& configs, int parallelism);

struct PolicyReport {
  bool exact = false;
  std::string reason;  // why the exact path was skipped, if it was
  std::vector<double> beta;
  std::vector<double> z;
  std::vector<double> g;
  std::vector<double> discrepancy;  // |g - z|

  nlohmann::json to_json() const;
};

// Exact g(pi) next to the bounds and the empirical averages z, which were
// measured over `eval_steps` steps (must be positive).
PolicyReport emit_policy_report(const MmdpSpec& spec, const JointPolicy& policy,
                                std::span<const double> z_empirical, std::uint64_t eval_steps);

// Empirical average cost of a frozen policy over `steps` steps from X_0.
std::vector<double> rollout_average(const MmdpSpec& spec, const JointPolicy& policy, std::uint64_t steps,
                                    std::uint64_t seed);

}  // namespace satq
