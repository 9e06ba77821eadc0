#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satq/random.hpp"

namespace satq {

enum class CostMode { Simple, General };

std::string to_string(CostMode mode);
CostMode cost_mode_from_string(const std::string& text);

// Joint actions are encoded as base-|A| integers with agent 0 as the least
// significant digit.
class JointActionCodec {
 public:
  JointActionCodec(int n_agents, int n_actions);

  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  int size() const { return size_; }

  int encode(std::span<const int> actions) const;
  std::vector<int> decode(int code) const;
  int digit(int code, int agent) const { return (code / place_[agent]) % n_actions_; }
  int replace(int code, int agent, int action) const {
    return code + (action - digit(code, agent)) * place_[agent];
  }

 private:
  int n_agents_;
  int n_actions_;
  int size_;
  std::vector<int> place_;
};

struct Transition {
  int next;
  double prob;
};

// Sparse row-stochastic kernel p(s' | s, joint action) in CSR layout, one row
// per (state, joint action) pair in lexicographic order.
class TransitionKernel {
 public:
  TransitionKernel() = default;
  TransitionKernel(int n_states, int n_joint);

  int n_states() const { return n_states_; }
  int n_joint() const { return n_joint_; }
  bool complete() const;

  // Rows must be appended in (state, joint) order. Zero entries are dropped
  // and duplicate targets merged.
  void append_row(std::vector<Transition> row);

  std::span<const Transition> row(int s, int joint) const {
    const std::size_t r = static_cast<std::size_t>(s) * n_joint_ + joint;
    return {entries_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  double prob(int s, int joint, int next) const;

  int sample(int s, int joint, Rng& rng) const;

 private:
  int n_states_ = 0;
  int n_joint_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Transition> entries_;
};

// Zero-mean-corrected per-step cost randomness shared by all agents in a step:
// realised cost = expected cost + (level - mean level) * coef.
struct CostNoise {
  std::vector<double> levels;
  std::vector<double> probs;
  std::vector<double> coef;  // same layout as MmdpSpec::costs

  double mean() const;
};

// Tabular multi-agent MDP with per-agent costs and bounds.
//
// Cost layout is [agent][state][column], where the column is the agent's own
// action in Simple mode and the joint-action code in General mode. The table
// holds expected costs; any per-step randomness lives in `noise`.
struct MmdpSpec {
  std::string name;
  int n_agents = 0;
  int n_states = 0;
  int n_actions = 0;
  CostMode cost_mode = CostMode::Simple;
  TransitionKernel transition;
  std::vector<double> costs;
  std::optional<CostNoise> noise;
  std::vector<double> bounds;  // empty until calibrated or set
  int ref_state = 0;           // also the initial state X_0
  int ref_action = 0;

  int n_joint() const;
  int cost_columns() const { return cost_mode == CostMode::Simple ? n_actions : n_joint(); }
  JointActionCodec codec() const { return {n_agents, n_actions}; }

  std::size_t cost_index(int agent, int s, int column) const {
    return (static_cast<std::size_t>(agent) * n_states + s) * cost_columns() + column;
  }
  // Expected cost of `agent` at state s under the joint action `joint`.
  double expected_cost(int agent, int s, int joint) const;
  double min_cost(int agent) const;

  bool has_bounds() const { return static_cast<int>(bounds.size()) == n_agents; }

  // Throws ArgumentError / StructureError when any documented invariant fails.
  void validate() const;
};

struct EnvState {
  int state = 0;
  std::uint64_t step_count = 0;
  Rng rng;
};

EnvState initial_env_state(const MmdpSpec& spec, Rng rng);

// Deterministic joint policy: one action per (state, agent).
struct JointPolicy {
  int n_states = 0;
  int n_agents = 0;
  std::vector<int> actions;  // [state][agent]

  int at(int s, int agent) const { return actions[static_cast<std::size_t>(s) * n_agents + agent]; }
  int& at(int s, int agent) { return actions[static_cast<std::size_t>(s) * n_agents + agent]; }
  bool operator==(const JointPolicy&) const = default;
};

// Independent per-agent randomised stationary policy.
struct ProductPolicy {
  int n_states = 0;
  int n_agents = 0;
  int n_actions = 0;
  std::vector<double> probs;  // [state][agent][action]

  double prob(int s, int agent, int a) const {
    return probs[(static_cast<std::size_t>(s) * n_agents + agent) * n_actions + a];
  }
  static ProductPolicy uniform(const MmdpSpec& spec);
  static ProductPolicy from(const MmdpSpec& spec, const JointPolicy& policy);
};

// Number of deterministic joint policies, |A|^(N |S|), or nullopt past 2^62.
std::optional<std::uint64_t> deterministic_policy_count(const MmdpSpec& spec);

// Policy number k: digit (s * N + agent) of k in base |A|, least significant
// first. Policy 0 has every agent play action 0 everywhere.
JointPolicy policy_from_index(const MmdpSpec& spec, std::uint64_t index);
std::uint64_t policy_index(const MmdpSpec& spec, const JointPolicy& policy);

// Samples the next state and realised costs, advancing `st`. Throws
// ArgumentError on an out-of-range action.
std::vector<double> step(const MmdpSpec& spec, EnvState& st, std::span<const int> joint_action);

// Same as `step` for an already encoded joint action.
void step_joint(const MmdpSpec& spec, EnvState& st, int joint, std::span<double> costs_out);

// One draw from p(. | s, joint_action) without touching any EnvState.
int sample_next(const MmdpSpec& spec, int s, std::span<const int> joint_action, Rng& rng);

// Realised cost of one agent for a given noise draw (-1 for no noise).
double realized_cost(const MmdpSpec& spec, int agent, int s, int joint, int noise_level);
int draw_noise_level(const MmdpSpec& spec, Rng& rng);

// Random single-control kernel driven by the XOR of all agents' binary actions;
// costs uniform on [0, 10]; bounds left unset.
MmdpSpec build_xor_mdp(int n_agents, int n_states, CostMode cost_mode, std::uint64_t seed);

struct QueueingParams {
  std::vector<double> arrival{0.35, 0.30, 0.25, 0.20};
  std::vector<double> holding{0.3, 0.4, 0.5, 0.6};
  double collision_cost = 1.0;
  double transmit_high = 0.8;
  double transmit_low = 0.2;
  double prob_high = 0.5;
  int buffer = 2;
};

// Four queues sharing one channel; state = queue levels in base (buffer + 1).
MmdpSpec build_queueing_env(const QueueingParams& params = {});

namespace grid {
inline constexpr int kSide = 6;
inline constexpr int kCells = kSide * kSide;
enum Move : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline int cell(int x, int y) { return x + kSide * y; }
inline int state_of(int cell0, int cell1) { return cell0 + kCells * cell1; }
inline int cell0_of(int s) { return s % kCells; }
inline int cell1_of(int s) { return s / kCells; }
int manhattan(int cell_a, int cell_b);
inline constexpr double kGoalCost = -10.0;
inline constexpr double kStageCost = 0.5;
inline constexpr double kProximityCost = 1.0;
}  // namespace grid

// Two agents on a 6x6 grid, starting bottom-left, rewarded together at the
// top-right corner (which resets them).
MmdpSpec build_gridworld_env();

// Brute-force check that every deterministic joint policy induces a chain with
// a single communicating class. Throws CapacityError past `policy_budget`.
bool irreducible_under_all_policies(const MmdpSpec& spec, std::uint64_t policy_budget = 1'000'000);

// beta^i = g^i(reference) + margin, using the exact policy evaluation.
MmdpSpec calibrate_bounds(MmdpSpec spec, const JointPolicy& reference, double margin);
MmdpSpec calibrate_bounds(MmdpSpec spec, const ProductPolicy& reference, double margin);

nlohmann::json spec_to_json(const MmdpSpec& spec);
MmdpSpec spec_from_json(const nlohmann::json& doc);

}  // namespace satq
