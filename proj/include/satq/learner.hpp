#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "satq/env.hpp"
#include "satq/random.hpp"
#include "satq/weights.hpp"

namespace satq {

using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CountTable = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct StateAction {
  int s;
  int a;
};

// Step sizes gamma1(k) = k^-q (fast, Q-factors), gamma2(n) = n^-z (medium,
// running cost), gamma3(k) = k^-g (slow, gossip). Arguments below 1 are
// treated as 1.
struct StepSchedule {
  double q_exponent = 0.8;
  double z_exponent = 0.9;
  double gossip_exponent = 1.0;

  double gamma1(std::uint64_t k) const;
  double gamma2(std::uint64_t n) const;
  double gamma3(std::uint64_t k) const;

  // Requires 1/2 < q < z < g <= 1: square-summable, non-summable, and each
  // slower step size is o() of the faster one.
  void validate() const;
};

enum class WeightScheme { MWU, MH };
enum class UpdateMode { SynchronousGenerative, OnTrajectory };

std::string to_string(WeightScheme scheme);
std::string to_string(UpdateMode mode);
WeightScheme weight_scheme_from_string(const std::string& text);
UpdateMode update_mode_from_string(const std::string& text);

struct HyperParams {
  double epsilon = 0.1;      // exploration probability
  double temperature = 1.0;  // T in both weight schemes
  double mwu_gamma = 0.1;    // MWU multiplier
  double eps_w = 0.05;       // uniform mixing in MWU
  WeightScheme scheme = WeightScheme::MWU;
  UpdateMode update_mode = UpdateMode::SynchronousGenerative;

  void validate() const;
};

struct AgentState {
  Table q;                  // relative Q-factors
  double z = 0.0;           // running average cost
  Table y;                  // gossip per-stage cost iterate
  std::vector<double> row;  // gossip row over all agents, zero off N(i) and i
  CountTable visits;        // per-pair update counts, shared by Q and gossip
  std::vector<int> policy;  // current action per state
  Table last_cost;          // last observed own cost per (s, own action)
};

AgentState make_agent(const MmdpSpec& spec, const CommGraph& graph, int i);

// Relative Q-factor step for one pair, reading Q_n from `q_prev`:
//   Q(s,a) += gamma1(v) [y(s,a) + min_b Q_n(next, b) - Q_n(s0,a0) - Q_n(s,a)]
// The visit count is incremented first, so the k-th update uses gamma1(k).
void q_update(AgentState& agent, const Table& q_prev, StateAction sa, int next_state,
              const StepSchedule& schedule, StateAction reference);

// z += gamma2(n) (cost - z)
void running_cost_update(AgentState& agent, double incurred_cost, std::uint64_t n,
                         const StepSchedule& schedule);

// Gossip step of agent i for every active pair, reading the previous
// iteration's y tables of all agents:
//   y_i(s,a) = sum_j row[j] y_j(s,a) + gamma3(v_i(s,a)) (c(s,a) - y_i(s,a))
// `innovation` holds c(s,a). Inactive pairs are untouched.
void gossip_update(AgentState& agent, int i, const CommGraph& graph, std::span<const Table> y_prev,
                   std::span<const double> row, std::span<const StateAction> active,
                   const Table& innovation, const StepSchedule& schedule);

// Lowest index among the minimisers of q(s, .).
int greedy_action(const Table& q, int s);

// Per state: greedy with probability 1 - epsilon, uniform otherwise.
void policy_update(AgentState& agent, double epsilon, Rng& rng);

// Order-sensitive hash of the learned quantities (Q, y, gossip row).
std::uint64_t learned_checksum(const AgentState& agent);

nlohmann::json agent_to_json(const AgentState& agent);
AgentState agent_from_json(const nlohmann::json& doc);

struct TraceRecord {
  std::uint64_t n = 0;
  int state = 0;
  std::vector<int> actions;
  std::vector<double> costs;
  std::vector<double> z;
  std::vector<std::vector<double>> rows;  // filled only when rows are recorded
};

// One decentralised learning run: all agents, the environment trajectory and
// the random streams. Each call to step() performs one full iteration.
class Simulation {
 public:
  Simulation(std::shared_ptr<const MmdpSpec> spec, CommGraph graph, HyperParams params,
             StepSchedule schedule, std::uint64_t seed);

  // One iteration n: draw active sets and next-state samples, relative Q
  // update, running cost, gossip, weight modulation, policy update, and the
  // on-trajectory environment transition.
  TraceRecord step();

  std::uint64_t iteration() const { return n_; }
  const MmdpSpec& spec() const { return *spec_; }
  const CommGraph& graph() const { return graph_; }
  const HyperParams& params() const { return params_; }
  const std::vector<AgentState>& agents() const { return agents_; }
  std::vector<AgentState>& agents() { return agents_; }
  const EnvState& env() const { return env_; }
  EnvState& env() { return env_; }

  JointPolicy greedy_policy() const;
  GossipMatrix gossip_matrix() const;

  void set_record_rows(bool on) { record_rows_ = on; }

 private:
  std::shared_ptr<const MmdpSpec> spec_;
  CommGraph graph_;
  HyperParams params_;
  StepSchedule schedule_;
  JointActionCodec codec_;
  std::vector<AgentState> agents_;
  std::vector<Table> simple_costs_;  // c^i(s, a) in Simple mode
  EnvState env_;
  std::vector<Rng> sample_rng_;
  std::vector<Rng> explore_rng_;
  std::uint64_t n_ = 1;
  bool record_rows_ = false;

  // scratch
  std::vector<int> base_joint_;
  std::vector<double> costs_;
  std::vector<StateAction> all_pairs_;
  std::vector<Table> y_prev_;
};

}  // namespace satq
