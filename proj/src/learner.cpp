#include "satq/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "satq/errors.hpp"

namespace satq {

double StepSchedule::gamma1(std::uint64_t k) const {
  return std::pow(static_cast<double>(std::max<std::uint64_t>(k, 1)), -q_exponent);
}
double StepSchedule::gamma2(std::uint64_t n) const {
  return std::pow(static_cast<double>(std::max<std::uint64_t>(n, 1)), -z_exponent);
}
double StepSchedule::gamma3(std::uint64_t k) const {
  return std::pow(static_cast<double>(std::max<std::uint64_t>(k, 1)), -gossip_exponent);
}

void StepSchedule::validate() const {
  if (!(q_exponent > 0.5 && q_exponent < z_exponent && z_exponent < gossip_exponent &&
        gossip_exponent <= 1.0))
    throw ArgumentError("step-size exponents must satisfy 1/2 < q < z < g <= 1");
}

std::string to_string(WeightScheme scheme) { return scheme == WeightScheme::MWU ? "mwu" : "mh"; }
std::string to_string(UpdateMode mode) {
  return mode == UpdateMode::SynchronousGenerative ? "synchronous" : "on_trajectory";
}

WeightScheme weight_scheme_from_string(const std::string& text) {
  if (text == "mwu") return WeightScheme::MWU;
  if (text == "mh") return WeightScheme::MH;
  throw ArgumentError("unknown weight scheme '" + text + "'");
}

UpdateMode update_mode_from_string(const std::string& text) {
  if (text == "synchronous") return UpdateMode::SynchronousGenerative;
  if (text == "on_trajectory") return UpdateMode::OnTrajectory;
  throw ArgumentError("unknown update mode '" + text + "'");
}

void HyperParams::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("epsilon must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (!(mwu_gamma > 0.0 && mwu_gamma < 1.0)) throw ArgumentError("mwu_gamma must lie in (0, 1)");
  if (!(eps_w >= 0.0 && eps_w < 1.0)) throw ArgumentError("eps_w must lie in [0, 1)");
}

AgentState make_agent(const MmdpSpec& spec, const CommGraph& graph, int i) {
  AgentState a;
  a.q = Table::Zero(spec.n_states, spec.n_actions);
  a.y = Table::Zero(spec.n_states, spec.n_actions);
  a.last_cost = Table::Zero(spec.n_states, spec.n_actions);
  a.visits = CountTable::Zero(spec.n_states, spec.n_actions);
  a.row = uniform_row(graph, i);
  // argmin over an all-zero table: action 0 everywhere
  a.policy.assign(spec.n_states, 0);
  return a;
}

void q_update(AgentState& agent, const Table& q_prev, StateAction sa, int next_state,
              const StepSchedule& schedule, StateAction reference) {
  const std::uint64_t k = ++agent.visits(sa.s, sa.a);
  const double target = agent.y(sa.s, sa.a) + q_prev.row(next_state).minCoeff() -
                        q_prev(reference.s, reference.a) - q_prev(sa.s, sa.a);
  agent.q(sa.s, sa.a) = q_prev(sa.s, sa.a) + schedule.gamma1(k) * target;
}

void running_cost_update(AgentState& agent, double incurred_cost, std::uint64_t n,
                         const StepSchedule& schedule) {
  agent.z += schedule.gamma2(n) * (incurred_cost - agent.z);
}

void gossip_update(AgentState& agent, int i, const CommGraph& graph, std::span<const Table> y_prev,
                   std::span<const double> row, std::span<const StateAction> active,
                   const Table& innovation, const StepSchedule& schedule) {
  validate_row(graph, i, row);
  if (static_cast<int>(y_prev.size()) != graph.n_agents())
    throw StructureError("gossip needs the y table of every agent");
  const auto& nb = graph.neighbors(i);
  for (const auto& [s, a] : active) {
    double mixed = row[i] * y_prev[i](s, a);
    for (int j : nb) mixed += row[j] * y_prev[j](s, a);
    const double step = schedule.gamma3(agent.visits(s, a));
    agent.y(s, a) = mixed + step * (innovation(s, a) - y_prev[i](s, a));
  }
}

int greedy_action(const Table& q, int s) {
  int best = 0;
  for (int b = 1; b < q.cols(); ++b)
    if (q(s, b) < q(s, best)) best = b;
  return best;
}

void policy_update(AgentState& agent, double epsilon, Rng& rng) {
  const int n_actions = static_cast<int>(agent.q.cols());
  for (int s = 0; s < agent.q.rows(); ++s) {
    if (epsilon > 0.0 && rng.uniform() < epsilon)
      agent.policy[s] = rng.index(n_actions);
    else
      agent.policy[s] = greedy_action(agent.q, s);
  }
}

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < size; ++k) {
    h ^= p[k];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t learned_checksum(const AgentState& agent) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_bytes(h, agent.q.data(), sizeof(double) * static_cast<std::size_t>(agent.q.size()));
  hash_bytes(h, agent.y.data(), sizeof(double) * static_cast<std::size_t>(agent.y.size()));
  hash_bytes(h, agent.row.data(), sizeof(double) * agent.row.size());
  return h;
}

namespace {

nlohmann::json table_to_json(const Table& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()},
          {"data", std::vector<double>(t.data(), t.data() + t.size())}};
}

Table table_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw StructureError("table data has wrong size");
  Table t(rows, cols);
  std::copy(data.begin(), data.end(), t.data());
  return t;
}

}  // namespace

nlohmann::json agent_to_json(const AgentState& agent) {
  nlohmann::json doc;
  doc["q"] = table_to_json(agent.q);
  doc["y"] = table_to_json(agent.y);
  doc["last_cost"] = table_to_json(agent.last_cost);
  doc["z"] = agent.z;
  doc["row"] = agent.row;
  doc["visits"] = std::vector<std::uint64_t>(agent.visits.data(), agent.visits.data() + agent.visits.size());
  doc["policy"] = agent.policy;
  return doc;
}

AgentState agent_from_json(const nlohmann::json& doc) {
  AgentState a;
  a.q = table_from_json(doc.at("q"));
  a.y = table_from_json(doc.at("y"));
  a.last_cost = table_from_json(doc.at("last_cost"));
  a.z = doc.at("z").get<double>();
  a.row = doc.at("row").get<std::vector<double>>();
  const auto visits = doc.at("visits").get<std::vector<std::uint64_t>>();
  if (static_cast<Eigen::Index>(visits.size()) != a.q.size()) throw StructureError("visit table has wrong size");
  a.visits.resize(a.q.rows(), a.q.cols());
  std::copy(visits.begin(), visits.end(), a.visits.data());
  a.policy = doc.at("policy").get<std::vector<int>>();
  return a;
}

// ---------------------------------------------------------------------------

Simulation::Simulation(std::shared_ptr<const MmdpSpec> spec, CommGraph graph, HyperParams params,
                       StepSchedule schedule, std::uint64_t seed)
    : spec_(std::move(spec)),
      graph_(std::move(graph)),
      params_(params),
      schedule_(schedule),
      codec_(spec_->n_agents, spec_->n_actions) {
  const MmdpSpec& m = *spec_;
  params_.validate();
  schedule_.validate();
  m.validate();
  if (!m.has_bounds()) throw ArgumentError("simulation needs one bound per agent");
  if (graph_.n_agents() != m.n_agents) throw StructureError("graph and MMDP disagree on the number of agents");

  for (int i = 0; i < m.n_agents; ++i) {
    agents_.push_back(make_agent(m, graph_, i));
    sample_rng_.push_back(Rng::substream(seed, "samples", static_cast<std::uint64_t>(i)));
    explore_rng_.push_back(Rng::substream(seed, "explore", static_cast<std::uint64_t>(i)));
  }
  if (m.cost_mode == CostMode::Simple) {
    for (int i = 0; i < m.n_agents; ++i) {
      Table c(m.n_states, m.n_actions);
      for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) c(s, a) = m.costs[m.cost_index(i, s, a)];
      simple_costs_.push_back(std::move(c));
    }
  }
  env_ = initial_env_state(m, Rng::substream(seed, "env"));
  base_joint_.resize(m.n_states);
  costs_.resize(m.n_agents);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) all_pairs_.push_back({s, a});
}

TraceRecord Simulation::step() {
  const MmdpSpec& m = *spec_;
  const int N = m.n_agents;
  const std::uint64_t n = n_;
  const bool synchronous = params_.update_mode == UpdateMode::SynchronousGenerative;
  const StateAction reference{m.ref_state, m.ref_action};

  // Joint action of the current (already epsilon-randomised) policies.
  for (int s = 0; s < m.n_states; ++s) {
    int code = 0;
    for (int i = 0; i < N; ++i) code = codec_.replace(code, i, agents_[i].policy[s]);
    base_joint_[s] = code;
  }
  const int state = env_.state;
  const int joint = base_joint_[state];
  step_joint(m, env_, joint, costs_);
  const int next_state = env_.state;

  TraceRecord rec;
  rec.n = n;
  rec.state = state;
  rec.actions = codec_.decode(joint);
  rec.costs = costs_;

  // Active sets, next-state samples and the fast-timescale Q update.
  std::vector<std::vector<StateAction>> active(N);
  for (int i = 0; i < N; ++i) {
    AgentState& agent = agents_[i];
    const Table q_prev = agent.q;
    if (synchronous) {
      active[i] = all_pairs_;
      for (const auto& sa : all_pairs_) {
        const int code = codec_.replace(base_joint_[sa.s], i, sa.a);
        const int xi = m.transition.sample(sa.s, code, sample_rng_[i]);
        if (m.cost_mode == CostMode::General) {
          const int level = draw_noise_level(m, sample_rng_[i]);
          agent.last_cost(sa.s, sa.a) = realized_cost(m, i, sa.s, code, level);
        }
        q_update(agent, q_prev, sa, xi, schedule_, reference);
      }
    } else {
      const StateAction sa{state, rec.actions[i]};
      active[i] = {sa};
      agent.last_cost(sa.s, sa.a) = costs_[i];
      q_update(agent, q_prev, sa, next_state, schedule_, reference);
    }
  }

  // Medium timescale: running cost. Keep z_n for the weight update.
  std::vector<double> z_prev(N);
  for (int i = 0; i < N; ++i) {
    z_prev[i] = agents_[i].z;
    running_cost_update(agents_[i], costs_[i], n, schedule_);
  }

  // Slow timescale: gossip against a snapshot of every agent's y_n.
  y_prev_.resize(N);
  for (int i = 0; i < N; ++i) y_prev_[i] = agents_[i].y;
  for (int i = 0; i < N; ++i) {
    const Table& innovation = m.cost_mode == CostMode::Simple ? simple_costs_[i] : agents_[i].last_cost;
    gossip_update(agents_[i], i, graph_, y_prev_, agents_[i].row, active[i], innovation, schedule_);
  }

  // Natural timescale: modulate the gossip rows from z_n - beta.
  const DeviationVector deviations = DeviationVector::from(z_prev, m.bounds);
  for (int i = 0; i < N; ++i) {
    auto& row = agents_[i].row;
    if (params_.scheme == WeightScheme::MWU)
      row = mwu_row_update(graph_, i, row, deviations,
                           {params_.mwu_gamma, params_.temperature, params_.eps_w});
    else
      row = mh_row_update(graph_, i, deviations, params_.temperature);
  }

  for (int i = 0; i < N; ++i) policy_update(agents_[i], params_.epsilon, explore_rng_[i]);

  rec.z.resize(N);
  for (int i = 0; i < N; ++i) rec.z[i] = agents_[i].z;
  if (record_rows_)
    for (int i = 0; i < N; ++i) rec.rows.push_back(agents_[i].row);
  ++n_;
  return rec;
}

JointPolicy Simulation::greedy_policy() const {
  const MmdpSpec& m = *spec_;
  JointPolicy p{m.n_states, m.n_agents, std::vector<int>(static_cast<std::size_t>(m.n_states) * m.n_agents)};
  for (int s = 0; s < m.n_states; ++s)
    for (int i = 0; i < m.n_agents; ++i) p.at(s, i) = greedy_action(agents_[i].q, s);
  return p;
}

GossipMatrix Simulation::gossip_matrix() const {
  std::vector<std::vector<double>> rows;
  for (const auto& a : agents_) rows.push_back(a.row);
  return GossipMatrix::from_rows(rows);
}

}  // namespace satq
