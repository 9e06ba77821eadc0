#include "satq/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "satq/errors.hpp"
#include "satq/markov.hpp"

namespace satq {

std::string to_string(CostMode mode) {
  return mode == CostMode::Simple ? "simple" : "general";
}

CostMode cost_mode_from_string(const std::string& text) {
  if (text == "simple") return CostMode::Simple;
  if (text == "general") return CostMode::General;
  throw ArgumentError("unknown cost mode '" + text + "'");
}

// ---------------------------------------------------------------------------

JointActionCodec::JointActionCodec(int n_agents, int n_actions)
    : n_agents_(n_agents), n_actions_(n_actions), size_(1), place_(n_agents) {
  if (n_agents < 1 || n_actions < 1) throw ArgumentError("codec needs N >= 1 and |A| >= 1");
  for (int i = 0; i < n_agents; ++i) {
    place_[i] = size_;
    if (size_ > std::numeric_limits<int>::max() / n_actions)
      throw CapacityError("joint action space does not fit in an int");
    size_ *= n_actions;
  }
}

int JointActionCodec::encode(std::span<const int> actions) const {
  if (static_cast<int>(actions.size()) != n_agents_)
    throw ArgumentError("joint action has " + std::to_string(actions.size()) +
                        " entries, expected " + std::to_string(n_agents_));
  int code = 0;
  for (int i = 0; i < n_agents_; ++i) {
    if (actions[i] < 0 || actions[i] >= n_actions_)
      throw ArgumentError("action " + std::to_string(actions[i]) + " of agent " +
                          std::to_string(i) + " outside [0, " + std::to_string(n_actions_) + ")");
    code += actions[i] * place_[i];
  }
  return code;
}

std::vector<int> JointActionCodec::decode(int code) const {
  std::vector<int> out(n_agents_);
  for (int i = 0; i < n_agents_; ++i) out[i] = digit(code, i);
  return out;
}

// ---------------------------------------------------------------------------

TransitionKernel::TransitionKernel(int n_states, int n_joint)
    : n_states_(n_states), n_joint_(n_joint) {
  offsets_.reserve(static_cast<std::size_t>(n_states) * n_joint + 1);
}

bool TransitionKernel::complete() const {
  return offsets_.size() == static_cast<std::size_t>(n_states_) * n_joint_ + 1;
}

void TransitionKernel::append_row(std::vector<Transition> row) {
  if (complete()) throw StructureError("transition kernel already has all rows");
  std::sort(row.begin(), row.end(),
            [](const Transition& a, const Transition& b) { return a.next < b.next; });
  for (const auto& t : row) {
    if (t.next < 0 || t.next >= n_states_)
      throw ArgumentError("transition target " + std::to_string(t.next) + " out of range");
    if (t.prob == 0.0) continue;
    if (!entries_.empty() && entries_.size() > offsets_.back() && entries_.back().next == t.next)
      entries_.back().prob += t.prob;
    else
      entries_.push_back(t);
  }
  offsets_.push_back(entries_.size());
}

double TransitionKernel::prob(int s, int joint, int next) const {
  for (const auto& t : row(s, joint))
    if (t.next == next) return t.prob;
  return 0.0;
}

int TransitionKernel::sample(int s, int joint, Rng& rng) const {
  const auto r = row(s, joint);
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& t : r) {
    acc += t.prob;
    if (u < acc) return t.next;
  }
  return r.back().next;
}

double CostNoise::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) m += levels[k] * probs[k];
  return m;
}

// ---------------------------------------------------------------------------

int MmdpSpec::n_joint() const { return JointActionCodec(n_agents, n_actions).size(); }

double MmdpSpec::expected_cost(int agent, int s, int joint) const {
  const int column =
      cost_mode == CostMode::Simple ? JointActionCodec(n_agents, n_actions).digit(joint, agent) : joint;
  return costs[cost_index(agent, s, column)];
}

double MmdpSpec::min_cost(int agent) const {
  const auto begin = costs.begin() + static_cast<std::ptrdiff_t>(cost_index(agent, 0, 0));
  return *std::min_element(begin, begin + static_cast<std::ptrdiff_t>(n_states) * cost_columns());
}

void MmdpSpec::validate() const {
  if (n_agents < 1 || n_states < 1 || n_actions < 1)
    throw ArgumentError("MMDP needs N, |S|, |A| >= 1");
  const int nj = n_joint();
  if (transition.n_states() != n_states || transition.n_joint() != nj || !transition.complete())
    throw StructureError("transition kernel shape does not match the MMDP");
  for (int s = 0; s < n_states; ++s) {
    for (int j = 0; j < nj; ++j) {
      double sum = 0.0;
      for (const auto& t : transition.row(s, j)) {
        if (!(t.prob >= 0.0)) throw StructureError("negative transition probability");
        sum += t.prob;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw StructureError("transition row (" + std::to_string(s) + ", " + std::to_string(j) +
                             ") sums to " + std::to_string(sum));
    }
  }
  const std::size_t expected = static_cast<std::size_t>(n_agents) * n_states * cost_columns();
  if (costs.size() != expected)
    throw StructureError("cost table has " + std::to_string(costs.size()) + " entries, expected " +
                         std::to_string(expected));
  for (double c : costs)
    if (!std::isfinite(c)) throw ArgumentError("cost table contains a non-finite value");
  if (noise) {
    if (noise->levels.size() != noise->probs.size() || noise->levels.empty())
      throw StructureError("noise levels and probabilities differ in length");
    if (noise->coef.size() != expected) throw StructureError("noise coefficient table has wrong shape");
    const double total = std::accumulate(noise->probs.begin(), noise->probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) throw StructureError("noise probabilities do not sum to 1");
  }
  if (!bounds.empty() && static_cast<int>(bounds.size()) != n_agents)
    throw StructureError("bounds must have one entry per agent");
  for (double b : bounds)
    if (!std::isfinite(b)) throw ArgumentError("bound is not finite");
  if (ref_state < 0 || ref_state >= n_states || ref_action < 0 || ref_action >= n_actions)
    throw ArgumentError("reference pair out of range");
}

EnvState initial_env_state(const MmdpSpec& spec, Rng rng) {
  return EnvState{spec.ref_state, 0, std::move(rng)};
}

ProductPolicy ProductPolicy::uniform(const MmdpSpec& spec) {
  ProductPolicy p{spec.n_states, spec.n_agents, spec.n_actions, {}};
  p.probs.assign(static_cast<std::size_t>(spec.n_states) * spec.n_agents * spec.n_actions,
                 1.0 / spec.n_actions);
  return p;
}

ProductPolicy ProductPolicy::from(const MmdpSpec& spec, const JointPolicy& policy) {
  ProductPolicy p{spec.n_states, spec.n_agents, spec.n_actions, {}};
  p.probs.assign(static_cast<std::size_t>(spec.n_states) * spec.n_agents * spec.n_actions, 0.0);
  for (int s = 0; s < spec.n_states; ++s)
    for (int i = 0; i < spec.n_agents; ++i)
      p.probs[(static_cast<std::size_t>(s) * spec.n_agents + i) * spec.n_actions + policy.at(s, i)] = 1.0;
  return p;
}

std::optional<std::uint64_t> deterministic_policy_count(const MmdpSpec& spec) {
  std::uint64_t count = 1;
  const long digits = static_cast<long>(spec.n_agents) * spec.n_states;
  for (long d = 0; d < digits; ++d) {
    if (count > (std::uint64_t{1} << 62) / static_cast<std::uint64_t>(spec.n_actions)) return std::nullopt;
    count *= static_cast<std::uint64_t>(spec.n_actions);
  }
  return count;
}

JointPolicy policy_from_index(const MmdpSpec& spec, std::uint64_t index) {
  JointPolicy p{spec.n_states, spec.n_agents, {}};
  p.actions.resize(static_cast<std::size_t>(spec.n_states) * spec.n_agents);
  for (auto& a : p.actions) {
    a = static_cast<int>(index % static_cast<std::uint64_t>(spec.n_actions));
    index /= static_cast<std::uint64_t>(spec.n_actions);
  }
  if (index != 0) throw ArgumentError("policy index exceeds the deterministic policy count");
  return p;
}

std::uint64_t policy_index(const MmdpSpec& spec, const JointPolicy& policy) {
  std::uint64_t index = 0;
  for (std::size_t k = policy.actions.size(); k-- > 0;)
    index = index * static_cast<std::uint64_t>(spec.n_actions) + static_cast<std::uint64_t>(policy.actions[k]);
  return index;
}

// ---------------------------------------------------------------------------

int draw_noise_level(const MmdpSpec& spec, Rng& rng) {
  if (!spec.noise) return -1;
  return rng.categorical(spec.noise->probs);
}

double realized_cost(const MmdpSpec& spec, int agent, int s, int joint, int noise_level) {
  double c = spec.expected_cost(agent, s, joint);
  if (spec.noise && noise_level >= 0) {
    const int column =
        spec.cost_mode == CostMode::Simple ? spec.codec().digit(joint, agent) : joint;
    c += (spec.noise->levels[noise_level] - spec.noise->mean()) *
         spec.noise->coef[spec.cost_index(agent, s, column)];
  }
  return c;
}

void step_joint(const MmdpSpec& spec, EnvState& st, int joint, std::span<double> costs_out) {
  const int level = draw_noise_level(spec, st.rng);
  for (int i = 0; i < spec.n_agents; ++i) costs_out[i] = realized_cost(spec, i, st.state, joint, level);
  st.state = spec.transition.sample(st.state, joint, st.rng);
  ++st.step_count;
}

std::vector<double> step(const MmdpSpec& spec, EnvState& st, std::span<const int> joint_action) {
  const int joint = spec.codec().encode(joint_action);
  std::vector<double> costs(spec.n_agents);
  step_joint(spec, st, joint, costs);
  return costs;
}

int sample_next(const MmdpSpec& spec, int s, std::span<const int> joint_action, Rng& rng) {
  if (s < 0 || s >= spec.n_states) throw ArgumentError("state " + std::to_string(s) + " out of range");
  const int joint = spec.codec().encode(joint_action);
  return spec.transition.sample(s, joint, rng);
}

// ---------------------------------------------------------------------------

MmdpSpec build_xor_mdp(int n_agents, int n_states, CostMode cost_mode, std::uint64_t seed) {
  if (n_states < 2) throw ArgumentError("XOR MDP needs at least 2 states");
  if (n_agents < 1) throw ArgumentError("XOR MDP needs at least 1 agent");
  MmdpSpec spec;
  spec.name = "xor";
  spec.n_agents = n_agents;
  spec.n_states = n_states;
  spec.n_actions = 2;
  spec.cost_mode = cost_mode;
  const JointActionCodec codec = spec.codec();

  Rng rng = Rng::substream(seed, "xor-kernel");
  // base[s][bit] is a strictly positive row, so every induced chain is irreducible.
  std::vector<std::vector<double>> base(static_cast<std::size_t>(n_states) * 2);
  for (auto& row : base) {
    row.resize(n_states);
    double sum = 0.0;
    for (auto& p : row) sum += (p = rng.uniform_open_zero());
    for (auto& p : row) p /= sum;
  }
  spec.transition = TransitionKernel(n_states, codec.size());
  for (int s = 0; s < n_states; ++s) {
    for (int joint = 0; joint < codec.size(); ++joint) {
      int bit = 0;
      for (int i = 0; i < n_agents; ++i) bit ^= codec.digit(joint, i);
      const auto& src = base[static_cast<std::size_t>(s) * 2 + bit];
      std::vector<Transition> row;
      row.reserve(n_states);
      for (int t = 0; t < n_states; ++t) row.push_back({t, src[t]});
      spec.transition.append_row(std::move(row));
    }
  }

  Rng cost_rng = Rng::substream(seed, "xor-costs");
  spec.costs.resize(static_cast<std::size_t>(n_agents) * n_states * spec.cost_columns());
  for (auto& c : spec.costs) c = cost_rng.uniform(0.0, 10.0);
  spec.validate();
  return spec;
}

MmdpSpec build_queueing_env(const QueueingParams& params) {
  const int n = static_cast<int>(params.arrival.size());
  if (n < 1 || params.holding.size() != params.arrival.size())
    throw ArgumentError("queueing parameters need one arrival rate and holding cost per agent");
  const int levels = params.buffer + 1;
  MmdpSpec spec;
  spec.name = "queueing";
  spec.n_agents = n;
  spec.n_actions = 2;
  spec.n_states = 1;
  for (int i = 0; i < n; ++i) spec.n_states *= levels;
  spec.cost_mode = CostMode::General;
  const JointActionCodec codec = spec.codec();

  auto decode_state = [&](int s) {
    std::vector<int> x(n);
    for (int i = 0; i < n; ++i, s /= levels) x[i] = s % levels;
    return x;
  };
  auto encode_state = [&](const std::vector<int>& x) {
    int s = 0;
    for (int i = n; i-- > 0;) s = s * levels + x[i];
    return s;
  };

  spec.transition = TransitionKernel(spec.n_states, codec.size());
  for (int s = 0; s < spec.n_states; ++s) {
    const auto x = decode_state(s);
    for (int joint = 0; joint < codec.size(); ++joint) {
      std::vector<Transition> row;
      for (int arrivals = 0; arrivals < (1 << n); ++arrivals) {
        double p = 1.0;
        std::vector<int> next(n);
        for (int i = 0; i < n; ++i) {
          const int arrive = (arrivals >> i) & 1;
          p *= arrive ? params.arrival[i] : 1.0 - params.arrival[i];
          const int departed = x[i] - ((codec.digit(joint, i) == 1 && x[i] >= 1) ? 1 : 0);
          // Arrivals into a full buffer are dropped.
          next[i] = std::min(departed + arrive, params.buffer);
        }
        row.push_back({encode_state(next), p});
      }
      spec.transition.append_row(std::move(row));
    }
  }

  CostNoise noise;
  noise.levels = {params.transmit_high, params.transmit_low};
  noise.probs = {params.prob_high, 1.0 - params.prob_high};
  const double mean_transmit = noise.mean();
  const std::size_t table = static_cast<std::size_t>(n) * spec.n_states * codec.size();
  spec.costs.assign(table, 0.0);
  noise.coef.assign(table, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < spec.n_states; ++s) {
      const auto x = decode_state(s);
      for (int joint = 0; joint < codec.size(); ++joint) {
        const int own = codec.digit(joint, i);
        int others = 0;
        for (int j = 0; j < n; ++j)
          if (j != i) others += codec.digit(joint, j);
        const double alone = (own == 1 && others == 0) ? 1.0 : 0.0;
        const std::size_t k = spec.cost_index(i, s, joint);
        noise.coef[k] = alone;
        spec.costs[k] = mean_transmit * alone + params.collision_cost * own * others +
                        params.holding[i] * x[i];
      }
    }
  }
  spec.noise = std::move(noise);
  spec.validate();
  return spec;
}

namespace grid {
int manhattan(int cell_a, int cell_b) {
  return std::abs(cell_a % kSide - cell_b % kSide) + std::abs(cell_a / kSide - cell_b / kSide);
}
}  // namespace grid

namespace {

int grid_move(int c, int move) {
  int x = c % grid::kSide;
  int y = c / grid::kSide;
  switch (move) {
    case grid::Up: y = std::min(y + 1, grid::kSide - 1); break;
    case grid::Down: y = std::max(y - 1, 0); break;
    case grid::Left: x = std::max(x - 1, 0); break;
    case grid::Right: x = std::min(x + 1, grid::kSide - 1); break;
    default: break;
  }
  return grid::cell(x, y);
}

}  // namespace

MmdpSpec build_gridworld_env() {
  using namespace grid;
  MmdpSpec spec;
  spec.name = "gridworld";
  spec.n_agents = 2;
  spec.n_actions = 4;
  spec.n_states = kCells * kCells;
  spec.cost_mode = CostMode::General;
  const JointActionCodec codec = spec.codec();
  const int start = state_of(cell(0, 0), cell(0, 0));
  const int goal_cell = cell(kSide - 1, kSide - 1);

  spec.transition = TransitionKernel(spec.n_states, codec.size());
  spec.costs.assign(static_cast<std::size_t>(2) * spec.n_states * codec.size(), 0.0);
  for (int s = 0; s < spec.n_states; ++s) {
    const int c0 = cell0_of(s);
    const int c1 = cell1_of(s);
    const bool at_goal = c0 == goal_cell && c1 == goal_cell;
    double cost0 = kStageCost, cost1 = kStageCost;
    if (at_goal) {
      cost0 = cost1 = kGoalCost;
    } else if (manhattan(c0, c1) <= 1) {
      cost0 = kProximityCost;
      cost1 = -kProximityCost;
    }
    for (int joint = 0; joint < codec.size(); ++joint) {
      const int next =
          at_goal ? start : state_of(grid_move(c0, codec.digit(joint, 0)), grid_move(c1, codec.digit(joint, 1)));
      spec.transition.append_row({{next, 1.0}});
      spec.costs[spec.cost_index(0, s, joint)] = cost0;
      spec.costs[spec.cost_index(1, s, joint)] = cost1;
    }
  }
  spec.ref_state = start;
  spec.validate();
  return spec;
}

bool irreducible_under_all_policies(const MmdpSpec& spec, std::uint64_t policy_budget) {
  const auto count = deterministic_policy_count(spec);
  if (!count || *count > policy_budget)
    throw CapacityError("too many deterministic joint policies to enumerate");
  const JointActionCodec codec = spec.codec();
  Eigen::MatrixXd P(spec.n_states, spec.n_states);
  std::vector<int> actions(spec.n_agents);
  for (std::uint64_t k = 0; k < *count; ++k) {
    const JointPolicy policy = policy_from_index(spec, k);
    P.setZero();
    for (int s = 0; s < spec.n_states; ++s) {
      for (int i = 0; i < spec.n_agents; ++i) actions[i] = policy.at(s, i);
      for (const auto& t : spec.transition.row(s, codec.encode(actions))) P(s, t.next) += t.prob;
    }
    if (!markov::is_irreducible(P)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

nlohmann::json spec_to_json(const MmdpSpec& spec) {
  using nlohmann::json;
  json doc;
  doc["name"] = spec.name;
  doc["n_agents"] = spec.n_agents;
  doc["n_states"] = spec.n_states;
  doc["n_actions"] = spec.n_actions;
  doc["cost_mode"] = to_string(spec.cost_mode);
  doc["reference_pair"] = {spec.ref_state, spec.ref_action};
  const int nj = spec.n_joint();
  // Dense row-major tables while they stay small; sparse (target, prob) lists otherwise.
  const bool dense = static_cast<long>(spec.n_states) * nj * spec.n_states <= 1'000'000;
  json rows = json::array();
  for (int s = 0; s < spec.n_states; ++s) {
    for (int j = 0; j < nj; ++j) {
      if (dense) {
        std::vector<double> row(spec.n_states, 0.0);
        for (const auto& t : spec.transition.row(s, j)) row[t.next] = t.prob;
        rows.push_back(row);
      } else {
        json row = json::array();
        for (const auto& t : spec.transition.row(s, j)) row.push_back({t.next, t.prob});
        rows.push_back(row);
      }
    }
  }
  doc["transition"] = {{"format", dense ? "dense" : "sparse"}, {"rows", rows}};
  doc["costs"] = spec.costs;
  if (spec.noise) {
    doc["noise"] = {{"levels", spec.noise->levels},
                    {"probs", spec.noise->probs},
                    {"coef", spec.noise->coef}};
  }
  if (spec.has_bounds()) doc["bounds"] = spec.bounds;
  return doc;
}

MmdpSpec spec_from_json(const nlohmann::json& doc) {
  MmdpSpec spec;
  spec.name = doc.value("name", std::string("custom"));
  spec.n_agents = doc.at("n_agents").get<int>();
  spec.n_states = doc.at("n_states").get<int>();
  spec.n_actions = doc.at("n_actions").get<int>();
  spec.cost_mode = cost_mode_from_string(doc.at("cost_mode").get<std::string>());
  if (doc.contains("reference_pair")) {
    spec.ref_state = doc["reference_pair"].at(0).get<int>();
    spec.ref_action = doc["reference_pair"].at(1).get<int>();
  }
  const int nj = spec.n_joint();
  const auto& tr = doc.at("transition");
  const auto& rows = tr.at("rows");
  if (static_cast<long>(rows.size()) != static_cast<long>(spec.n_states) * nj)
    throw StructureError("transition table has the wrong number of rows");
  const bool dense = tr.at("format").get<std::string>() == "dense";
  spec.transition = TransitionKernel(spec.n_states, nj);
  for (const auto& r : rows) {
    std::vector<Transition> row;
    if (dense) {
      if (static_cast<int>(r.size()) != spec.n_states) throw StructureError("dense row has wrong length");
      for (int t = 0; t < spec.n_states; ++t) row.push_back({t, r[t].get<double>()});
    } else {
      for (const auto& e : r) row.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
    }
    spec.transition.append_row(std::move(row));
  }
  spec.costs = doc.at("costs").get<std::vector<double>>();
  if (doc.contains("noise")) {
    const auto& nz = doc["noise"];
    spec.noise = CostNoise{nz.at("levels").get<std::vector<double>>(),
                           nz.at("probs").get<std::vector<double>>(),
                           nz.at("coef").get<std::vector<double>>()};
  }
  if (doc.contains("bounds")) spec.bounds = doc["bounds"].get<std::vector<double>>();
  spec.validate();
  return spec;
}

}  // namespace satq
