#include "satq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "satq/errors.hpp"
#include "satq/markov.hpp"

namespace satq {

namespace {

void check_dense_capacity(const MmdpSpec& spec) {
  if (spec.n_states > kMaxDenseStates)
    throw CapacityError("exact evaluation limited to " + std::to_string(kMaxDenseStates) + " states");
}

std::uint64_t enumerable_policy_count(const MmdpSpec& spec, std::uint64_t budget) {
  const auto count = deterministic_policy_count(spec);
  if (!count || *count > budget)
    throw CapacityError("deterministic joint policies exceed the enumeration budget of " +
                        std::to_string(budget));
  return *count;
}

PolicyEvaluation evaluate_chain(const InducedChain& chain) {
  const int classes = markov::closed_class_count(chain.P);
  if (classes != 1)
    throw StructureError("induced chain has " + std::to_string(classes) +
                         " closed classes; the average cost depends on the start state");
  PolicyEvaluation ev;
  ev.stationary = markov::solve_stationary(chain.P);
  if (markov::stationary_residual(chain.P, ev.stationary) > 1e-9)
    throw NumericError("stationary solve for the induced chain is inaccurate");
  const Eigen::VectorXd g = chain.cost * ev.stationary;
  ev.avg_cost.assign(g.data(), g.data() + g.size());
  return ev;
}

}  // namespace

InducedChain induced_chain(const MmdpSpec& spec, const JointPolicy& policy) {
  check_dense_capacity(spec);
  if (policy.n_states != spec.n_states || policy.n_agents != spec.n_agents ||
      policy.actions.size() != static_cast<std::size_t>(spec.n_states) * spec.n_agents)
    throw ArgumentError("policy shape does not match the MMDP");
  const JointActionCodec codec = spec.codec();
  InducedChain chain{Eigen::MatrixXd::Zero(spec.n_states, spec.n_states),
                     Eigen::MatrixXd::Zero(spec.n_agents, spec.n_states)};
  std::vector<int> actions(spec.n_agents);
  for (int s = 0; s < spec.n_states; ++s) {
    for (int i = 0; i < spec.n_agents; ++i) actions[i] = policy.at(s, i);
    const int joint = codec.encode(actions);
    for (const auto& t : spec.transition.row(s, joint)) chain.P(s, t.next) += t.prob;
    for (int i = 0; i < spec.n_agents; ++i) chain.cost(i, s) = spec.expected_cost(i, s, joint);
  }
  return chain;
}

InducedChain induced_chain(const MmdpSpec& spec, const ProductPolicy& policy) {
  check_dense_capacity(spec);
  if (policy.n_states != spec.n_states || policy.n_agents != spec.n_agents ||
      policy.n_actions != spec.n_actions)
    throw ArgumentError("policy shape does not match the MMDP");
  const JointActionCodec codec = spec.codec();
  InducedChain chain{Eigen::MatrixXd::Zero(spec.n_states, spec.n_states),
                     Eigen::MatrixXd::Zero(spec.n_agents, spec.n_states)};
  for (int s = 0; s < spec.n_states; ++s) {
    for (int joint = 0; joint < codec.size(); ++joint) {
      double w = 1.0;
      for (int i = 0; i < spec.n_agents && w > 0.0; ++i) w *= policy.prob(s, i, codec.digit(joint, i));
      if (w == 0.0) continue;
      for (const auto& t : spec.transition.row(s, joint)) chain.P(s, t.next) += w * t.prob;
      for (int i = 0; i < spec.n_agents; ++i) chain.cost(i, s) += w * spec.expected_cost(i, s, joint);
    }
  }
  return chain;
}

PolicyEvaluation evaluate_policy(const MmdpSpec& spec, const JointPolicy& policy) {
  return evaluate_chain(induced_chain(spec, policy));
}

PolicyEvaluation evaluate_policy(const MmdpSpec& spec, const ProductPolicy& policy) {
  return evaluate_chain(induced_chain(spec, policy));
}

MmdpSpec calibrate_bounds(MmdpSpec spec, const JointPolicy& reference, double margin) {
  const auto ev = evaluate_policy(spec, reference);
  spec.bounds = ev.avg_cost;
  for (auto& b : spec.bounds) b += margin;
  return spec;
}

MmdpSpec calibrate_bounds(MmdpSpec spec, const ProductPolicy& reference, double margin) {
  const auto ev = evaluate_policy(spec, reference);
  spec.bounds = ev.avg_cost;
  for (auto& b : spec.bounds) b += margin;
  return spec;
}

std::optional<JointPolicy> check_feasibility(const MmdpSpec& spec, std::uint64_t budget) {
  if (!spec.has_bounds()) throw ArgumentError("feasibility check needs bounds");
  const std::uint64_t count = enumerable_policy_count(spec, budget);
  for (std::uint64_t k = 0; k < count; ++k) {
    JointPolicy policy = policy_from_index(spec, k);
    const auto chain = induced_chain(spec, policy);
    if (markov::closed_class_count(chain.P) != 1) continue;
    const auto ev = evaluate_chain(chain);
    bool ok = true;
    for (int i = 0; i < spec.n_agents && ok; ++i) ok = ev.avg_cost[i] <= spec.bounds[i];
    if (ok) return policy;
  }
  return std::nullopt;
}

bool TruncatedSimplexPoint::valid(double tol) const {
  double sum = 0.0;
  for (double x : w) {
    if (x < eps - tol) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tol;
}

double theorem_bound(const MmdpSpec& spec, double eps) {
  const int N = spec.n_agents;
  double slack = 0.0;
  for (int i = 0; i < N; ++i) slack += spec.bounds[i] - spec.min_cost(i);
  return eps / (1.0 - N * eps) * slack;
}

TruncatedSimplexPoint truncated_argmax(std::span<const double> deviations, double eps) {
  const int N = static_cast<int>(deviations.size());
  const int top = static_cast<int>(std::max_element(deviations.begin(), deviations.end()) - deviations.begin());
  TruncatedSimplexPoint point{std::vector<double>(N, eps), eps};
  point.w[top] = 1.0 - (N - 1) * eps;
  return point;
}

SaddleResult solve_saddle(const MmdpSpec& spec, double eps, std::uint64_t budget) {
  const int N = spec.n_agents;
  if (!spec.has_bounds()) throw ArgumentError("saddle point needs bounds");
  if (!(eps >= 0.0 && eps * N < 1.0)) throw ArgumentError("eps must lie in [0, 1/N)");
  const std::uint64_t count = enumerable_policy_count(spec, budget);

  SaddleResult best;
  best.value = std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<double> dev(N);
  for (std::uint64_t k = 0; k < count; ++k) {
    JointPolicy policy = policy_from_index(spec, k);
    const auto chain = induced_chain(spec, policy);
    if (markov::closed_class_count(chain.P) != 1) continue;
    const auto ev = evaluate_chain(chain);
    for (int i = 0; i < N; ++i) dev[i] = ev.avg_cost[i] - spec.bounds[i];
    TruncatedSimplexPoint w = truncated_argmax(dev, eps);
    double value = 0.0;
    for (int i = 0; i < N; ++i) value += w.w[i] * dev[i];
    if (value < best.value) {
      found = true;
      best.policy = std::move(policy);
      best.weights = std::move(w);
      best.value = value;
      best.worst_violation = *std::max_element(dev.begin(), dev.end());
      best.avg_cost = ev.avg_cost;
    }
  }
  if (!found) throw StructureError("no deterministic joint policy induces a single-class chain");
  best.theorem_bound = theorem_bound(spec, eps);
  // The bound follows from value <= 0; failing it there means a bug, not bad data.
  if (best.value <= 0.0 && best.worst_violation > best.theorem_bound + 1e-9)
    throw NumericError("saddle policy violates the O(eps) bound on a feasible instance");
  return best;
}

RandomizedSaddle randomized_saddle_gap(const MmdpSpec& spec, double eps, int grid_points,
                                       std::uint64_t budget) {
  if (spec.n_actions != 2) throw ArgumentError("randomised grid search supports two actions only");
  if (grid_points < 2) throw ArgumentError("grid needs at least 2 points");
  const int N = spec.n_agents;
  const int digits = N * spec.n_states;
  std::uint64_t combos = 1;
  for (int d = 0; d < digits; ++d) {
    combos *= static_cast<std::uint64_t>(grid_points);
    if (combos > budget) throw CapacityError("randomised grid exceeds the enumeration budget");
  }
  RandomizedSaddle out;
  out.deterministic_value = solve_saddle(spec, eps, budget).value;
  out.randomized_value = std::numeric_limits<double>::infinity();
  ProductPolicy policy{spec.n_states, N, 2, std::vector<double>(static_cast<std::size_t>(digits) * 2)};
  std::vector<double> dev(N);
  for (std::uint64_t k = 0; k < combos; ++k) {
    std::uint64_t rest = k;
    for (int d = 0; d < digits; ++d) {
      const double p1 = static_cast<double>(rest % grid_points) / (grid_points - 1);
      rest /= grid_points;
      policy.probs[2 * d] = 1.0 - p1;
      policy.probs[2 * d + 1] = p1;
    }
    const auto chain = induced_chain(spec, policy);
    if (markov::closed_class_count(chain.P) != 1) continue;
    const auto ev = evaluate_chain(chain);
    for (int i = 0; i < N; ++i) dev[i] = ev.avg_cost[i] - spec.bounds[i];
    const auto w = truncated_argmax(dev, eps);
    double value = 0.0;
    for (int i = 0; i < N; ++i) value += w.w[i] * dev[i];
    if (value < out.randomized_value) {
      out.randomized_value = value;
      out.best = policy;
    }
  }
  out.gap = out.deterministic_value - out.randomized_value;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> replicator_field(std::span<const double> p, std::span<const double> payoffs,
                                     int neighborhood_size) {
  const std::size_t d = static_cast<std::size_t>(neighborhood_size) + 1;
  if (neighborhood_size < 0 || p.size() != d || payoffs.size() != d)
    throw ArgumentError("replicator inputs must have 1 + |N(i)| entries");
  double mean = 0.0;
  for (std::size_t k = 0; k < d; ++k) mean += payoffs[k] * p[k];
  const double mutation = 1.0 / static_cast<double>(d);
  std::vector<double> f(d);
  for (std::size_t j = 0; j < d; ++j) f[j] = p[j] * (payoffs[j] - mean) + (mutation - p[j]);
  return f;
}

std::vector<std::vector<double>> replicator_integrate(std::span<const double> p0,
                                                      std::span<const double> payoffs, double dt,
                                                      long steps) {
  if (!(dt > 0.0 && dt <= 1e-2)) throw ArgumentError("dt must lie in (0, 1e-2]");
  if (steps < 0) throw ArgumentError("steps must be nonnegative");
  if (p0.empty()) throw ArgumentError("empty starting point");
  const double sum0 = std::accumulate(p0.begin(), p0.end(), 0.0);
  if (std::abs(sum0 - 1.0) > 1e-9 || *std::min_element(p0.begin(), p0.end()) < 0.0)
    throw ArgumentError("starting point is not on the simplex");
  const int nb = static_cast<int>(p0.size()) - 1;

  constexpr double kExitTol = 1e-9;
  std::vector<std::vector<double>> path;
  path.reserve(static_cast<std::size_t>(steps) + 1);
  path.emplace_back(p0.begin(), p0.end());
  std::vector<double> p(p0.begin(), p0.end());
  for (long k = 0; k < steps; ++k) {
    const auto f = replicator_field(p, payoffs, nb);
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] += dt * f[j];
      if (p[j] < -kExitTol) throw NumericError("replicator iterate left the simplex");
      sum += p[j];
    }
    if (std::abs(sum - 1.0) > kExitTol * 1e3) throw NumericError("replicator iterate lost simplex mass");
    if (std::abs(sum - 1.0) > 1e-12) {
      for (auto& x : p) x = std::max(x, 0.0) / sum;
    }
    path.push_back(p);
  }
  return path;
}

}  // namespace satq
