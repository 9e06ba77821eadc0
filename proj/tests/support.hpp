#pragma once

#include <Eigen/Dense>
#include <vector>

#include "satq/env.hpp"
#include "satq/random.hpp"

namespace satq::test {

// Builds an MMDP from dense rows indexed [state * |J| + joint][next].
inline MmdpSpec make_spec(int n_agents, int n_states, int n_actions, CostMode mode,
                          const std::vector<std::vector<double>>& rows, std::vector<double> costs,
                          std::vector<double> bounds = {}) {
  MmdpSpec spec;
  spec.name = "test";
  spec.n_agents = n_agents;
  spec.n_states = n_states;
  spec.n_actions = n_actions;
  spec.cost_mode = mode;
  spec.transition = TransitionKernel(n_states, spec.n_joint());
  for (const auto& r : rows) {
    std::vector<Transition> row;
    for (int t = 0; t < n_states; ++t) row.push_back({t, r[t]});
    spec.transition.append_row(std::move(row));
  }
  spec.costs = std::move(costs);
  spec.bounds = std::move(bounds);
  spec.validate();
  return spec;
}

// Random instance with strictly positive rows, Simple-mode costs on [0, 10].
inline MmdpSpec random_spec(int n_agents, int n_states, int n_actions, Rng& rng) {
  const int joint = JointActionCodec(n_agents, n_actions).size();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n_states) * joint);
  for (auto& r : rows) {
    r.resize(n_states);
    double sum = 0.0;
    for (auto& p : r) sum += (p = rng.uniform_open_zero());
    for (auto& p : r) p /= sum;
  }
  std::vector<double> costs(static_cast<std::size_t>(n_agents) * n_states * n_actions);
  for (auto& c : costs) c = rng.uniform(0.0, 10.0);
  return make_spec(n_agents, n_states, n_actions, CostMode::Simple, rows, std::move(costs));
}

// Random feasible instance: bounds sit a random margin in [0, 1] above the
// exact averages of a uniformly drawn deterministic policy.
inline MmdpSpec random_feasible(int n_agents, int n_states, Rng& rng) {
  MmdpSpec spec = random_spec(n_agents, n_states, 2, rng);
  const auto count = *deterministic_policy_count(spec);
  const JointPolicy ref = policy_from_index(spec, static_cast<std::uint64_t>(rng.index(static_cast<int>(count))));
  spec = calibrate_bounds(spec, ref, 0.0);
  for (auto& b : spec.bounds) b += rng.uniform(0.0, 1.0);
  return spec;
}

// Stationary law of a dense chain by the eigenvector of P^T for eigenvalue 1,
// independent of the library's state-reduction path.
inline Eigen::VectorXd eigen_stationary(const Eigen::MatrixXd& P) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(P.transpose());
  int best = 0;
  for (int k = 1; k < es.eigenvalues().size(); ++k)
    if (std::abs(es.eigenvalues()[k] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = k;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

}  // namespace satq::test
