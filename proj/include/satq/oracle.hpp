#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "satq/env.hpp"

namespace satq {

inline constexpr std::uint64_t kPolicyBudget = 1'000'000;
inline constexpr int kMaxDenseStates = 4096;

struct PolicyEvaluation {
  Eigen::VectorXd stationary;
  std::vector<double> avg_cost;  // g^i(pi), per-step randomness averaged out
};

// Transition matrix P_pi and expected per-state costs under a policy.
struct InducedChain {
  Eigen::MatrixXd P;
  Eigen::MatrixXd cost;  // [agent][state]
};

InducedChain induced_chain(const MmdpSpec& spec, const JointPolicy& policy);
InducedChain induced_chain(const MmdpSpec& spec, const ProductPolicy& policy);

// Exact long-run average cost of every agent. The induced chain must have a
// single closed class (transient states are allowed); otherwise the average
// depends on the start state and StructureError is thrown. CapacityError past
// kMaxDenseStates states.
PolicyEvaluation evaluate_policy(const MmdpSpec& spec, const JointPolicy& policy);
PolicyEvaluation evaluate_policy(const MmdpSpec& spec, const ProductPolicy& policy);

// Some deterministic joint policy meeting every bound, scanning policies in
// index order. CapacityError when the policy count exceeds `budget`.
std::optional<JointPolicy> check_feasibility(const MmdpSpec& spec, std::uint64_t budget = kPolicyBudget);

// Point of the truncated simplex {w : sum w = 1, w(i) >= eps}.
struct TruncatedSimplexPoint {
  std::vector<double> w;
  double eps = 0.0;

  bool valid(double tol = 1e-12) const;
};

struct SaddleResult {
  JointPolicy policy;
  TruncatedSimplexPoint weights;
  double value = 0.0;            // sum_i w(i) (g^i - beta^i)
  double worst_violation = 0.0;  // max_i (g^i - beta^i)
  double theorem_bound = 0.0;    // eps / (1 - N eps) * sum_i (beta^i - min c^i)
  std::vector<double> avg_cost;
};

// eps / (1 - N eps) * sum_i (beta^i - min_{s,a} c^i(s,a))
double theorem_bound(const MmdpSpec& spec, double eps);

// Vertex of the truncated simplex maximising sum_i w(i) d(i): 1 - (N-1) eps on
// the first maximiser of d, eps elsewhere.
TruncatedSimplexPoint truncated_argmax(std::span<const double> deviations, double eps);

// min over deterministic joint policies of max over the truncated simplex.
// Ties between policies go to the lowest policy index. Throws ArgumentError
// for eps outside [0, 1/N) and CapacityError past `budget`.
SaddleResult solve_saddle(const MmdpSpec& spec, double eps, std::uint64_t budget = kPolicyBudget);

struct RandomizedSaddle {
  double deterministic_value = 0.0;
  double randomized_value = 0.0;
  double gap = 0.0;  // deterministic - randomized, >= 0 up to round-off
  ProductPolicy best;
};

// Grid search over randomised product policies (|A| = 2; each agent's
// probability of action 1 per state on `grid_points` evenly spaced values),
// reported against the deterministic saddle value.
RandomizedSaddle randomized_saddle_gap(const MmdpSpec& spec, double eps, int grid_points,
                                       std::uint64_t budget = kPolicyBudget);

// Replicator vector field with uniform mutation over agent i and its
// `neighborhood_size` = |N(i)| neighbours, d = 1 + |N(i)| entries:
//   f_j = p_j (m_j - sum_k m_k p_k) + (1/d - p_j)
std::vector<double> replicator_field(std::span<const double> p, std::span<const double> payoffs,
                                     int neighborhood_size);

// Forward Euler from p0 (steps + 1 points, p0 first). dt must lie in
// (0, 1e-2]; NumericError if an iterate leaves the simplex.
std::vector<std::vector<double>> replicator_integrate(std::span<const double> p0,
                                                      std::span<const double> payoffs, double dt,
                                                      long steps);

}  // namespace satq
