#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "satq/env.hpp"
#include "satq/errors.hpp"
#include "satq/oracle.hpp"
#include "support.hpp"

using namespace satq;
using satq::test::make_spec;

namespace {

// Two states, one agent, two actions; p(stay) = 0.7 for every action.
MmdpSpec sticky_chain() {
  return make_spec(1, 2, 2, CostMode::Simple, {{0.7, 0.3}, {0.7, 0.3}, {0.3, 0.7}, {0.3, 0.7}},
                   {0.0, 0.0, 0.0, 0.0});
}

double row_sum(const MmdpSpec& spec, int s, int joint) {
  double sum = 0.0;
  for (const auto& t : spec.transition.row(s, joint)) sum += t.prob;
  return sum;
}

}  // namespace

TEST(Codec, RoundTripAndAgentZeroLeastSignificant) {
  const JointActionCodec codec(3, 2);
  EXPECT_EQ(codec.size(), 8);
  const std::vector<int> a{1, 0, 1};
  EXPECT_EQ(codec.encode(a), 5);
  EXPECT_EQ(codec.decode(5), a);
  EXPECT_EQ(codec.replace(5, 1, 1), 7);
  EXPECT_THROW(codec.encode(std::vector<int>{2, 0, 0}), ArgumentError);
}

TEST(Step, DegenerateKernelAlwaysLandsOnTarget) {
  const auto spec = make_spec(1, 3, 1, CostMode::Simple, {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}}, {1, 2, 3});
  EnvState st = initial_env_state(spec, Rng(5));
  for (int k = 0; k < 100; ++k) {
    step(spec, st, std::vector<int>{0});
    EXPECT_EQ(st.state, 2);
  }
  EXPECT_EQ(st.step_count, 100u);
}

TEST(Step, ZeroCostsGiveZeroVector) {
  const auto spec = make_spec(2, 1, 2, CostMode::Simple, {{1}, {1}, {1}, {1}}, std::vector<double>(4, 0.0));
  EnvState st = initial_env_state(spec, Rng(1));
  EXPECT_EQ(step(spec, st, std::vector<int>{1, 0}), (std::vector<double>{0.0, 0.0}));
}

TEST(Step, SelfTransitionFrequencyMatchesKernel) {
  const auto spec = sticky_chain();
  EnvState st = initial_env_state(spec, Rng(42));
  int stays = 0;
  const int n = 100'000;
  for (int k = 0; k < n; ++k) {
    st.state = 0;
    step(spec, st, std::vector<int>{k % 2});
    stays += st.state == 0;
  }
  EXPECT_NEAR(static_cast<double>(stays) / n, 0.7, 0.01);
}

TEST(Step, OutOfRangeActionRejected) {
  const auto spec = sticky_chain();
  EnvState st = initial_env_state(spec, Rng(1));
  EXPECT_THROW(step(spec, st, std::vector<int>{2}), ArgumentError);
  EXPECT_THROW(step(spec, st, std::vector<int>{0, 0}), ArgumentError);
}

TEST(SampleNext, DegenerateRow) {
  const auto spec = make_spec(1, 2, 1, CostMode::Simple, {{0, 1}, {0, 1}}, {0, 0});
  Rng rng(3);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(sample_next(spec, 0, std::vector<int>{0}, rng), 1);
}

TEST(SampleNext, UniformRowFrequencies) {
  std::vector<std::vector<double>> rows(4, std::vector<double>(4, 0.25));
  const auto spec = make_spec(1, 4, 1, CostMode::Simple, rows, std::vector<double>(4, 0.0));
  Rng rng(11);
  std::vector<int> hits(4, 0);
  const int n = 100'000;
  for (int k = 0; k < n; ++k) ++hits[sample_next(spec, 2, std::vector<int>{0}, rng)];
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / n, 0.25, 0.01);
}

TEST(SampleNext, DeterministicForSeedAndDoesNotTouchEnvState) {
  const auto spec = sticky_chain();
  Rng a(99), b(99);
  for (int k = 0; k < 100; ++k)
    EXPECT_EQ(sample_next(spec, k % 2, std::vector<int>{0}, a), sample_next(spec, k % 2, std::vector<int>{0}, b));
  Rng c(1);
  EXPECT_THROW(sample_next(spec, 2, std::vector<int>{0}, c), ArgumentError);
  EXPECT_THROW(sample_next(spec, 0, std::vector<int>{5}, c), ArgumentError);
}

TEST(XorMdp, ParityDrivesKernel) {
  const auto spec = build_xor_mdp(7, 2, CostMode::Simple, 1);
  const auto codec = spec.codec();
  std::vector<int> zeros(7, 0), ones(7, 1), one_flip(7, 0);
  one_flip[3] = 1;
  for (int s = 0; s < 2; ++s) {
    for (int t = 0; t < 2; ++t) {
      // All ones with N = 7 has odd parity, same as a single flipped action.
      EXPECT_EQ(spec.transition.prob(s, codec.encode(ones), t), spec.transition.prob(s, codec.encode(one_flip), t));
    }
    EXPECT_NE(spec.transition.prob(s, codec.encode(zeros), 0), spec.transition.prob(s, codec.encode(one_flip), 0));
  }
}

TEST(XorMdp, CostsInRangeRowsStochasticBoundsUnset) {
  for (int S : {2, 10}) {
    const auto spec = build_xor_mdp(7, S, CostMode::Simple, 7);
    for (double c : spec.costs) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 10.0);
    }
    for (int s = 0; s < S; ++s)
      for (int j = 0; j < spec.n_joint(); ++j) EXPECT_NEAR(row_sum(spec, s, j), 1.0, 1e-12);
    EXPECT_FALSE(spec.has_bounds());
  }
  const auto general = build_xor_mdp(3, 2, CostMode::General, 1);
  EXPECT_EQ(general.costs.size(), 3u * 2u * 8u);
  EXPECT_THROW(build_xor_mdp(3, 1, CostMode::Simple, 1), ArgumentError);
}

TEST(XorMdp, KernelInvariantUnderParityPreservingChanges) {
  const auto spec = build_xor_mdp(4, 3, CostMode::Simple, 2);
  const auto codec = spec.codec();
  for (int a = 0; a < codec.size(); ++a)
    for (int b = 0; b < codec.size(); ++b) {
      if (__builtin_popcount(a) % 2 != __builtin_popcount(b) % 2) continue;
      for (int s = 0; s < 3; ++s)
        for (int t = 0; t < 3; ++t) EXPECT_EQ(spec.transition.prob(s, a, t), spec.transition.prob(s, b, t));
    }
}

TEST(XorMdp, IrreducibleUnderEveryPolicy) {
  EXPECT_TRUE(irreducible_under_all_policies(build_xor_mdp(2, 2, CostMode::Simple, 3)));
  EXPECT_THROW(irreducible_under_all_policies(build_xor_mdp(7, 10, CostMode::Simple, 3)), CapacityError);
}

TEST(CalibrateBounds, MarginZeroGivesEquality) {
  const auto spec = build_xor_mdp(3, 2, CostMode::Simple, 4);
  const JointPolicy ref = policy_from_index(spec, 5);
  const auto calibrated = calibrate_bounds(spec, ref, 0.0);
  const auto g = evaluate_policy(calibrated, ref).avg_cost;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(g[i], calibrated.bounds[i], 1e-12);
}

TEST(CalibrateBounds, MarginPointOneIsFeasibleByConstruction) {
  const auto spec = calibrate_bounds(build_xor_mdp(2, 2, CostMode::Simple, 8), policy_from_index(build_xor_mdp(2, 2, CostMode::Simple, 8), 3), 0.1);
  const auto g = evaluate_policy(spec, policy_from_index(spec, 3)).avg_cost;
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(spec.bounds[i] - g[i], 0.1, 1e-12);
  EXPECT_TRUE(check_feasibility(spec).has_value());
}

TEST(CalibrateBounds, ConstantCostGivesConstantPlusMargin) {
  Rng rng(1);
  auto spec = test::random_spec(2, 3, 2, rng);
  std::fill(spec.costs.begin(), spec.costs.end(), 4.0);
  const auto out = calibrate_bounds(spec, policy_from_index(spec, 17), 0.25);
  for (double b : out.bounds) EXPECT_NEAR(b, 4.25, 1e-12);
}

TEST(CalibrateBounds, ReducibleReferenceRejected) {
  // Two absorbing states: the average depends on where the chain starts.
  const auto spec = make_spec(1, 2, 1, CostMode::Simple, {{1, 0}, {0, 1}}, {0, 1});
  EXPECT_THROW(calibrate_bounds(spec, policy_from_index(spec, 0), 0.1), StructureError);
}

TEST(Queueing, CollisionCostExample) {
  const auto spec = build_queueing_env();
  EXPECT_EQ(spec.n_states, 81);
  EXPECT_EQ(spec.n_agents, 4);
  const int all_one = 1 + 3 + 9 + 27;
  const int all_transmit = spec.codec().encode(std::vector<int>{1, 1, 1, 1});
  EXPECT_NEAR(spec.expected_cost(0, all_one, all_transmit), 3.3, 1e-12);
  // The channel quality only enters through a lone transmission.
  for (int level = 0; level < 2; ++level) EXPECT_NEAR(realized_cost(spec, 0, all_one, all_transmit, level), 3.3, 1e-12);
}

TEST(Queueing, EmptyIdleNoArrivalsIsFree) {
  const auto spec = build_queueing_env();
  for (int i = 0; i < 4; ++i) EXPECT_EQ(spec.expected_cost(i, 0, 0), 0.0);
  const double none = (1 - 0.35) * (1 - 0.30) * (1 - 0.25) * (1 - 0.20);
  EXPECT_NEAR(spec.transition.prob(0, 0, 0), none, 1e-15);
}

TEST(Queueing, LoneTransmissionPaysChannelLevel) {
  const auto spec = build_queueing_env();
  const int joint = spec.codec().encode(std::vector<int>{1, 0, 0, 0});
  const int s = 2;  // agent 0 holds two packets
  EXPECT_NEAR(realized_cost(spec, 0, s, joint, 0), 0.8 + 0.3 * 2, 1e-12);
  EXPECT_NEAR(realized_cost(spec, 0, s, joint, 1), 0.2 + 0.3 * 2, 1e-12);
  EXPECT_NEAR(spec.expected_cost(0, s, joint), 0.5 + 0.6, 1e-12);
}

TEST(Queueing, CollisionCostsMoreThanTransmission) {
  const QueueingParams p;
  const double mean_transmit = p.transmit_high * p.prob_high + p.transmit_low * (1 - p.prob_high);
  EXPECT_DOUBLE_EQ(mean_transmit, 0.5);
  EXPECT_GT(p.collision_cost, mean_transmit);
}

TEST(Queueing, LevelsStayInBufferAndIdleQueuesFill) {
  const auto spec = build_queueing_env();
  EnvState st = initial_env_state(spec, Rng(17));
  std::vector<bool> reached(4, false);
  for (int k = 0; k < 10'000; ++k) {
    step(spec, st, std::vector<int>{0, 0, 0, 0});
    int s = st.state;
    for (int i = 0; i < 4; ++i, s /= 3) {
      const int x = s % 3;
      ASSERT_LE(x, 2);
      reached[i] = reached[i] || x == 2;
    }
  }
  for (bool r : reached) EXPECT_TRUE(r);
}

TEST(Gridworld, GoalPaysAndResets) {
  const auto spec = build_gridworld_env();
  EXPECT_EQ(spec.n_states, 1296);
  const int goal = grid::cell(5, 5);
  const int s = grid::state_of(goal, goal);
  for (int joint = 0; joint < spec.n_joint(); ++joint) {
    EXPECT_EQ(spec.expected_cost(0, s, joint), -10.0);
    EXPECT_EQ(spec.expected_cost(1, s, joint), -10.0);
    EXPECT_EQ(spec.transition.prob(s, joint, grid::state_of(grid::cell(0, 0), grid::cell(0, 0))), 1.0);
  }
}

TEST(Gridworld, StageAndProximityCosts) {
  const auto spec = build_gridworld_env();
  const int far = grid::state_of(grid::cell(0, 0), grid::cell(2, 1));
  EXPECT_EQ(spec.expected_cost(0, far, 0), 0.5);
  EXPECT_EQ(spec.expected_cost(1, far, 0), 0.5);
  const int adjacent = grid::state_of(grid::cell(2, 2), grid::cell(2, 3));
  EXPECT_EQ(spec.expected_cost(0, adjacent, 0), 1.0);
  EXPECT_EQ(spec.expected_cost(1, adjacent, 0), -1.0);
}

TEST(Gridworld, OffGridMoveIsNoOp) {
  const auto spec = build_gridworld_env();
  const int s = grid::state_of(grid::cell(0, 0), grid::cell(3, 3));
  const int joint = spec.codec().encode(std::vector<int>{grid::Left, grid::Up});
  EXPECT_EQ(spec.transition.prob(s, joint, grid::state_of(grid::cell(0, 0), grid::cell(3, 4))), 1.0);
}

TEST(Gridworld, PositionsValidAndResetOnlyFromGoal) {
  const auto spec = build_gridworld_env();
  const int start = grid::state_of(grid::cell(0, 0), grid::cell(0, 0));
  const int goal = grid::state_of(grid::cell(5, 5), grid::cell(5, 5));
  EnvState st = initial_env_state(spec, Rng(23));
  Rng pick(5);
  int resets = 0;
  for (int k = 0; k < 50'000; ++k) {
    const int before = st.state;
    // Bias towards up/right so the goal is visited.
    const std::vector<int> a{pick.bernoulli(0.7) ? (pick.bernoulli(0.5) ? grid::Up : grid::Right) : pick.index(4),
                             pick.bernoulli(0.7) ? (pick.bernoulli(0.5) ? grid::Up : grid::Right) : pick.index(4)};
    step(spec, st, a);
    ASSERT_GE(st.state, 0);
    ASSERT_LT(st.state, spec.n_states);
    if (before == goal) {
      EXPECT_EQ(st.state, start);
      ++resets;
    } else {
      // Away from the goal each agent moves at most one cell.
      EXPECT_LE(grid::manhattan(grid::cell0_of(before), grid::cell0_of(st.state)), 1);
      EXPECT_LE(grid::manhattan(grid::cell1_of(before), grid::cell1_of(st.state)), 1);
    }
  }
  EXPECT_GT(resets, 0);
}

TEST(Environments, EveryRowSumsToOne) {
  for (const auto& spec : {build_xor_mdp(3, 4, CostMode::General, 2), build_queueing_env(), build_gridworld_env()})
    for (int s = 0; s < spec.n_states; ++s)
      for (int j = 0; j < spec.n_joint(); ++j) ASSERT_NEAR(row_sum(spec, s, j), 1.0, 1e-12);
}

TEST(Environments, IdenticalSeedAndActionsGiveIdenticalTraces) {
  const auto spec = build_queueing_env();
  EnvState a = initial_env_state(spec, Rng(7)), b = initial_env_state(spec, Rng(7));
  Rng pick(2);
  for (int k = 0; k < 1000; ++k) {
    const std::vector<int> act{pick.index(2), pick.index(2), pick.index(2), pick.index(2)};
    EXPECT_EQ(step(spec, a, act), step(spec, b, act));
    EXPECT_EQ(a.state, b.state);
  }
}

TEST(Environments, SpecJsonRoundTrip) {
  for (const auto& spec : {build_xor_mdp(3, 2, CostMode::Simple, 9), build_queueing_env()}) {
    const MmdpSpec back = spec_from_json(spec_to_json(spec));
    EXPECT_EQ(back.costs, spec.costs);
    EXPECT_EQ(back.n_states, spec.n_states);
    EXPECT_EQ(back.noise.has_value(), spec.noise.has_value());
    for (int s = 0; s < spec.n_states; ++s)
      for (int j = 0; j < spec.n_joint(); ++j)
        for (int t = 0; t < spec.n_states; ++t)
          ASSERT_EQ(back.transition.prob(s, j, t), spec.transition.prob(s, j, t));
  }
}

TEST(Validation, RejectsBadRowsAndCosts) {
  EXPECT_THROW(make_spec(1, 2, 1, CostMode::Simple, {{0.5, 0.4}, {0, 1}}, {0, 0}), StructureError);
  EXPECT_THROW(make_spec(1, 2, 1, CostMode::Simple, {{1, 0}, {0, 1}}, {0, NAN}), ArgumentError);
  EXPECT_THROW(make_spec(1, 2, 1, CostMode::Simple, {{1, 0}, {0, 1}}, {0}), StructureError);
}

TEST(Policies, IndexRoundTrip) {
  const auto spec = build_xor_mdp(3, 2, CostMode::Simple, 1);
  EXPECT_EQ(*deterministic_policy_count(spec), 64u);
  for (std::uint64_t k = 0; k < 64; ++k) EXPECT_EQ(policy_index(spec, policy_from_index(spec, k)), k);
  const JointPolicy zero = policy_from_index(spec, 0);
  EXPECT_TRUE(std::all_of(zero.actions.begin(), zero.actions.end(), [](int a) { return a == 0; }));
  EXPECT_THROW(policy_from_index(spec, 64), ArgumentError);
}
