#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "satq/errors.hpp"
#include "satq/learner.hpp"
#include "satq/oracle.hpp"
#include "support.hpp"

using namespace satq;
using satq::test::make_spec;

namespace {

// Single agent, two states, two actions.
MmdpSpec small_mdp() {
  return make_spec(1, 2, 2, CostMode::Simple, {{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}},
                   {1.0, 4.0, 6.0, 2.5}, {10.0});
}

// Average cost of a stationary policy on a 2-state chain, closed form:
// mu(0) = p10 / (p01 + p10).
double two_state_average(const MmdpSpec& spec, int a0, int a1) {
  const double p01 = spec.transition.prob(0, a0, 1);
  const double p10 = spec.transition.prob(1, a1, 0);
  const double mu0 = p10 / (p01 + p10);
  return mu0 * spec.costs[spec.cost_index(0, 0, a0)] + (1 - mu0) * spec.costs[spec.cost_index(0, 1, a1)];
}

std::shared_ptr<const MmdpSpec> xor_instance(int N, int S, std::uint64_t seed) {
  auto spec = build_xor_mdp(N, S, CostMode::Simple, seed);
  return std::make_shared<const MmdpSpec>(calibrate_bounds(spec, policy_from_index(spec, 0), 0.1));
}

}  // namespace

TEST(Schedule, DefaultsAndFirstUpdate) {
  const StepSchedule s;
  EXPECT_DOUBLE_EQ(s.gamma1(0), 1.0);
  EXPECT_DOUBLE_EQ(s.gamma1(1), 1.0);
  EXPECT_NEAR(s.gamma1(100), std::pow(100.0, -0.8), 1e-15);
  EXPECT_NEAR(s.gamma2(100), std::pow(100.0, -0.9), 1e-15);
  EXPECT_NEAR(s.gamma3(100), 0.01, 1e-15);
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW((StepSchedule{0.9, 0.8, 1.0}.validate()), ArgumentError);
  EXPECT_THROW((StepSchedule{0.4, 0.8, 1.0}.validate()), ArgumentError);
}

TEST(Schedule, TimescaleOrdering) {
  const StepSchedule s;
  double prev32 = 1.0, prev21 = 1.0;
  for (std::uint64_t n : {100ull, 10'000ull, 1'000'000ull}) {
    const double r32 = s.gamma3(n) / s.gamma2(n);
    const double r21 = s.gamma2(n) / s.gamma1(n);
    EXPECT_LT(r32, prev32);
    EXPECT_LT(r21, prev21);
    prev32 = r32;
    prev21 = r21;
  }
  EXPECT_LT(prev32, 0.3);
  EXPECT_LT(prev21, 0.3);
}

TEST(QUpdate, ZeroTableZeroCostUnchanged) {
  const auto spec = small_mdp();
  const CommGraph g(1, {});
  AgentState a = make_agent(spec, g, 0);
  const Table before = a.q;
  q_update(a, before, {1, 0}, 0, StepSchedule{}, {0, 0});
  EXPECT_EQ(a.q, before);
  EXPECT_EQ(a.visits(1, 0), 1u);
}

TEST(QUpdate, TouchesOnlyTheActivePair) {
  const auto spec = small_mdp();
  const CommGraph g(1, {});
  AgentState a = make_agent(spec, g, 0);
  a.y << 1, 2, 3, 4;
  a.q << 0.5, -1, 2, 0.25;
  const Table before = a.q;
  q_update(a, before, {1, 1}, 0, StepSchedule{}, {0, 0});
  // gamma1(1) = 1: Q(1,1) = y + min Q(0,.) - Q(0,0) = 4 - 1 - 0.5
  EXPECT_DOUBLE_EQ(a.q(1, 1), 2.5);
  EXPECT_EQ(a.q(0, 0), before(0, 0));
  EXPECT_EQ(a.q(0, 1), before(0, 1));
  EXPECT_EQ(a.q(1, 0), before(1, 0));
}

TEST(QUpdate, ReferenceValueApproachesOptimalAverage) {
  const auto spec = small_mdp();
  double rho = 1e9;
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1) rho = std::min(rho, two_state_average(spec, a0, a1));

  const CommGraph g(1, {});
  AgentState a = make_agent(spec, g, 0);
  for (int s = 0; s < 2; ++s)
    for (int b = 0; b < 2; ++b) a.y(s, b) = spec.costs[spec.cost_index(0, s, b)];
  Rng rng(77);
  const StepSchedule sched;
  for (int n = 0; n < 200'000; ++n) {
    const Table prev = a.q;
    for (int s = 0; s < 2; ++s)
      for (int b = 0; b < 2; ++b) q_update(a, prev, {s, b}, spec.transition.sample(s, b, rng), sched, {0, 0});
  }
  EXPECT_NEAR(a.q(0, 0), rho, 0.05);
}

TEST(RunningCost, FixedPointAndFirstStep) {
  const auto spec = small_mdp();
  AgentState a = make_agent(spec, CommGraph(1, {}), 0);
  a.z = 3.0;
  running_cost_update(a, 3.0, 17, StepSchedule{});
  EXPECT_EQ(a.z, 3.0);
  a.z = -8.0;
  running_cost_update(a, 2.5, 1, StepSchedule{});
  EXPECT_EQ(a.z, 2.5);
}

TEST(RunningCost, ConstantCostMatchesScalarRecursion) {
  const auto spec = small_mdp();
  AgentState a = make_agent(spec, CommGraph(1, {}), 0);
  double z = 0.0;
  for (int n = 1; n <= 10'000; ++n) {
    running_cost_update(a, 5.0, n, StepSchedule{});
    z = z + std::pow(static_cast<double>(n), -0.9) * (5.0 - z);
  }
  EXPECT_EQ(a.z, z);
  EXPECT_NEAR(a.z, 5.0, 0.01);
}

TEST(Gossip, ConsensusWithoutInnovationIsFixed) {
  Rng rng(1);
  const auto spec = test::random_spec(3, 2, 2, rng);
  const CommGraph g = build_graph(GraphKind::Complete, 3);
  std::vector<AgentState> agents;
  for (int i = 0; i < 3; ++i) agents.push_back(make_agent(spec, g, i));
  Table c(2, 2);
  c << 1, 2, 3, 4;
  for (auto& a : agents) {
    a.y = c;
    a.visits.setConstant(5);
  }
  std::vector<Table> prev{agents[0].y, agents[1].y, agents[2].y};
  const std::vector<double> row{0.2, 0.5, 0.3};
  const std::vector<StateAction> active{{0, 1}, {1, 0}};
  gossip_update(agents[0], 0, g, prev, row, active, c, StepSchedule{});
  for (int s = 0; s < 2; ++s)
    for (int b = 0; b < 2; ++b) EXPECT_NEAR(agents[0].y(s, b), c(s, b), 1e-14);
}

TEST(Gossip, InactivePairsUntouchedAndRowChecked) {
  Rng rng(2);
  const auto spec = test::random_spec(2, 2, 2, rng);
  const CommGraph g = build_graph(GraphKind::Complete, 2);
  AgentState a = make_agent(spec, g, 0), b = make_agent(spec, g, 1);
  a.y << 1, 2, 3, 4;
  b.y << 5, 6, 7, 8;
  std::vector<Table> prev{a.y, b.y};
  Table c = Table::Constant(2, 2, 9.0);
  gossip_update(a, 0, g, prev, std::vector<double>{0.5, 0.5}, std::vector<StateAction>{{1, 1}}, c, StepSchedule{});
  EXPECT_EQ(a.y(0, 0), 1);
  EXPECT_EQ(a.y(0, 1), 2);
  EXPECT_EQ(a.y(1, 0), 3);
  // visits are 0, so gamma3 = 1: mixed 6 plus innovation 9 - 4
  EXPECT_DOUBLE_EQ(a.y(1, 1), 11.0);
  EXPECT_THROW(gossip_update(a, 0, g, prev, std::vector<double>{0.7, 0.7}, std::vector<StateAction>{{0, 0}}, c,
                             StepSchedule{}),
               StructureError);
}

TEST(Gossip, TwoAgentsTrackTheAverageCost) {
  Rng rng(3);
  const auto spec = test::random_spec(2, 1, 1, rng);
  const CommGraph g = build_graph(GraphKind::Complete, 2);
  std::vector<AgentState> agents{make_agent(spec, g, 0), make_agent(spec, g, 1)};
  const Table c1 = Table::Constant(1, 1, 2.0), c2 = Table::Constant(1, 1, 4.0);
  const std::vector<double> row{0.5, 0.5};
  const std::vector<StateAction> active{{0, 0}};
  double o1 = 0.0, o2 = 0.0;  // direct recursion
  for (int k = 1; k <= 10'000; ++k) {
    for (auto& a : agents) a.visits(0, 0) = k;
    std::vector<Table> prev{agents[0].y, agents[1].y};
    gossip_update(agents[0], 0, g, prev, row, active, c1, StepSchedule{});
    gossip_update(agents[1], 1, g, prev, row, active, c2, StepSchedule{});
    const double n1 = 0.5 * (o1 + o2) + (2.0 - o1) / k;
    const double n2 = 0.5 * (o1 + o2) + (4.0 - o2) / k;
    o1 = n1;
    o2 = n2;
  }
  EXPECT_NEAR(agents[0].y(0, 0), o1, 1e-12);
  EXPECT_NEAR(agents[1].y(0, 0), o2, 1e-12);
  EXPECT_NEAR(o1, 3.0, 0.05);
  EXPECT_NEAR(o2, 3.0, 0.05);
}

TEST(Gossip, FrozenRowsReachConsensus) {
  Rng rng(4);
  const int N = 5;
  const auto spec = test::random_spec(N, 1, 2, rng);
  const CommGraph g = build_graph(GraphKind::Cycle, N);
  std::vector<AgentState> agents;
  std::vector<std::vector<double>> rows;
  std::vector<Table> costs;
  for (int i = 0; i < N; ++i) {
    agents.push_back(make_agent(spec, g, i));
    rows.push_back(mwu_row_update(g, i, uniform_row(g, i), DeviationVector::from(std::vector<double>{1, -1, 0.5, 2, 0}, std::vector<double>(N, 0.0)), {0.3, 1.0, 0.05}));
    Table c(1, 2);
    c << rng.uniform(0, 10), rng.uniform(0, 10);
    costs.push_back(c);
  }
  const std::vector<StateAction> active{{0, 0}, {0, 1}};
  for (int k = 1; k <= 100'000; ++k) {
    std::vector<Table> prev;
    for (auto& a : agents) {
      a.visits.setConstant(k);
      prev.push_back(a.y);
    }
    for (int i = 0; i < N; ++i) gossip_update(agents[i], i, g, prev, rows[i], active, costs[i], StepSchedule{});
  }
  double spread = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) spread = std::max(spread, (agents[i].y - agents[j].y).cwiseAbs().maxCoeff());
  EXPECT_LT(spread, 0.05);
}

TEST(Policy, GreedyAndTies) {
  const auto spec = small_mdp();
  AgentState a = make_agent(spec, CommGraph(1, {}), 0);
  a.q << 1.0, 2.0, 3.0, 3.0;
  Rng rng(1);
  policy_update(a, 0.0, rng);
  EXPECT_EQ(a.policy[0], 0);
  EXPECT_EQ(a.policy[1], 0);
  a.q << 2.0, 1.0, 3.0, 3.0;
  policy_update(a, 0.0, rng);
  EXPECT_EQ(a.policy[0], 1);
}

TEST(Policy, FullExplorationIsUniform) {
  const auto spec = small_mdp();
  AgentState a = make_agent(spec, CommGraph(1, {}), 0);
  a.q << 0.0, 5.0, 0.0, 5.0;
  Rng rng(12);
  int ones = 0;
  const int n = 100'000;
  for (int k = 0; k < n; ++k) {
    policy_update(a, 1.0, rng);
    ones += a.policy[0];
  }
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 0.01);
}

TEST(Simulation, IdenticalSeedsGiveIdenticalTraces) {
  const auto spec = xor_instance(4, 3, 5);
  HyperParams hp;
  hp.scheme = WeightScheme::MH;
  Simulation a(spec, build_graph(GraphKind::Cycle, 4), hp, {}, 9), b(spec, build_graph(GraphKind::Cycle, 4), hp, {}, 9);
  a.set_record_rows(true);
  b.set_record_rows(true);
  for (int k = 0; k < 2000; ++k) {
    const TraceRecord ra = a.step(), rb = b.step();
    ASSERT_EQ(ra.state, rb.state);
    ASSERT_EQ(ra.actions, rb.actions);
    ASSERT_EQ(ra.costs, rb.costs);
    ASSERT_EQ(ra.z, rb.z);
    ASSERT_EQ(ra.rows, rb.rows);
  }
  for (int i = 0; i < 4; ++i) EXPECT_EQ(learned_checksum(a.agents()[i]), learned_checksum(b.agents()[i]));
}

TEST(Simulation, SynchronousModeCountsEveryPair) {
  const auto spec = xor_instance(3, 4, 2);
  Simulation sim(spec, build_graph(GraphKind::Cycle, 3), {}, {}, 1);
  for (int n = 1; n <= 50; ++n) {
    sim.step();
    for (const auto& a : sim.agents()) {
      ASSERT_TRUE((a.visits.array() == static_cast<std::uint64_t>(n)).all());
      ASSERT_EQ(a.visits.sum(), static_cast<std::uint64_t>(n) * 4 * 2);
    }
  }
}

TEST(Simulation, OnTrajectoryModeCountsOnePairPerStep) {
  const auto spec = xor_instance(3, 4, 2);
  HyperParams hp;
  hp.update_mode = UpdateMode::OnTrajectory;
  Simulation sim(spec, build_graph(GraphKind::Line, 3), hp, {}, 1);
  for (int n = 1; n <= 200; ++n) {
    std::vector<CountTable> before;
    for (const auto& a : sim.agents()) before.push_back(a.visits);
    const TraceRecord rec = sim.step();
    for (int i = 0; i < 3; ++i) {
      const CountTable diff = sim.agents()[i].visits - before[i];
      ASSERT_EQ(diff.sum(), 1u);
      ASSERT_EQ(diff(rec.state, rec.actions[i]), 1u);
      ASSERT_EQ(sim.agents()[i].visits.sum(), static_cast<std::uint64_t>(n));
    }
  }
}

TEST(Simulation, RowsStayValidAndIteratesFinite) {
  for (auto scheme : {WeightScheme::MWU, WeightScheme::MH}) {
    const auto spec = xor_instance(5, 2, 3);
    HyperParams hp;
    hp.scheme = scheme;
    const CommGraph g = build_graph(GraphKind::Cycle, 5);
    Simulation sim(spec, g, hp, {}, 4);
    for (int k = 0; k < 5000; ++k) sim.step();
    EXPECT_NO_THROW(sim.gossip_matrix().validate(g));
    for (const auto& a : sim.agents()) {
      EXPECT_TRUE(a.q.allFinite());
      EXPECT_TRUE(a.y.allFinite());
      EXPECT_TRUE(std::isfinite(a.z));
    }
  }
}

TEST(Simulation, RequiresBoundsAndMatchingGraph) {
  auto unbounded = std::make_shared<const MmdpSpec>(build_xor_mdp(3, 2, CostMode::Simple, 1));
  EXPECT_THROW(Simulation(unbounded, build_graph(GraphKind::Cycle, 3), {}, {}, 1), ArgumentError);
  EXPECT_THROW(Simulation(xor_instance(3, 2, 1), build_graph(GraphKind::Cycle, 4), {}, {}, 1), StructureError);
}

TEST(RunningCost, TracksExactAverageUnderFrozenPolicy) {
  const auto spec = xor_instance(3, 4, 6);
  const JointPolicy policy = policy_from_index(*spec, 1234);
  const auto g = evaluate_policy(*spec, policy).avg_cost;
  AgentState agents[3] = {make_agent(*spec, build_graph(GraphKind::Cycle, 3), 0),
                          make_agent(*spec, build_graph(GraphKind::Cycle, 3), 1),
                          make_agent(*spec, build_graph(GraphKind::Cycle, 3), 2)};
  EnvState env = initial_env_state(*spec, Rng(3));
  std::vector<int> act(3);
  for (int n = 1; n <= 100'000; ++n) {
    for (int i = 0; i < 3; ++i) act[i] = policy.at(env.state, i);
    const auto costs = step(*spec, env, act);
    for (int i = 0; i < 3; ++i) running_cost_update(agents[i], costs[i], n, StepSchedule{});
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(agents[i].z, g[i], 0.05);
}

TEST(AgentState, JsonRoundTripPreservesChecksum) {
  const auto spec = xor_instance(3, 2, 1);
  Simulation sim(spec, build_graph(GraphKind::Cycle, 3), {}, {}, 2);
  for (int k = 0; k < 100; ++k) sim.step();
  const AgentState& a = sim.agents()[1];
  const AgentState back = agent_from_json(agent_to_json(a));
  EXPECT_EQ(learned_checksum(back), learned_checksum(a));
  EXPECT_EQ(back.visits, a.visits);
  EXPECT_EQ(back.policy, a.policy);
  EXPECT_EQ(back.z, a.z);
}
