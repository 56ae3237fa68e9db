#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "bcqlab/envs.hpp"
#include "bcqlab/mdp.hpp"
#include "test_util.hpp"

using namespace bcqlab;

namespace {

FiniteMdp single_state_mdp(double reward, double discount) {
  FiniteMdp m = FiniteMdp::zeros(1, 1, discount);
  m.transition[0](0, 0) = 1.0;
  m.reward[0](0, 0) = reward;
  m.initial_dist(0) = 1.0;
  m.validate();
  return m;
}

}  // namespace

TEST(Validate, RejectsBadRowSums) {
  FiniteMdp m = FiniteMdp::zeros(2, 1, 0.9);
  m.transition[0](0, 0) = 0.6;
  m.transition[0](0, 1) = 0.3;  // row sums to 0.9
  m.transition[0](1, 1) = 1.0;
  m.initial_dist(0) = 1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Validate, RejectsBadDiscount) {
  FiniteMdp m = single_state_mdp(1.0, 0.9);
  m.discount = 1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.discount = -0.1;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Validate, RejectsTerminalWithoutZeroSelfLoop) {
  FiniteMdp m = FiniteMdp::zeros(2, 1, 0.9);
  m.transition[0](0, 1) = 1.0;
  m.transition[0](1, 1) = 1.0;
  m.reward[0](1, 1) = 0.5;
  m.terminal[1] = 1;
  m.initial_dist(0) = 1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.reward[0](1, 1) = 0.0;
  EXPECT_NO_THROW(m.validate());
}

TEST(BellmanBackup, SingleStateFromZero) {
  const FiniteMdp m = single_state_mdp(1.0, 0.5);
  const auto pol = TabularPolicy::uniform(1, 1);
  const QTable q1 = bellman_backup(m, QTable::zeros(1, 1), pol);
  EXPECT_DOUBLE_EQ(q1.values(0, 0), 1.0);
  const QTable q2 = bellman_backup(m, q1, pol);
  EXPECT_DOUBLE_EQ(q2.values(0, 0), 1.5);
}

TEST(BellmanBackup, ZeroDiscountGivesExpectedReward) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FiniteMdp m = testutil::random_mdp_instance(seed, false, 0.0);
    Rng rng(seed);
    const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
    const QTable q = bellman_backup(m, QTable::constant(m.n_states, m.n_actions, 123.0), pol);
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        double expected = 0.0;
        for (int s2 = 0; s2 < m.n_states; ++s2)
          expected += m.transition[a](s, s2) * m.reward[a](s, s2);
        EXPECT_NEAR(q.values(s, a), expected, 1e-12);
      }
  }
}

TEST(BellmanBackup, FixedPointOfExactEvaluation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed, seed % 2 == 0, 0.95);
    Rng rng(seed + 100);
    const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
    const QTable q = evaluate_policy_exact(m, pol);
    const QTable back = bellman_backup(m, q, pol);
    EXPECT_LT(testutil::max_abs_diff(back.values, q.values), 1e-10);
  }
}

TEST(BellmanBackup, IsContraction) {
  Rng rng(77);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed, seed % 3 == 0, 0.9);
    const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
    QTable q1 = QTable::zeros(m.n_states, m.n_actions);
    QTable q2 = q1;
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        q1.values(s, a) = rng.uniform(-10.0, 10.0);
        q2.values(s, a) = rng.uniform(-10.0, 10.0);
      }
    const double before = testutil::max_abs_diff(q1.values, q2.values);
    const QTable t1 = bellman_backup(m, q1, pol);
    const QTable t2 = bellman_backup(m, q2, pol);
    const double after = testutil::max_abs_diff(t1.values, t2.values);
    EXPECT_LE(after, m.discount * before + 1e-12);
  }
}

TEST(BellmanBackup, RejectsShapeMismatch) {
  const FiniteMdp m = make_two_state(0.9);
  EXPECT_THROW(bellman_backup(m, QTable::zeros(3, 2), TabularPolicy::uniform(2, 2)),
               std::invalid_argument);
  EXPECT_THROW(bellman_backup(m, QTable::zeros(2, 2), TabularPolicy::uniform(2, 3)),
               std::invalid_argument);
}

TEST(EvaluatePolicy, SingleStateGeometricSum) {
  const FiniteMdp m = single_state_mdp(1.0, 0.99);
  const QTable q = evaluate_policy_exact(m, TabularPolicy::uniform(1, 1));
  EXPECT_NEAR(q.values(0, 0), 100.0, 1e-8);
}

TEST(EvaluatePolicy, TwoStateAlternatingClosedForm) {
  const double g = 0.99;
  const FiniteMdp m = make_two_state(g);
  // Optimal policy: action 1 at state 0, action 0 at state 1.
  const auto pol = TabularPolicy::deterministic({1, 0}, 2);
  const QTable q = evaluate_policy_exact(m, pol);
  EXPECT_NEAR(q.values(0, 1), 1.0 / (1.0 - g * g), 1e-9);
  EXPECT_NEAR(q.values(1, 0), g / (1.0 - g * g), 1e-9);
  // a0 at state 0 wastes a step, then the alternating return restarts.
  EXPECT_NEAR(q.values(0, 0), g / (1.0 - g * g), 1e-9);
}

TEST(EvaluatePolicy, MatchesIterativeOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed, false, 0.9);
    Rng rng(seed + 5);
    const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
    const QTable exact = evaluate_policy_exact(m, pol);
    const QTable iter = testutil::iterative_policy_q(m, pol, 400);
    EXPECT_LT(testutil::max_abs_diff(exact.values, iter.values), 1e-8);
  }
}

TEST(EvaluatePolicy, TerminalStatesAreWorthZero) {
  FiniteMdp m = make_gridworld(3, 3, 0.2, 0.95);
  Rng rng(9);
  const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
  const QTable q = evaluate_policy_exact(m, pol);
  const int goal = m.n_states - 1;
  for (int a = 0; a < m.n_actions; ++a) EXPECT_DOUBLE_EQ(q.values(goal, a), 0.0);
}

TEST(ValueIteration, SingleState) {
  const FiniteMdp m = single_state_mdp(1.0, 0.99);
  const auto res = value_iteration(m, 1e-12);
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.q.values(0, 0), 100.0, 1e-8);
}

TEST(ValueIteration, TwoStateOptimalPolicyAlternates) {
  const double g = 0.99;
  const auto res = value_iteration(make_two_state(g), 1e-12);
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(res.q.values(0, 1), 1.0 / (1.0 - g * g), 1e-8);
  EXPECT_NEAR(res.q.values(1, 0), g / (1.0 - g * g), 1e-8);
  EXPECT_NEAR(res.q.values(1, 1), g * g / (1.0 - g * g), 1e-8);
  const auto pol = greedy_policy(res.q);
  EXPECT_DOUBLE_EQ(pol.probs(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(pol.probs(1, 0), 1.0);
}

TEST(ValueIteration, MatchesPolicyEnumeration) {
  // Exhaustive max over all deterministic policies on small instances.
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng shape(seed);
    RandomMdpSpec spec;
    spec.n_states = 3 + shape.uniform_int(3);
    spec.n_actions = 2 + shape.uniform_int(2);
    spec.deterministic = seed % 2 == 0;
    spec.branching = spec.deterministic ? 1 : 2;
    spec.reward_lo = -1.0;
    spec.reward_hi = 1.0;
    spec.discount = 0.9;
    spec.seed = seed + 400;
    const FiniteMdp m = make_random_mdp(spec);
    const QTable brute = testutil::enumerated_optimal_q(m);
    const auto res = value_iteration(m, 1e-13);
    ASSERT_TRUE(res.converged);
    EXPECT_LT(testutil::max_abs_diff(res.q.values, brute.values), 1e-9);
  }
}

TEST(ValueIteration, DominatesEveryPolicy) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed + 30, false, 0.85);
    const auto res = value_iteration(m, 1e-12);
    Rng rng(seed);
    for (int trial = 0; trial < 20; ++trial) {
      const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
      const QTable q = evaluate_policy_exact(m, pol);
      EXPECT_GE((res.q.values - q.values).minCoeff(), -1e-8);
    }
  }
}

TEST(ValueIteration, ReportsNonConvergence) {
  const auto res = value_iteration(make_two_state(0.99), 1e-12, 3);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations, 3);
}

TEST(GreedyPolicy, TieBreaksToLowestIndex) {
  QTable q = QTable::zeros(2, 3);
  q.values << 1.0, 1.0, 0.5, 0.2, 0.9, 0.9;
  const auto pol = greedy_policy(q);
  EXPECT_DOUBLE_EQ(pol.probs(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pol.probs(1, 1), 1.0);
}

TEST(Occupancy, AbsorbingSingleState) {
  const FiniteMdp m = single_state_mdp(0.0, 0.9);
  const auto occ = occupancy(m, TabularPolicy::uniform(1, 1));
  EXPECT_NEAR(occ.mass(0), 1.0, 1e-12);
}

TEST(Occupancy, TinyDiscountConcentratesOnStart) {
  FiniteMdp m = make_two_state(1e-9);
  const auto occ = occupancy(m, TabularPolicy::deterministic({1, 0}, 2));
  EXPECT_NEAR(occ.mass(0), 1.0, 1e-8);
  EXPECT_NEAR(occ.mass(1), 0.0, 1e-8);
}

TEST(Occupancy, MatchesTruncatedSeries) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed + 60, seed % 2 == 1, 0.9);
    Rng rng(seed);
    const auto pol = testutil::random_policy(m.n_states, m.n_actions, rng);
    const auto occ = occupancy(m, pol);
    const Eigen::VectorXd series = testutil::series_occupancy(m, pol, 600);
    EXPECT_LT((occ.mass - series).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_NEAR(occ.mass.sum(), 1.0, 1e-10);
    EXPECT_GE(occ.mass.minCoeff(), 0.0);
  }
}

TEST(Occupancy, SupportEqualsReachability) {
  // Start in cell 0 of a gridworld with a policy that only moves right along
  // the top row; cells below the top row stay unreachable.
  const FiniteMdp m = make_gridworld(3, 3, 0.0, 0.9);
  const auto pol = TabularPolicy::deterministic({3, 3, 3, 3, 3, 3, 3, 3, 0}, 4);
  const auto occ = occupancy(m, pol);
  const auto reach = reachable_states(m, pol);
  for (int s = 0; s < m.n_states; ++s) {
    if (reach[s])
      EXPECT_GT(occ.mass(s), 0.0) << "state " << s;
    else
      EXPECT_EQ(occ.mass(s), 0.0) << "state " << s;
  }
  // Top row reachable, everything else not.
  EXPECT_TRUE(reach[0] && reach[1] && reach[2]);
  EXPECT_FALSE(reach[3] || reach[4] || reach[5] || reach[6] || reach[7] || reach[8]);
}

TEST(McReturn, DeterministicChainIsExact) {
  const double g = 0.9;
  const FiniteMdp m = make_two_state(g);
  const auto pol = TabularPolicy::deterministic({1, 0}, 2);
  Rng rng(1);
  const auto est = mc_return(m, pol, 50, 4000, rng);
  EXPECT_NEAR(est.mean, 1.0 / (1.0 - g * g), 1e-10);
  EXPECT_LT(est.std_error, 1e-12);
}

TEST(McReturn, SingleStateHorizonTruncation) {
  const FiniteMdp m = single_state_mdp(1.0, 0.9);
  Rng rng(2);
  const auto est = mc_return(m, TabularPolicy::uniform(1, 1), 3, 1000, rng);
  EXPECT_NEAR(est.mean, (1.0 - std::pow(0.9, 1000.0)) / 0.1, 1e-9);
}

TEST(McReturn, AgreesWithExactEvaluation) {
  const FiniteMdp m = testutil::random_mdp_instance(123, false, 0.8);
  Rng prng(3);
  const auto pol = testutil::random_policy(m.n_states, m.n_actions, prng);
  const QTable q = evaluate_policy_exact(m, pol);
  double v0 = 0.0;
  for (int a = 0; a < m.n_actions; ++a) v0 += pol.probs(0, a) * q.values(0, a);
  Rng rng(4);
  const auto est = mc_return(m, pol, 20000, 300, rng);
  EXPECT_NEAR(est.mean, v0, 4.0 * est.std_error + 1e-3);
}

TEST(Serialization, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed + 200, seed % 2 == 0, 0.97);
    const std::string text = to_json_text(m);
    const FiniteMdp back = mdp_from_json_text(text);
    ASSERT_EQ(back.n_states, m.n_states);
    ASSERT_EQ(back.n_actions, m.n_actions);
    EXPECT_TRUE(std::memcmp(&back.discount, &m.discount, sizeof(double)) == 0);
    for (int a = 0; a < m.n_actions; ++a) {
      ASSERT_EQ(back.transition[a].size(), m.transition[a].size());
      EXPECT_TRUE(std::memcmp(back.transition[a].data(), m.transition[a].data(),
                              sizeof(double) * m.transition[a].size()) == 0);
      EXPECT_TRUE(std::memcmp(back.reward[a].data(), m.reward[a].data(),
                              sizeof(double) * m.reward[a].size()) == 0);
    }
    EXPECT_TRUE(std::memcmp(back.initial_dist.data(), m.initial_dist.data(),
                            sizeof(double) * m.n_states) == 0);
    EXPECT_EQ(back.terminal, m.terminal);
    // A second emit of the parsed document is byte-identical.
    EXPECT_EQ(to_json_text(back), text);
  }
}

TEST(Serialization, FileRoundTrip) {
  const FiniteMdp m = make_gridworld(4, 3, 0.1, 0.95);
  const std::string path = std::filesystem::temp_directory_path() / "bcqlab_mdp_test.json";
  save_mdp(m, path);
  const FiniteMdp back = load_mdp(path);
  EXPECT_EQ(to_json_text(back), to_json_text(m));
  std::remove(path.c_str());
}

TEST(Serialization, ParseErrorsCarryByteOffsets) {
  try {
    mdp_from_json_text("{\"n_states\": 2, !");
    FAIL() << "expected parse failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
}

TEST(Serialization, MissingFieldIsRejected) {
  EXPECT_THROW(mdp_from_json_text("{\"n_states\": 1}"), std::runtime_error);
}
