#include <gtest/gtest.h>

#include <cmath>

#include "bcqlab/envs.hpp"
#include "test_util.hpp"

using namespace bcqlab;

TEST(TwoState, Structure) {
  const FiniteMdp m = make_two_state(0.9);
  EXPECT_EQ(m.n_states, 2);
  EXPECT_EQ(m.n_actions, 2);
  EXPECT_DOUBLE_EQ(m.prob(0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.rew(0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.prob(1, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.rew(1, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.prob(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.prob(1, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.initial_dist(0), 1.0);
}

TEST(RandomMdp, SameSeedSameMdp) {
  RandomMdpSpec spec;
  spec.seed = 99;
  spec.deterministic = false;
  spec.branching = 3;
  const FiniteMdp a = make_random_mdp(spec);
  const FiniteMdp b = make_random_mdp(spec);
  EXPECT_EQ(to_json_text(a), to_json_text(b));
  spec.seed = 100;
  const FiniteMdp c = make_random_mdp(spec);
  EXPECT_NE(to_json_text(a), to_json_text(c));
}

TEST(RandomMdp, DeterministicFlagGivesSingleSuccessors) {
  RandomMdpSpec spec;
  spec.deterministic = true;
  spec.seed = 5;
  const FiniteMdp m = make_random_mdp(spec);
  for (int a = 0; a < m.n_actions; ++a)
    for (int s = 0; s < m.n_states; ++s)
      EXPECT_DOUBLE_EQ(m.transition[a].row(s).maxCoeff(), 1.0);
}

TEST(RandomMdp, StochasticBranchingCount) {
  RandomMdpSpec spec;
  spec.deterministic = false;
  spec.branching = 3;
  spec.n_states = 10;
  spec.seed = 6;
  const FiniteMdp m = make_random_mdp(spec);
  for (int a = 0; a < m.n_actions; ++a)
    for (int s = 0; s < m.n_states; ++s) {
      int nonzero = 0;
      for (int s2 = 0; s2 < m.n_states; ++s2) nonzero += m.transition[a](s, s2) > 0.0;
      EXPECT_EQ(nonzero, 3);
    }
}

TEST(RandomMdp, RejectsBadSpecs) {
  RandomMdpSpec spec;
  spec.branching = 0;
  EXPECT_THROW(make_random_mdp(spec), std::invalid_argument);
  spec.branching = 100;
  EXPECT_THROW(make_random_mdp(spec), std::invalid_argument);
  spec = RandomMdpSpec{};
  spec.reward_lo = 1.0;
  spec.reward_hi = 0.0;
  EXPECT_THROW(make_random_mdp(spec), std::invalid_argument);
}

TEST(Gridworld, ShortestPathValue) {
  // 3x3 grid: the shortest route from corner to corner takes 4 moves, and
  // only the arrival step pays, so the optimal start value is g^3.
  const double g = 0.9;
  const FiniteMdp m = make_gridworld(3, 3, 0.0, g);
  const auto res = value_iteration(m, 1e-12);
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(res.q.values.row(0).maxCoeff(), g * g * g, 1e-9);
}

TEST(Gridworld, GoalIsTerminalAndWallsBlock) {
  const FiniteMdp m = make_gridworld(2, 2, 0.0, 0.9);
  EXPECT_TRUE(m.is_terminal(3));
  // Moving up from the top-left corner stays put.
  EXPECT_DOUBLE_EQ(m.prob(0, 0, 0), 1.0);
  // Moving right from cell 0 reaches cell 1.
  EXPECT_DOUBLE_EQ(m.prob(0, 3, 1), 1.0);
}

TEST(Gridworld, SlipMassSplitsPerpendicular) {
  const FiniteMdp m = make_gridworld(3, 3, 0.2, 0.9);
  // From the center cell (4), moving down: intended 7, slips to 3 and 5.
  EXPECT_NEAR(m.prob(4, 1, 7), 0.8, 1e-12);
  EXPECT_NEAR(m.prob(4, 1, 3), 0.1, 1e-12);
  EXPECT_NEAR(m.prob(4, 1, 5), 0.1, 1e-12);
}

TEST(Gridworld, RewardOnlyOnGoalEntry) {
  const FiniteMdp m = make_gridworld(3, 3, 0.0, 0.9);
  const int goal = 8;
  for (int a = 0; a < 4; ++a)
    for (int s = 0; s < m.n_states; ++s)
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        if (s2 == goal && s != goal && m.prob(s, a, s2) > 0)
          EXPECT_DOUBLE_EQ(m.rew(s, a, s2), 1.0);
        else
          EXPECT_DOUBLE_EQ(m.rew(s, a, s2), 0.0);
      }
}

TEST(Pendulum, ResetRangesAndDeterminism) {
  PendulumEnv env;
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    env.reset(rng);
    EXPECT_GE(env.theta(), -M_PI);
    EXPECT_LE(env.theta(), M_PI);
    EXPECT_GE(env.theta_dot(), -1.0);
    EXPECT_LE(env.theta_dot(), 1.0);
  }
  PendulumEnv e1, e2;
  Rng r1(7), r2(7);
  e1.reset(r1);
  e2.reset(r2);
  Eigen::VectorXd u(1);
  for (int t = 0; t < 50; ++t) {
    u(0) = std::sin(0.3 * t);
    const auto s1 = e1.step(u);
    const auto s2 = e2.step(u);
    ASSERT_EQ(s1.obs, s2.obs);
    ASSERT_EQ(s1.reward, s2.reward);
  }
}

TEST(Pendulum, DynamicsSingleStepClosedForm) {
  PendulumEnv env;
  env.set_state(0.1, 0.2);
  Eigen::VectorXd u(1);
  u(0) = 0.5;
  const auto r = env.step(u);
  const double expected_cost = 0.1 * 0.1 + 0.1 * 0.2 * 0.2 + 0.001 * 0.5 * 0.5;
  EXPECT_NEAR(r.reward, -expected_cost, 1e-12);
  const double new_td = 0.2 + (15.0 * std::sin(0.1) + 3.0 * 0.5) * 0.05;
  const double new_t = 0.1 + new_td * 0.05;
  EXPECT_NEAR(env.theta_dot(), new_td, 1e-12);
  EXPECT_NEAR(env.theta(), new_t, 1e-12);
  EXPECT_FALSE(r.terminated);
  EXPECT_FALSE(r.truncated);
}

TEST(Pendulum, TorqueAndSpeedClipping) {
  PendulumEnv env;
  env.set_state(M_PI / 2.0, 7.9);
  Eigen::VectorXd u(1);
  u(0) = 50.0;  // clipped to 2
  const auto r = env.step(u);
  EXPECT_NEAR(r.reward, -(std::pow(M_PI / 2.0, 2) + 0.1 * 7.9 * 7.9 + 0.001 * 4.0), 1e-12);
  EXPECT_LE(env.theta_dot(), 8.0);
}

TEST(Pendulum, TruncatesAtHorizonWithoutTerminating) {
  PendulumEnv env;
  Rng rng(0);
  env.reset(rng);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  for (int t = 0; t < 199; ++t) {
    const auto r = env.step(u);
    ASSERT_FALSE(r.truncated);
    ASSERT_FALSE(r.terminated);
  }
  const auto last = env.step(u);
  EXPECT_TRUE(last.truncated);
  EXPECT_FALSE(last.terminated);
}

TEST(Pendulum, RewardBound) {
  // Worst case magnitude: pi^2 + 0.1 * 64 + 0.001 * 4.
  const double bound = M_PI * M_PI + 0.1 * 64.0 + 0.001 * 4.0;
  PendulumEnv env;
  Rng rng(3);
  Eigen::VectorXd u(1);
  env.reset(rng);
  for (int t = 0; t < 2000; ++t) {
    u(0) = rng.uniform(-2.0, 2.0);
    const auto r = env.step(u);
    ASSERT_LE(-r.reward, bound + 1e-9);
    ASSERT_GE(-r.reward, 0.0);
    if (r.truncated) env.reset(rng);
  }
}

TEST(Pendulum, WrapAngle) {
  EXPECT_NEAR(PendulumEnv::wrap_angle(0.0), 0.0, 1e-15);
  EXPECT_NEAR(PendulumEnv::wrap_angle(2.0 * M_PI), 0.0, 1e-12);
  EXPECT_NEAR(PendulumEnv::wrap_angle(M_PI + 0.1), -M_PI + 0.1, 1e-12);
  EXPECT_NEAR(PendulumEnv::wrap_angle(-M_PI - 0.1), M_PI - 0.1, 1e-12);
  EXPECT_NEAR(PendulumEnv::wrap_angle(7.0 * M_PI + 0.3), -M_PI + 0.3, 1e-11);
}

TEST(EnvIds, ParseKnownForms) {
  EXPECT_EQ(parse_env_id("two-state").kind, "two-state");
  EXPECT_EQ(parse_env_id("pendulum").kind, "pendulum");
  const auto grid = parse_env_id("gridworld:5x4");
  EXPECT_EQ(grid.kind, "gridworld");
  EXPECT_EQ(grid.width, 5);
  EXPECT_EQ(grid.height, 4);
  const auto rmdp = parse_env_id("random-mdp:1234");
  EXPECT_EQ(rmdp.kind, "random-mdp");
  EXPECT_EQ(rmdp.seed, 1234u);
  EXPECT_TRUE(is_tabular_env("two-state"));
  EXPECT_FALSE(is_tabular_env("pendulum"));
}

TEST(EnvIds, RejectMalformed) {
  EXPECT_THROW(parse_env_id("gridworld"), std::invalid_argument);
  EXPECT_THROW(parse_env_id("gridworld:5"), std::invalid_argument);
  EXPECT_THROW(parse_env_id("gridworld:ax2"), std::invalid_argument);
  EXPECT_THROW(parse_env_id("gridworld:0x2"), std::invalid_argument);
  EXPECT_THROW(parse_env_id("random-mdp"), std::invalid_argument);
  EXPECT_THROW(parse_env_id("random-mdp:x"), std::invalid_argument);
  EXPECT_THROW(parse_env_id("mountain-car"), std::invalid_argument);
}

TEST(EnvIds, BuildTabular) {
  const FiniteMdp grid = make_tabular_env("gridworld:4x4", 0.95);
  EXPECT_EQ(grid.n_states, 16);
  EXPECT_DOUBLE_EQ(grid.discount, 0.95);
  const FiniteMdp two = make_tabular_env("two-state", 0.5);
  EXPECT_EQ(two.n_states, 2);
  const FiniteMdp rnd = make_tabular_env("random-mdp:7", 0.9);
  EXPECT_EQ(to_json_text(rnd), to_json_text(make_tabular_env("random-mdp:7", 0.9)));
  EXPECT_THROW(make_tabular_env("pendulum", 0.9), std::invalid_argument);
}
