#include <gtest/gtest.h>

#include "bcqlab/envs.hpp"
#include "bcqlab/extrapolation.hpp"
#include "test_util.hpp"

using namespace bcqlab;

namespace {

/// 50/50 mixture of two random deterministic policies, so every positive
/// action probability is at least one half.
TabularPolicy mixture_policy(int n_states, int n_actions, Rng& rng) {
  TabularPolicy p;
  p.probs = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    p.probs(s, rng.uniform_int(n_actions)) += 0.5;
    p.probs(s, rng.uniform_int(n_actions)) += 0.5;
  }
  return p;
}

}  // namespace

TEST(EpsilonDirect, FullCoverageDeterministicIsZero) {
  // One sweep over every pair of a deterministic MDP reproduces the true
  // transition model exactly, so the error vanishes for any policy.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FiniteMdp m = testutil::random_mdp_instance(seed + 40, true, 0.9);
    Batch batch;
    batch.meta = BatchMeta{"", m.n_states, m.n_actions, "sweep", 0};
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        int s2 = 0;
        for (int k = 0; k < m.n_states; ++k)
          if (m.transition[a](s, k) == 1.0) s2 = k;
        batch.d.push_back({s, a, m.reward[a](s, s2), s2, false, false});
      }
    const EmpiricalMdp emp = empirical_mdp(batch, m);
    Rng prng(seed);
    const auto pol = testutil::random_policy(m.n_states, m.n_actions, prng);
    const EpsilonTable eps = epsilon_direct(m, emp, pol);
    EXPECT_LT(eps.values.lpNorm<Eigen::Infinity>(), 1e-9);
  }
}

TEST(EpsilonDirect, TwoStateClosedFormWithMissingPair) {
  const double g = 0.99;
  const double q_init = 0.5;
  const FiniteMdp m = make_two_state(g);
  Batch batch;
  batch.meta = BatchMeta{"two-state", 2, 2, "", 0};
  batch.d = {{0, 1, 1.0, 1, false, false}};  // only (s0, a1) observed
  const EmpiricalMdp emp = empirical_mdp(batch, m, q_init);
  const auto pol = TabularPolicy::deterministic({1, 0}, 2);
  const EpsilonTable eps = epsilon_direct(m, emp, pol);
  // In the empirical model (s1, a0) routes to the absorbing state for q_init,
  // so Q_B(s1, a0) = q_init and Q_B(s0, a1) = 1 + g q_init.
  EXPECT_NEAR(eps.values(1, 0), g / (1.0 - g * g) - q_init, 1e-9);
  EXPECT_NEAR(eps.values(0, 1), 1.0 / (1.0 - g * g) - 1.0 - g * q_init, 1e-9);
}

TEST(EpsilonBellman, AgreesWithDirectEverywhere) {
  // The fixed-point recursion and the two-solve difference are the same
  // quantity; they must agree on random instances of every flavor.
  long checked = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const bool deterministic = seed % 2 == 0;
    const FiniteMdp m = testutil::random_mdp_instance(seed, deterministic, 0.9);
    Rng rng(derive_seed(seed, 2));
    const auto behavior = testutil::random_policy(m.n_states, m.n_actions, rng);
    const long steps = 5 + static_cast<long>(rng.uniform_int(200));
    const Batch batch = collect_batch(m, behavior, steps, seed + 17, 50);
    const EmpiricalMdp emp = empirical_mdp(batch, m, rng.uniform(-1.0, 1.0));
    const auto pol = mixture_policy(m.n_states, m.n_actions, rng);
    const EpsilonTable direct = epsilon_direct(m, emp, pol);
    const auto rec = epsilon_bellman(m, emp, pol, 1e-12);
    ASSERT_TRUE(rec.converged);
    EXPECT_FALSE(rec.sweep_warning);
    EXPECT_LT(testutil::max_abs_diff(direct.values, rec.eps.values), 1e-8) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 30);
}

TEST(EpsilonBellman, TerminalRowsStayZero) {
  const FiniteMdp m = make_gridworld(3, 3, 0.0, 0.9);
  const auto behavior = TabularPolicy::uniform(m.n_states, m.n_actions);
  const Batch batch = collect_batch(m, behavior, 150, 3);
  const EmpiricalMdp emp = empirical_mdp(batch, m, 0.7);
  Rng rng(5);
  const auto pol = mixture_policy(m.n_states, m.n_actions, rng);
  const auto rec = epsilon_bellman(m, emp, pol, 1e-12);
  const EpsilonTable direct = epsilon_direct(m, emp, pol);
  const int goal = m.n_states - 1;
  for (int a = 0; a < m.n_actions; ++a) {
    EXPECT_DOUBLE_EQ(rec.eps.values(goal, a), 0.0);
    EXPECT_NEAR(direct.values(goal, a), 0.0, 1e-12);
  }
}

TEST(EpsilonBellman, SweepCapAndWarning) {
  // A discount this close to one needs more sweeps than the cap allows.
  const FiniteMdp m = make_two_state(0.99999);
  Batch batch;
  batch.meta = BatchMeta{"two-state", 2, 2, "", 0};
  batch.d = {{0, 1, 1.0, 1, false, false}};
  const EmpiricalMdp emp = empirical_mdp(batch, m);
  const auto pol = TabularPolicy::deterministic({1, 0}, 2);
  const auto rec = epsilon_bellman(m, emp, pol, 1e-10);
  EXPECT_FALSE(rec.converged);
  EXPECT_TRUE(rec.sweep_warning);
  EXPECT_EQ(rec.sweeps, kEpsilonSweepCap);
}

TEST(EpsilonAggregate, HandExample) {
  EpsilonTable eps;
  eps.values.resize(2, 2);
  eps.values << 1.0, -2.0, 3.0, 0.0;
  TabularPolicy pol;
  pol.probs.resize(2, 2);
  pol.probs << 0.25, 0.75, 1.0, 0.0;
  OccupancyVector occ;
  occ.mass.resize(2);
  occ.mass << 0.6, 0.4;
  // 0.6 * (0.25 * 1 + 0.75 * 2) + 0.4 * (1 * 3) = 0.6 * 1.75 + 1.2
  EXPECT_DOUBLE_EQ(epsilon_aggregate(eps, pol, occ), 2.25);
}

TEST(EpsilonAggregate, ShapeChecks) {
  EpsilonTable eps;
  eps.values = Eigen::MatrixXd::Zero(2, 2);
  OccupancyVector occ;
  occ.mass = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(epsilon_aggregate(eps, TabularPolicy::uniform(3, 2), occ),
               std::invalid_argument);
  EXPECT_THROW(epsilon_aggregate(eps, TabularPolicy::uniform(2, 2), occ),
               std::invalid_argument);
}

TEST(Lemma1, HoldsExactlyWhenConstrainedOnDeterministicMdps) {
  long constrained_count = 0, unconstrained_count = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(derive_seed(seed, 3));
    RandomMdpSpec spec;
    spec.n_states = 4 + rng.uniform_int(9);
    spec.n_actions = 2 + rng.uniform_int(3);
    spec.deterministic = true;
    spec.branching = 1;
    spec.reward_lo = 0.1;
    spec.reward_hi = 1.0;
    spec.discount = 0.9;
    spec.seed = seed + 1000;
    const FiniteMdp m = make_random_mdp(spec);
    const auto pol = mixture_policy(m.n_states, m.n_actions, rng);
    const long steps = (seed % 2 == 0) ? 3 : 400;
    const Batch batch = collect_batch(m, pol, steps, seed + 5, 60);
    const EmpiricalMdp emp = empirical_mdp(batch, m);

    const bool constrained = is_batch_constrained(pol, batch, m).constrained;
    const auto lemma = check_lemma1(m, emp, pol);
    EXPECT_EQ(lemma.holds, constrained) << "seed " << seed;
    if (!lemma.holds) {
      EXPECT_GE(lemma.arg_state, 0);
      EXPECT_GT(lemma.max_divergence, 0.0);
    }

    const EpsilonTable eps = epsilon_direct(m, emp, pol);
    const double agg = epsilon_aggregate(eps, pol, occupancy(m, pol));
    if (constrained) {
      EXPECT_LT(agg, 1e-8) << "seed " << seed;
      ++constrained_count;
    } else {
      EXPECT_GT(agg, 1e-8) << "seed " << seed;
      ++unconstrained_count;
    }
  }
  // The suite must exercise both outcomes to mean anything.
  EXPECT_GT(constrained_count, 5);
  EXPECT_GT(unconstrained_count, 5);
}

TEST(Lemma1, StochasticMdpNeedsMatchingFrequencies) {
  // With a stochastic MDP, finite batches almost never reproduce the exact
  // transition probabilities, so the support condition fails even though the
  // batch covers every pair.
  RandomMdpSpec spec;
  spec.n_states = 4;
  spec.n_actions = 2;
  spec.deterministic = false;
  spec.branching = 3;
  spec.seed = 77;
  spec.discount = 0.9;
  const FiniteMdp m = make_random_mdp(spec);
  const auto pol = TabularPolicy::uniform(m.n_states, m.n_actions);
  const Batch batch = collect_batch(m, pol, 2000, 9, 200);
  const EmpiricalMdp emp = empirical_mdp(batch, m);
  const auto lemma = check_lemma1(m, emp, pol);
  EXPECT_FALSE(lemma.holds);
  EXPECT_GT(lemma.max_divergence, 1e-6);
}

TEST(EpsilonChecks, RejectMismatchedInputs) {
  const FiniteMdp m = make_two_state(0.9);
  Batch batch;
  batch.meta = BatchMeta{"", 2, 2, "", 0};
  batch.d = {{0, 1, 1.0, 1, false, false}};
  const EmpiricalMdp emp = empirical_mdp(batch, m);
  EXPECT_THROW(epsilon_direct(m, emp, TabularPolicy::uniform(3, 2)), std::invalid_argument);
  const FiniteMdp other = make_two_state(0.5);
  EXPECT_THROW(epsilon_direct(other, emp, TabularPolicy::uniform(2, 2)),
               std::invalid_argument);
}
