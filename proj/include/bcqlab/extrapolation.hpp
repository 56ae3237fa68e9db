#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "bcqlab/batch.hpp"
#include "bcqlab/mdp.hpp"

namespace bcqlab {

// Extrapolation error: the gap e(s, a) = Q_M(s, a) - Q_B(s, a) between the
// policy's value in the true MDP and its value in the batch-induced empirical
// model. It is computed two ways that must agree: directly from two exact
// evaluations, and as the fixed point of the recursion
//   e(s, a) = sum_s2 [p_M(s2|s,a) - p_B(s2|s,a)] (r(s,a,s2) + g w_B(s2))
//           + g sum_s2 p_M(s2|s,a) mask(s2) sum_a2 pi(a2|s2) e(s2, a2)
// where w_B(s2) = mask(s2) sum_a2 pi(a2|s2) Q_B(s2, a2), the successor sum
// extends over the empirical model's absorbing state (which pays q_init and
// has w_B = 0), and mask zeroes terminal states.

struct EpsilonTable {
  Eigen::MatrixXd values;  // (state, action)
};

namespace detail {

inline void check_epsilon_args(const FiniteMdp& mdp, const EmpiricalMdp& emp,
                               const TabularPolicy& policy) {
  check_policy_shape(mdp, policy);
  if (emp.n_states != mdp.n_states || emp.n_actions != mdp.n_actions)
    throw std::invalid_argument("empirical model dimensions do not match mdp");
  if (emp.base.discount != mdp.discount)
    throw std::invalid_argument("empirical model was built with a different discount");
}

/// Policy extended to the empirical model's extra absorbing state (the row
/// there is arbitrary since the state is terminal; uniform keeps it valid).
inline TabularPolicy extend_policy(const TabularPolicy& policy) {
  TabularPolicy ext;
  ext.probs.resize(policy.n_states() + 1, policy.n_actions());
  ext.probs.topRows(policy.n_states()) = policy.probs;
  ext.probs.row(policy.n_states()).setConstant(1.0 / policy.n_actions());
  return ext;
}

/// Exact Q of the policy in the empirical model, restricted to base states.
inline Eigen::MatrixXd empirical_q(const EmpiricalMdp& emp, const TabularPolicy& policy) {
  const FiniteMdp mb = emp.to_finite_mdp();
  const QTable q = evaluate_policy_exact(mb, extend_policy(policy));
  return q.values.topRows(emp.n_states);
}

}  // namespace detail

/// e = Q_M - Q_B by two exact policy evaluations.
inline EpsilonTable epsilon_direct(const FiniteMdp& mdp, const EmpiricalMdp& emp,
                                   const TabularPolicy& policy) {
  detail::check_epsilon_args(mdp, emp, policy);
  const QTable q_m = evaluate_policy_exact(mdp, policy);
  return EpsilonTable{q_m.values - detail::empirical_q(emp, policy)};
}

struct EpsilonBellmanResult {
  EpsilonTable eps;
  bool converged = false;
  long sweeps = 0;
  // Set when the iteration needed an unusually large sweep count; the cap
  // aborts at 10^6 with converged = false.
  bool sweep_warning = false;
};

inline constexpr long kEpsilonSweepCap = 1000000;
inline constexpr long kEpsilonSweepWarn = 100000;

/// e as the fixed point of the error recursion, iterated until the result is
/// within `tol` of the fixed point (successive changes are scaled by the
/// contraction modulus to guarantee that distance).
inline EpsilonBellmanResult epsilon_bellman(const FiniteMdp& mdp, const EmpiricalMdp& emp,
                                            const TabularPolicy& policy, double tol = 1e-10) {
  detail::check_epsilon_args(mdp, emp, policy);
  if (tol <= 0.0) throw std::invalid_argument("tolerance must be positive");
  const int S = mdp.n_states;
  const int A = mdp.n_actions;
  const Eigen::VectorXd mask = mdp.nonterminal_mask();
  const Eigen::MatrixXd q_b = detail::empirical_q(emp, policy);
  const Eigen::VectorXd w_b =
      ((policy.probs.array() * q_b.array()).rowwise().sum().matrix()).cwiseProduct(mask);

  const FiniteMdp mb = emp.to_finite_mdp();
  // Constant term: base-state successors plus the absorbing-state column,
  // where p_M is zero, the entry reward is q_init and w_B is zero.
  Eigen::MatrixXd base(S, A);
  for (int a = 0; a < A; ++a) {
    const Eigen::MatrixXd p_diff = mdp.transition[a] - mb.transition[a].topLeftCorner(S, S);
    Eigen::MatrixXd payoff = mdp.reward[a];
    payoff.rowwise() += (mdp.discount * w_b).transpose();
    base.col(a) = (p_diff.array() * payoff.array()).rowwise().sum();
    for (int s = 0; s < S; ++s) {
      const double p_init = mb.transition[a](s, emp.init_state());
      if (p_init > 0.0) base(s, a) -= p_init * mb.reward[a](s, emp.init_state());
    }
  }

  const double g = mdp.discount;
  // Successive-change threshold that pins the fixed-point distance to tol.
  const double change_tol = g > 0.0 ? tol * (1.0 - g) / g : tol;
  Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(S, A);
  Eigen::MatrixXd next(S, A);
  EpsilonBellmanResult result;
  for (long sweep = 0; sweep < kEpsilonSweepCap; ++sweep) {
    const Eigen::VectorXd bar =
        ((policy.probs.array() * eps.array()).rowwise().sum().matrix()).cwiseProduct(mask);
    for (int a = 0; a < A; ++a) next.col(a) = base.col(a) + g * (mdp.transition[a] * bar);
    const double change = (next - eps).lpNorm<Eigen::Infinity>();
    eps.swap(next);
    result.sweeps = sweep + 1;
    if (change <= change_tol) {
      result.converged = true;
      break;
    }
  }
  result.sweep_warning = result.sweeps >= kEpsilonSweepWarn;
  result.eps = EpsilonTable{eps};
  return result;
}

/// Occupancy-and-policy weighted total error:
///   sum_s mu(s) sum_a pi(a|s) |e(s, a)|.
inline double epsilon_aggregate(const EpsilonTable& eps, const TabularPolicy& policy,
                                const OccupancyVector& occupancy) {
  if (eps.values.rows() != policy.n_states() || eps.values.cols() != policy.n_actions())
    throw std::invalid_argument("epsilon table shape does not match policy");
  if (occupancy.mass.size() != eps.values.rows())
    throw std::invalid_argument("occupancy size does not match epsilon table");
  const Eigen::VectorXd per_state =
      (policy.probs.array() * eps.values.array().abs()).rowwise().sum();
  return occupancy.mass.dot(per_state);
}

struct Lemma1Result {
  bool holds = true;
  double max_divergence = 0.0;
  int arg_state = -1;
  int arg_action = -1;
};

/// Checks whether the empirical transition model agrees with the true one on
/// the policy's support: every non-terminal state reachable under the policy,
/// at every action taken with positive probability. Divergence at a pair is
/// the largest absolute probability gap over successors, including the
/// empirical model's absorbing state (where the true model puts zero mass).
inline Lemma1Result check_lemma1(const FiniteMdp& mdp, const EmpiricalMdp& emp,
                                 const TabularPolicy& policy, double tol = 1e-12) {
  detail::check_epsilon_args(mdp, emp, policy);
  const auto reach = reachable_states(mdp, policy);
  Lemma1Result result;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!reach[s] || mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (policy.probs(s, a) <= 0.0) continue;
      double div = emp.prob(s, a, emp.init_state());
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        div = std::max(div, std::abs(mdp.transition[a](s, s2) - emp.prob(s, a, s2)));
      if (div > result.max_divergence) {
        result.max_divergence = div;
        result.arg_state = s;
        result.arg_action = a;
      }
    }
  }
  result.holds = result.max_divergence <= tol;
  return result;
}

}  // namespace bcqlab
