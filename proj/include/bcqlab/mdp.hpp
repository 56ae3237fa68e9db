#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcqlab/io.hpp"
#include "bcqlab/rng.hpp"
#include "json.hpp"

namespace bcqlab {

inline constexpr double kRowSumTol = 1e-12;

/// Stochastic tabular policy; probs(s, a) = pi(a | s).
struct TabularPolicy {
  Eigen::MatrixXd probs;

  int n_states() const { return static_cast<int>(probs.rows()); }
  int n_actions() const { return static_cast<int>(probs.cols()); }

  static TabularPolicy uniform(int n_states, int n_actions) {
    TabularPolicy p;
    p.probs = Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions);
    return p;
  }

  static TabularPolicy deterministic(const std::vector<int>& action_per_state, int n_actions) {
    TabularPolicy p;
    p.probs = Eigen::MatrixXd::Zero(static_cast<int>(action_per_state.size()), n_actions);
    for (int s = 0; s < static_cast<int>(action_per_state.size()); ++s) {
      const int a = action_per_state[s];
      if (a < 0 || a >= n_actions) throw std::invalid_argument("policy action out of range");
      p.probs(s, a) = 1.0;
    }
    return p;
  }

  void validate() const {
    if (probs.size() == 0) throw std::invalid_argument("empty policy");
    if ((probs.array() < 0.0).any()) throw std::invalid_argument("negative policy probability");
    for (int s = 0; s < probs.rows(); ++s) {
      if (std::abs(probs.row(s).sum() - 1.0) > kRowSumTol)
        throw std::invalid_argument("policy row " + std::to_string(s) + " does not sum to 1");
    }
  }
};

/// Action-value table; values(s, a) = Q(s, a).
struct QTable {
  Eigen::MatrixXd values;

  int n_states() const { return static_cast<int>(values.rows()); }
  int n_actions() const { return static_cast<int>(values.cols()); }

  static QTable zeros(int n_states, int n_actions) {
    return QTable{Eigen::MatrixXd::Zero(n_states, n_actions)};
  }
  static QTable constant(int n_states, int n_actions, double v) {
    return QTable{Eigen::MatrixXd::Constant(n_states, n_actions, v)};
  }
};

/// Discounted state-visitation distribution (normalized to sum 1).
struct OccupancyVector {
  Eigen::VectorXd mass;
  bool normalized = true;
};

/// Finite MDP with explicit tensors. transition[a](s, s2) is the probability
/// of moving from s to s2 under action a; reward[a](s, s2) is the reward paid
/// on that transition. Terminal states self-loop with zero reward and
/// contribute no bootstrapped value; episodes end on entering them.
struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> transition;
  std::vector<Eigen::MatrixXd> reward;
  double discount = 0.99;
  Eigen::VectorXd initial_dist;
  std::vector<std::uint8_t> terminal;

  double prob(int s, int a, int s2) const { return transition[a](s, s2); }
  double rew(int s, int a, int s2) const { return reward[a](s, s2); }
  bool is_terminal(int s) const { return terminal[s] != 0; }

  /// 1.0 at non-terminal states, 0.0 at terminal ones. Every value recursion
  /// in the library multiplies successor values by this mask, which is what
  /// makes terminal states worth exactly zero.
  Eigen::VectorXd nonterminal_mask() const {
    Eigen::VectorXd m(n_states);
    for (int s = 0; s < n_states; ++s) m(s) = terminal[s] ? 0.0 : 1.0;
    return m;
  }

  static FiniteMdp zeros(int n_states, int n_actions, double discount) {
    FiniteMdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.discount = discount;
    m.transition.assign(n_actions, Eigen::MatrixXd::Zero(n_states, n_states));
    m.reward.assign(n_actions, Eigen::MatrixXd::Zero(n_states, n_states));
    m.initial_dist = Eigen::VectorXd::Zero(n_states);
    m.terminal.assign(n_states, 0);
    return m;
  }

  void validate() const {
    if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("mdp must be non-empty");
    if (!(discount >= 0.0 && discount < 1.0))
      throw std::invalid_argument("discount must lie in [0, 1)");
    if (static_cast<int>(transition.size()) != n_actions ||
        static_cast<int>(reward.size()) != n_actions)
      throw std::invalid_argument("tensor action count mismatch");
    if (static_cast<int>(terminal.size()) != n_states)
      throw std::invalid_argument("terminal flag count mismatch");
    if (initial_dist.size() != n_states)
      throw std::invalid_argument("initial distribution size mismatch");
    for (int a = 0; a < n_actions; ++a) {
      if (transition[a].rows() != n_states || transition[a].cols() != n_states ||
          reward[a].rows() != n_states || reward[a].cols() != n_states)
        throw std::invalid_argument("tensor shape mismatch at action " + std::to_string(a));
      if (!transition[a].allFinite() || !reward[a].allFinite())
        throw std::invalid_argument("non-finite entry at action " + std::to_string(a));
      if ((transition[a].array() < 0.0).any())
        throw std::invalid_argument("negative transition probability");
      for (int s = 0; s < n_states; ++s) {
        if (std::abs(transition[a].row(s).sum() - 1.0) > kRowSumTol)
          throw std::invalid_argument("transition row (s=" + std::to_string(s) +
                                      ", a=" + std::to_string(a) + ") does not sum to 1");
      }
    }
    if ((initial_dist.array() < 0.0).any() || std::abs(initial_dist.sum() - 1.0) > kRowSumTol)
      throw std::invalid_argument("initial distribution is not a probability vector");
    for (int s = 0; s < n_states; ++s) {
      if (!terminal[s]) continue;
      for (int a = 0; a < n_actions; ++a) {
        if (std::abs(transition[a](s, s) - 1.0) > kRowSumTol)
          throw std::invalid_argument("terminal state " + std::to_string(s) +
                                      " must self-loop");
        if (reward[a](s, s) != 0.0)
          throw std::invalid_argument("terminal state " + std::to_string(s) +
                                      " must self-loop with zero reward");
      }
    }
  }
};

namespace detail {

inline void check_policy_shape(const FiniteMdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("policy shape does not match mdp");
}

inline void check_q_shape(const FiniteMdp& mdp, const QTable& q) {
  if (q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions)
    throw std::invalid_argument("q table shape does not match mdp");
}

/// Policy-mixed transition matrix P(s, s2) = sum_a pi(a|s) p(s2|s, a).
inline Eigen::MatrixXd policy_transition(const FiniteMdp& mdp, const TabularPolicy& policy) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    p += (mdp.transition[a].array().colwise() * policy.probs.col(a).array()).matrix();
  return p;
}

/// Expected immediate reward per (s, a): sum_s2 p(s2|s,a) r(s,a,s2).
inline Eigen::MatrixXd expected_reward(const FiniteMdp& mdp) {
  Eigen::MatrixXd r(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a)
    r.col(a) = (mdp.transition[a].array() * mdp.reward[a].array()).rowwise().sum();
  return r;
}

}  // namespace detail

/// One application of the policy backup operator:
///   (T q)(s, a) = sum_s2 p(s2|s,a) [ r(s,a,s2) + g * mask(s2) * v(s2) ]
/// with v(s2) = sum_a2 pi(a2|s2) q(s2, a2).
inline QTable bellman_backup(const FiniteMdp& mdp, const QTable& q, const TabularPolicy& policy) {
  detail::check_policy_shape(mdp, policy);
  detail::check_q_shape(mdp, q);
  const Eigen::VectorXd v =
      ((policy.probs.array() * q.values.array()).rowwise().sum().matrix())
          .cwiseProduct(mdp.nonterminal_mask());
  QTable out = QTable::zeros(mdp.n_states, mdp.n_actions);
  const Eigen::MatrixXd r_bar = detail::expected_reward(mdp);
  for (int a = 0; a < mdp.n_actions; ++a)
    out.values.col(a) = r_bar.col(a) + mdp.discount * (mdp.transition[a] * v);
  return out;
}

/// Exact policy evaluation by direct linear solve of
///   (I - g P_pi M) v = R_pi,   M = diag(non-terminal mask),
/// followed by one backup to recover Q. Throws if the solve residual
/// exceeds tolerance, which cannot happen for a valid discount < 1.
inline QTable evaluate_policy_exact(const FiniteMdp& mdp, const TabularPolicy& policy) {
  detail::check_policy_shape(mdp, policy);
  const Eigen::MatrixXd p_pi = detail::policy_transition(mdp, policy);
  const Eigen::VectorXd mask = mdp.nonterminal_mask();
  const Eigen::MatrixXd r_bar = detail::expected_reward(mdp);
  const Eigen::VectorXd r_pi = (policy.probs.array() * r_bar.array()).rowwise().sum();

  Eigen::MatrixXd a_mat = Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) -
                          mdp.discount * (p_pi * mask.asDiagonal());
  const Eigen::VectorXd v = a_mat.partialPivLu().solve(r_pi);
  const double residual = (a_mat * v - r_pi).lpNorm<Eigen::Infinity>();
  const double scale = std::max(1.0, r_pi.lpNorm<Eigen::Infinity>());
  if (!v.allFinite() || residual > 1e-10 * scale)
    throw std::runtime_error("policy evaluation solve failed, residual " +
                             format_real(residual));

  const Eigen::VectorXd v_masked = v.cwiseProduct(mask);
  QTable q = QTable::zeros(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a)
    q.values.col(a) = r_bar.col(a) + mdp.discount * (mdp.transition[a] * v_masked);
  return q;
}

struct ValueIterationResult {
  QTable q;
  bool converged = false;
  long iterations = 0;
  double residual = 0.0;
};

/// Optimal-value iteration to a max-norm Bellman residual below tol.
inline ValueIterationResult value_iteration(const FiniteMdp& mdp, double tol = 1e-10,
                                            long max_iterations = 1000000) {
  if (tol <= 0.0) throw std::invalid_argument("tolerance must be positive");
  const Eigen::VectorXd mask = mdp.nonterminal_mask();
  const Eigen::MatrixXd r_bar = detail::expected_reward(mdp);
  QTable q = QTable::zeros(mdp.n_states, mdp.n_actions);
  QTable next = q;
  ValueIterationResult result;
  for (long it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd v = q.values.rowwise().maxCoeff().cwiseProduct(mask);
    for (int a = 0; a < mdp.n_actions; ++a)
      next.values.col(a) = r_bar.col(a) + mdp.discount * (mdp.transition[a] * v);
    const double delta = (next.values - q.values).lpNorm<Eigen::Infinity>();
    std::swap(q, next);
    result.iterations = it + 1;
    // q = T q_prev, so delta bounds the residual of the previous iterate and
    // g * delta bounds the residual of q itself.
    if (delta < tol) {
      result.converged = true;
      result.residual = delta;
      break;
    }
    result.residual = delta;
  }
  result.q = q;
  return result;
}

/// Greedy deterministic policy; ties resolve to the lowest action index.
inline TabularPolicy greedy_policy(const QTable& q) {
  std::vector<int> actions(q.n_states());
  for (int s = 0; s < q.n_states(); ++s) {
    int best = 0;
    for (int a = 1; a < q.n_actions(); ++a)
      if (q.values(s, a) > q.values(s, best)) best = a;
    actions[s] = best;
  }
  return TabularPolicy::deterministic(actions, q.n_actions());
}

/// States reachable from the support of the initial distribution through
/// positive-probability policy actions and transitions.
inline std::vector<std::uint8_t> reachable_states(const FiniteMdp& mdp,
                                                  const TabularPolicy& policy) {
  detail::check_policy_shape(mdp, policy);
  std::vector<std::uint8_t> seen(mdp.n_states, 0);
  std::deque<int> frontier;
  for (int s = 0; s < mdp.n_states; ++s)
    if (mdp.initial_dist(s) > 0.0) {
      seen[s] = 1;
      frontier.push_back(s);
    }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (policy.probs(s, a) <= 0.0) continue;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        if (mdp.transition[a](s, s2) > 0.0 && !seen[s2]) {
          seen[s2] = 1;
          frontier.push_back(s2);
        }
      }
    }
  }
  return seen;
}

/// Normalized discounted state visitation under a policy:
///   d = (1 - g) sum_t g^t Pr(s_t = s),
/// computed by solving (I - g P_pi^T) d = (1 - g) rho_0. Terminal states keep
/// accumulating mass through their self-loops, which is the convention the
/// normalization (sum d = 1) relies on. Support equals graph reachability;
/// entries outside it are exactly zero.
inline OccupancyVector occupancy(const FiniteMdp& mdp, const TabularPolicy& policy) {
  detail::check_policy_shape(mdp, policy);
  const Eigen::MatrixXd p_pi = detail::policy_transition(mdp, policy);
  Eigen::MatrixXd a_mat = Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) -
                          mdp.discount * p_pi.transpose();
  Eigen::VectorXd d = a_mat.partialPivLu().solve(
      ((1.0 - mdp.discount) * mdp.initial_dist).eval());
  if (!d.allFinite()) throw std::runtime_error("occupancy solve failed");
  const std::vector<std::uint8_t> reach = reachable_states(mdp, policy);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!reach[s])
      d(s) = 0.0;
    else if (d(s) < 0.0)
      d(s) = 0.0;
  }
  return OccupancyVector{d, true};
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n_episodes = 0;
};

namespace detail {

inline McEstimate summarize(const std::vector<double>& returns) {
  McEstimate est;
  est.n_episodes = static_cast<long>(returns.size());
  if (returns.empty()) return est;
  double sum = 0.0;
  for (double r : returns) sum += r;
  est.mean = sum / returns.size();
  if (returns.size() > 1) {
    double ss = 0.0;
    for (double r : returns) ss += (r - est.mean) * (r - est.mean);
    est.std_error = std::sqrt(ss / (returns.size() - 1)) / std::sqrt(double(returns.size()));
  }
  return est;
}

}  // namespace detail

/// Single discounted rollout from a given state (optionally forcing the first
/// action), following the policy until a terminal state or the horizon.
inline double mc_rollout(const FiniteMdp& mdp, const TabularPolicy& policy, int start_state,
                         int first_action, long horizon, Rng& rng) {
  double ret = 0.0;
  double disc = 1.0;
  int s = start_state;
  for (long t = 0; t < horizon; ++t) {
    if (mdp.is_terminal(s)) break;
    const int a = (t == 0 && first_action >= 0) ? first_action
                                                : rng.categorical(policy.probs.row(s));
    const int s2 = rng.categorical(mdp.transition[a].row(s));
    ret += disc * mdp.reward[a](s, s2);
    disc *= mdp.discount;
    s = s2;
  }
  return ret;
}

/// Monte-Carlo estimate of the discounted return from the initial
/// distribution. Horizon truncation bias is bounded by g^horizon * r_max
/// / (1 - g); pick the horizon accordingly.
inline McEstimate mc_return(const FiniteMdp& mdp, const TabularPolicy& policy, long n_episodes,
                            long horizon, Rng& rng) {
  detail::check_policy_shape(mdp, policy);
  if (n_episodes <= 0 || horizon <= 0)
    throw std::invalid_argument("episode count and horizon must be positive");
  std::vector<double> returns;
  returns.reserve(n_episodes);
  for (long e = 0; e < n_episodes; ++e) {
    const int s0 = rng.categorical(mdp.initial_dist);
    returns.push_back(mc_rollout(mdp, policy, s0, -1, horizon, rng));
  }
  return detail::summarize(returns);
}

// ---------------------------------------------------------------------------
// Serialization. One JSON document per MDP; tensors are nested [s][a][s2]
// arrays; reals carry 17 significant digits so a load of a save is bit-exact.
// ---------------------------------------------------------------------------

inline std::string to_json_text(const FiniteMdp& mdp) {
  mdp.validate();
  std::string out;
  out.reserve(static_cast<size_t>(mdp.n_states) * mdp.n_states * mdp.n_actions * 12 + 256);
  out += "{\n\"n_states\": " + std::to_string(mdp.n_states);
  out += ",\n\"n_actions\": " + std::to_string(mdp.n_actions);
  out += ",\n\"gamma\": " + format_real(mdp.discount);
  auto emit_tensor = [&](const std::vector<Eigen::MatrixXd>& tensor) {
    out += "[";
    for (int s = 0; s < mdp.n_states; ++s) {
      if (s) out += ",";
      out += "\n [";
      for (int a = 0; a < mdp.n_actions; ++a) {
        if (a) out += ",";
        out += "[";
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          if (s2) out += ",";
          out += format_real(tensor[a](s, s2));
        }
        out += "]";
      }
      out += "]";
    }
    out += "]";
  };
  out += ",\n\"transition\": ";
  emit_tensor(mdp.transition);
  out += ",\n\"reward\": ";
  emit_tensor(mdp.reward);
  out += ",\n\"initial_dist\": [";
  for (int s = 0; s < mdp.n_states; ++s) {
    if (s) out += ",";
    out += format_real(mdp.initial_dist(s));
  }
  out += "],\n\"terminal\": [";
  for (int s = 0; s < mdp.n_states; ++s) {
    if (s) out += ",";
    out += mdp.terminal[s] ? "true" : "false";
  }
  out += "]\n}\n";
  return out;
}

inline FiniteMdp mdp_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("mdp parse error at byte ") +
                             std::to_string(e.byte) + ": " + e.what());
  }
  for (const char* key :
       {"n_states", "n_actions", "gamma", "transition", "reward", "initial_dist", "terminal"}) {
    if (!doc.contains(key)) throw std::runtime_error(std::string("mdp missing field: ") + key);
  }
  FiniteMdp mdp;
  mdp.n_states = doc["n_states"].get<int>();
  mdp.n_actions = doc["n_actions"].get<int>();
  mdp.discount = doc["gamma"].get<double>();
  if (mdp.n_states <= 0 || mdp.n_actions <= 0)
    throw std::runtime_error("mdp dimensions must be positive");
  auto read_tensor = [&](const nlohmann::json& node, const char* name) {
    std::vector<Eigen::MatrixXd> tensor(mdp.n_actions,
                                        Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states));
    if (static_cast<int>(node.size()) != mdp.n_states)
      throw std::runtime_error(std::string(name) + " outer size mismatch");
    for (int s = 0; s < mdp.n_states; ++s) {
      if (static_cast<int>(node[s].size()) != mdp.n_actions)
        throw std::runtime_error(std::string(name) + " action size mismatch");
      for (int a = 0; a < mdp.n_actions; ++a) {
        if (static_cast<int>(node[s][a].size()) != mdp.n_states)
          throw std::runtime_error(std::string(name) + " successor size mismatch");
        for (int s2 = 0; s2 < mdp.n_states; ++s2)
          tensor[a](s, s2) = node[s][a][s2].get<double>();
      }
    }
    return tensor;
  };
  mdp.transition = read_tensor(doc["transition"], "transition");
  mdp.reward = read_tensor(doc["reward"], "reward");
  if (static_cast<int>(doc["initial_dist"].size()) != mdp.n_states)
    throw std::runtime_error("initial_dist size mismatch");
  mdp.initial_dist.resize(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) mdp.initial_dist(s) = doc["initial_dist"][s].get<double>();
  if (static_cast<int>(doc["terminal"].size()) != mdp.n_states)
    throw std::runtime_error("terminal size mismatch");
  mdp.terminal.resize(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) mdp.terminal[s] = doc["terminal"][s].get<bool>() ? 1 : 0;
  mdp.validate();
  return mdp;
}

inline void save_mdp(const FiniteMdp& mdp, const std::string& path) {
  write_text_file(path, to_json_text(mdp));
}

inline FiniteMdp load_mdp(const std::string& path) {
  return mdp_from_json_text(read_text_file(path));
}

}  // namespace bcqlab
