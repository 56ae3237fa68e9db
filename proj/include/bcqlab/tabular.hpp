#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bcqlab/batch.hpp"
#include "bcqlab/mdp.hpp"
#include "bcqlab/rng.hpp"

namespace bcqlab {

/// Step-size schedule for tabular updates, driven by per-pair visit counts.
/// The polynomial form alpha0 / n^omega with omega in (0.5, 1] satisfies the
/// usual stochastic-approximation conditions (sum alpha = inf, sum alpha^2 <
/// inf); the constant form is exact on deterministic targets.
struct LearningSchedule {
  enum class Kind { constant, polynomial };
  Kind kind = Kind::polynomial;
  double alpha0 = 1.0;
  double omega = 0.8;

  static LearningSchedule constant_rate(double alpha) {
    LearningSchedule s;
    s.kind = Kind::constant;
    s.alpha0 = alpha;
    s.validate();
    return s;
  }

  static LearningSchedule polynomial_decay(double alpha0 = 1.0, double omega = 0.8) {
    LearningSchedule s;
    s.kind = Kind::polynomial;
    s.alpha0 = alpha0;
    s.omega = omega;
    s.validate();
    return s;
  }

  void validate() const {
    if (!(alpha0 > 0.0 && alpha0 <= 1.0))
      throw std::invalid_argument("alpha0 must lie in (0, 1]");
    if (kind == Kind::polynomial && !(omega > 0.5 && omega <= 1.0))
      throw std::invalid_argument("omega must lie in (0.5, 1]");
  }

  /// Step size for the n-th visit of a pair (n starts at 1).
  double rate(long n) const {
    if (n < 1) throw std::invalid_argument("visit count must be at least 1");
    return kind == Kind::constant ? alpha0 : alpha0 / std::pow(double(n), omega);
  }
};

/// One unconstrained Q-learning update on a logged transition. Terminal
/// successors contribute no bootstrap; truncated ones bootstrap normally.
/// Returns the signed change applied to q(s, a).
inline double q_learning_step(QTable& q, const DiscreteTransition& t, double alpha,
                              double gamma) {
  const double boot = t.terminal ? 0.0 : q.values.row(t.s_next).maxCoeff();
  const double delta = alpha * (t.r + gamma * boot - q.values(t.s, t.a));
  q.values(t.s, t.a) += delta;
  return delta;
}

/// Per-state sets of actions present in a batch, in ascending order.
class BatchActionSets {
 public:
  BatchActionSets(const Batch& batch, int n_states, int n_actions)
      : n_actions_(n_actions), per_state_(n_states) {
    detail::require_discrete(batch, "BatchActionSets");
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n_states, n_actions);
    for (const auto& t : batch.d) {
      if (t.s >= n_states || t.a >= n_actions)
        throw std::invalid_argument("batch transition outside table dimensions");
      seen(t.s, t.a) = 1;
    }
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a)
        if (seen(s, a)) per_state_[s].push_back(a);
  }

  explicit BatchActionSets(const Batch& batch)
      : BatchActionSets(batch, batch.meta.state_dim, batch.meta.action_dim) {}

  int n_states() const { return static_cast<int>(per_state_.size()); }
  int n_actions() const { return n_actions_; }

  bool has(int s, int a) const {
    const auto& v = per_state_[s];
    return std::binary_search(v.begin(), v.end(), a);
  }

  const std::vector<int>& at(int s) const { return per_state_[s]; }

  long covered_states() const {
    long n = 0;
    for (const auto& v : per_state_) n += !v.empty();
    return n;
  }

 private:
  int n_actions_;
  std::vector<std::vector<int>> per_state_;
};

/// One batch-constrained Q-learning update: the bootstrap maximizes only over
/// actions the batch contains at the successor state. A non-terminal
/// successor with no batch actions (possible only in incoherent batches)
/// bootstraps q_init, the value every unseen pair keeps. Returns the signed
/// change applied to q(s, a); `boot_action` receives the action that realized
/// the bootstrap (-1 for terminal successors and q_init fallbacks).
inline double bcql_step(QTable& q, const DiscreteTransition& t, double alpha, double gamma,
                        const BatchActionSets& sets, double q_init,
                        int* boot_action = nullptr) {
  double boot = 0.0;
  int chosen = -1;
  if (!t.terminal) {
    const auto& acts = sets.at(t.s_next);
    if (acts.empty()) {
      boot = q_init;
    } else {
      chosen = acts[0];
      boot = q.values(t.s_next, acts[0]);
      for (size_t i = 1; i < acts.size(); ++i) {
        if (q.values(t.s_next, acts[i]) > boot) {
          boot = q.values(t.s_next, acts[i]);
          chosen = acts[i];
        }
      }
    }
  }
  if (boot_action) *boot_action = chosen;
  const double delta = alpha * (t.r + gamma * boot - q.values(t.s, t.a));
  q.values(t.s, t.a) += delta;
  return delta;
}

struct TabularTrainConfig {
  long iterations = 100000;
  LearningSchedule schedule = LearningSchedule::polynomial_decay();
  double gamma = 0.99;
  double q_init = 0.0;
  std::uint64_t rng_seed = 0;
  double convergence_tol = 1e-6;  // largest update magnitude over a window
  long window = 1000;             // iterations per convergence window / trace row

  void validate() const {
    if (iterations <= 0) throw std::invalid_argument("iterations must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (convergence_tol < 0.0) throw std::invalid_argument("tolerance must be non-negative");
    if (window <= 0) throw std::invalid_argument("window must be positive");
    schedule.validate();
  }
};

struct TraceRow {
  long iteration = 0;
  double max_delta = 0.0;
  double q_norm = 0.0;
};

struct TabularTrainResult {
  QTable q;
  std::vector<TraceRow> trace;
  bool converged = false;
  long iterations_run = 0;
  // Number of constrained bootstraps that fell back to q_init because the
  // successor had no batch actions. Zero on coherent batches.
  long empty_set_fallbacks = 0;
  // Number of constrained bootstraps resolved through an action missing from
  // the batch. Zero by construction; recorded to make the claim checkable.
  long unconstrained_bootstraps = 0;
};

/// Trains a Q-table on a fixed batch by uniform transition sampling, either
/// unconstrained (plain Q-learning) or batch-constrained. The table starts at
/// q_init everywhere, so pairs the batch never visits keep exactly the value
/// the empirical model assigns them. Stops early once no update in a window
/// of `cfg.window` iterations exceeds cfg.convergence_tol.
inline TabularTrainResult train_tabular(
    const Batch& batch, const TabularTrainConfig& cfg, bool constrained,
    const std::function<void(long, const QTable&)>& on_window = {}) {
  detail::require_discrete(batch, "train_tabular");
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("cannot train on an empty batch");
  const int n_states = batch.meta.state_dim;
  const int n_actions = batch.meta.action_dim;
  const BatchActionSets sets(batch, n_states, n_actions);
  Rng rng(derive_seed(cfg.rng_seed, 0x746162ULL));
  Eigen::MatrixXi visits = Eigen::MatrixXi::Zero(n_states, n_actions);

  TabularTrainResult result;
  result.q = QTable::constant(n_states, n_actions, cfg.q_init);
  if (on_window) on_window(0, result.q);
  double window_max = 0.0;
  const long n = batch.size();
  for (long it = 0; it < cfg.iterations; ++it) {
    const DiscreteTransition& t = batch.d[rng.uniform_int(static_cast<int>(n))];
    const double alpha = cfg.schedule.rate(++visits(t.s, t.a));
    double delta;
    if (constrained) {
      int boot_action = -1;
      delta = bcql_step(result.q, t, alpha, cfg.gamma, sets, cfg.q_init, &boot_action);
      if (boot_action < 0) {
        result.empty_set_fallbacks += !t.terminal;
      } else if (!sets.has(t.s_next, boot_action)) {
        ++result.unconstrained_bootstraps;
      }
    } else {
      delta = q_learning_step(result.q, t, alpha, cfg.gamma);
    }
    window_max = std::max(window_max, std::abs(delta));
    result.iterations_run = it + 1;
    if ((it + 1) % cfg.window == 0) {
      result.trace.push_back(
          TraceRow{it + 1, window_max, result.q.values.lpNorm<Eigen::Infinity>()});
      if (on_window) on_window(it + 1, result.q);
      if (window_max < cfg.convergence_tol) {
        result.converged = true;
        break;
      }
      window_max = 0.0;
    }
  }
  return result;
}

/// Greedy policy over batch actions only. States the batch never visits are
/// uncovered: they carry the sentinel -1 and querying them is an error.
struct BcqPolicyExtraction {
  std::vector<int> action_per_state;
  std::vector<int> uncovered;
  int n_actions = 0;

  bool covered(int s) const { return action_per_state[s] >= 0; }

  int action_at(int s) const {
    if (s < 0 || s >= static_cast<int>(action_per_state.size()))
      throw std::out_of_range("state out of range");
    if (!covered(s))
      throw std::domain_error("state " + std::to_string(s) +
                              " is not covered by the batch; no action is defined");
    return action_per_state[s];
  }

  /// Full tabular policy with `fill_action` at uncovered states. Values
  /// computed at uncovered states are meaningless; on coherent batches the
  /// covered region is closed, so values on it are unaffected by the fill.
  TabularPolicy to_tabular(int fill_action = 0) const {
    std::vector<int> actions = action_per_state;
    for (int& a : actions)
      if (a < 0) a = fill_action;
    return TabularPolicy::deterministic(actions, n_actions);
  }
};

inline BcqPolicyExtraction extract_bcq_policy(const QTable& q, const BatchActionSets& sets) {
  if (q.n_states() != sets.n_states() || q.n_actions() != sets.n_actions())
    throw std::invalid_argument("q table shape does not match action sets");
  BcqPolicyExtraction out;
  out.n_actions = q.n_actions();
  out.action_per_state.assign(q.n_states(), -1);
  for (int s = 0; s < q.n_states(); ++s) {
    const auto& acts = sets.at(s);
    if (acts.empty()) {
      out.uncovered.push_back(s);
      continue;
    }
    int best = acts[0];
    for (size_t i = 1; i < acts.size(); ++i)
      if (q.values(s, acts[i]) > q.values(s, best)) best = acts[i];
    out.action_per_state[s] = best;
  }
  return out;
}

}  // namespace bcqlab
