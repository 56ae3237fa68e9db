#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bcqlab/batch.hpp"
#include "bcqlab/envs.hpp"
#include "bcqlab/tabular.hpp"

namespace bcqlab {

// Kernel-averaged batch value iteration. Each action's Q-function is a
// kernel-weighted average over that action's stored transitions:
//   Q(s, a) = sum_i k(s, s_i) [ r_i + g V(s2_i) ] / sum_i k(s, s_i)
// with k(x, y) = phi(|x - y| / bandwidth), and V(s2) the max of Q(s2, b) over
// the actions b that occur at exactly the state s2 somewhere in the batch.
// The iteration alternates Q on stored pairs with V on stored successors and
// is a sup-norm contraction with modulus g.
//
// Discrete batches are embedded on the real line, state i at coordinate i.

struct KernelConfig {
  double bandwidth = 1.0;
  // Nonnegative, decreasing on [0, inf); the default is exp(-x^2).
  std::function<double(double)> phi = [](double x) { return std::exp(-x * x); };

  void validate() const {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
    if (!phi) throw std::invalid_argument("kernel density must be callable");
  }
};

class KbrlModel {
 public:
  struct Sample {
    Eigen::VectorXd s;
    double r = 0.0;
    Eigen::VectorXd s_next;
    bool terminal = false;
    double v_next = 0.0;  // current estimate of V(s_next); 0 when terminal
  };

  KbrlModel(int n_actions, int state_dim, double discount, KernelConfig kernel)
      : n_actions_(n_actions),
        state_dim_(state_dim),
        discount_(discount),
        kernel_(std::move(kernel)),
        samples_(n_actions) {
    if (n_actions <= 0 || state_dim <= 0)
      throw std::invalid_argument("model dimensions must be positive");
    if (!(discount >= 0.0 && discount < 1.0))
      throw std::invalid_argument("discount must lie in [0, 1)");
    kernel_.validate();
  }

  void add_sample(int a, Eigen::VectorXd s, double r, Eigen::VectorXd s_next, bool terminal) {
    if (a < 0 || a >= n_actions_) throw std::invalid_argument("action out of range");
    if (s.size() != state_dim_ || s_next.size() != state_dim_)
      throw std::invalid_argument("sample state dimension mismatch");
    samples_[a].push_back(Sample{std::move(s), r, std::move(s_next), terminal, 0.0});
  }

  int n_actions() const { return n_actions_; }
  int state_dim() const { return state_dim_; }
  double discount() const { return discount_; }
  const std::vector<Sample>& samples(int a) const { return samples_[a]; }
  bool has_action(int a) const { return a >= 0 && a < n_actions_ && !samples_[a].empty(); }

  /// Normalized kernel weights of action a's samples at a query state. If
  /// every density underflows to zero the nearest sample takes all the mass.
  Eigen::VectorXd weights(const Eigen::VectorXd& s, int a) const {
    require_action(a);
    const auto& rows = samples_[a];
    Eigen::VectorXd w(rows.size());
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < rows.size(); ++i) {
      const double dist = (s - rows[i].s).norm();
      if (dist < best) {
        best = dist;
        nearest = static_cast<int>(i);
      }
      w(i) = kernel_.phi(dist / kernel_.bandwidth);
      if (!(w(i) >= 0.0)) throw std::runtime_error("kernel density returned a negative value");
    }
    const double total = w.sum();
    if (total <= 0.0) {
      w.setZero();
      w(nearest) = 1.0;
      return w;
    }
    return w / total;
  }

  double q(const Eigen::VectorXd& s, int a) const {
    require_action(a);
    if (s.size() != state_dim_) throw std::invalid_argument("query state dimension mismatch");
    const Eigen::VectorXd w = weights(s, a);
    const auto& rows = samples_[a];
    double acc = 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
      const double target = rows[i].r + (rows[i].terminal ? 0.0 : discount_ * rows[i].v_next);
      acc += w(i) * target;
    }
    return acc;
  }

  /// Actions with at least one sample whose source state equals x exactly.
  std::vector<int> actions_at(const Eigen::VectorXd& x) const {
    std::vector<int> out;
    for (int a = 0; a < n_actions_; ++a) {
      for (const auto& row : samples_[a]) {
        if (row.s == x) {
          out.push_back(a);
          break;
        }
      }
    }
    return out;
  }

  /// Greedy action over sampled actions at a query state; lowest index wins
  /// ties. Throws if the model holds no samples at all.
  int act(const Eigen::VectorXd& s) const {
    int best = -1;
    double best_q = 0.0;
    for (int a = 0; a < n_actions_; ++a) {
      if (samples_[a].empty()) continue;
      const double qa = q(s, a);
      if (best < 0 || qa > best_q) {
        best = a;
        best_q = qa;
      }
    }
    if (best < 0) throw std::runtime_error("model holds no samples");
    return best;
  }

  struct IterateResult {
    bool converged = false;
    long sweeps = 0;
    double last_change = 0.0;
  };

  /// Runs the fitted value iteration to within tol (max successor-value
  /// change per sweep).
  IterateResult iterate(double tol = 1e-12, long max_sweeps = 100000) {
    if (tol <= 0.0) throw std::invalid_argument("tolerance must be positive");
    IterateResult result;
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
      double change = 0.0;
      std::vector<std::vector<double>> fresh(n_actions_);
      for (int a = 0; a < n_actions_; ++a) {
        fresh[a].resize(samples_[a].size());
        for (size_t i = 0; i < samples_[a].size(); ++i) {
          const auto& row = samples_[a][i];
          if (row.terminal) {
            fresh[a][i] = 0.0;
            continue;
          }
          const auto acts = actions_at(row.s_next);
          double v = 0.0;  // dangling successors are worth nothing
          for (size_t k = 0; k < acts.size(); ++k) {
            const double qa = q(row.s_next, acts[k]);
            if (k == 0 || qa > v) v = qa;
          }
          fresh[a][i] = v;
        }
      }
      for (int a = 0; a < n_actions_; ++a)
        for (size_t i = 0; i < samples_[a].size(); ++i) {
          change = std::max(change, std::abs(fresh[a][i] - samples_[a][i].v_next));
          samples_[a][i].v_next = fresh[a][i];
        }
      result.sweeps = sweep + 1;
      result.last_change = change;
      if (change <= tol) {
        result.converged = true;
        break;
      }
    }
    return result;
  }

 private:
  void require_action(int a) const {
    if (a < 0 || a >= n_actions_) throw std::invalid_argument("action out of range");
    if (samples_[a].empty())
      throw std::invalid_argument("action " + std::to_string(a) + " has no samples");
  }

  int n_actions_;
  int state_dim_;
  double discount_;
  KernelConfig kernel_;
  std::vector<std::vector<Sample>> samples_;
};

/// Embeds state index i at coordinate i on the real line.
inline Eigen::VectorXd embed_state(int s) {
  Eigen::VectorXd v(1);
  v(0) = static_cast<double>(s);
  return v;
}

/// Builds a kernel model from a discrete batch via the scalar embedding.
inline KbrlModel make_kbrl_model(const Batch& batch, double discount,
                                 KernelConfig kernel = KernelConfig{}) {
  detail::require_discrete(batch, "make_kbrl_model");
  if (batch.empty()) throw std::invalid_argument("cannot build a kernel model from an empty batch");
  KbrlModel model(batch.meta.action_dim, 1, discount, std::move(kernel));
  for (const auto& t : batch.d)
    model.add_sample(t.a, embed_state(t.s), t.r, embed_state(t.s_next), t.terminal);
  return model;
}

/// Side-by-side run of the kernel learner and constrained Q-learning on the
/// minimal two-state batch, reporting how the kernel's shared extrapolation
/// collapses the policy while the constrained learner recovers the optimum.
struct TwoStateDemoReport {
  double discount = 0.0;
  double kbrl_q_s0_a0 = 0.0, kbrl_q_s0_a1 = 0.0;
  double kbrl_q_s1_a0 = 0.0, kbrl_q_s1_a1 = 0.0;
  std::vector<int> kbrl_policy;   // greedy per state
  double kbrl_return_s0 = 0.0;    // exact value of that policy in the true MDP
  std::vector<int> bcql_policy;
  double bcql_return_s0 = 0.0;
  double optimal_return_s0 = 0.0;
  bool kbrl_degenerate = false;
  bool bcql_recovers_optimal = false;
};

inline TwoStateDemoReport two_state_demo(double discount = 0.99) {
  const FiniteMdp mdp = make_two_state(discount);
  Batch batch;
  batch.meta = BatchMeta{"two-state", 2, 2, "alternating", 0};
  batch.d = {{0, 1, 1.0, 1, false, false}, {1, 0, 0.0, 0, false, false}};

  TwoStateDemoReport report;
  report.discount = discount;

  KbrlModel model = make_kbrl_model(batch, discount);
  model.iterate(1e-13);
  report.kbrl_q_s0_a0 = model.q(embed_state(0), 0);
  report.kbrl_q_s0_a1 = model.q(embed_state(0), 1);
  report.kbrl_q_s1_a0 = model.q(embed_state(1), 0);
  report.kbrl_q_s1_a1 = model.q(embed_state(1), 1);
  report.kbrl_policy = {model.act(embed_state(0)), model.act(embed_state(1))};
  const auto kbrl_pol = TabularPolicy::deterministic(report.kbrl_policy, 2);
  const QTable q_kbrl = evaluate_policy_exact(mdp, kbrl_pol);
  report.kbrl_return_s0 = q_kbrl.values(0, report.kbrl_policy[0]);
  report.kbrl_degenerate = report.kbrl_policy[0] == 1 && report.kbrl_policy[1] == 1;

  TabularTrainConfig cfg;
  cfg.iterations = 200000;
  cfg.schedule = LearningSchedule::constant_rate(1.0);
  cfg.gamma = discount;
  cfg.rng_seed = 0;
  cfg.convergence_tol = 1e-13;
  const auto trained = train_tabular(batch, cfg, true);
  const auto ext = extract_bcq_policy(trained.q, BatchActionSets(batch));
  report.bcql_policy = {ext.action_at(0), ext.action_at(1)};
  const QTable q_bcql = evaluate_policy_exact(mdp, ext.to_tabular(0));
  report.bcql_return_s0 = q_bcql.values(0, report.bcql_policy[0]);

  const auto vi = value_iteration(mdp, 1e-13);
  report.optimal_return_s0 = vi.q.values.row(0).maxCoeff();
  report.bcql_recovers_optimal =
      std::abs(report.bcql_return_s0 - report.optimal_return_s0) < 1e-8;
  return report;
}

}  // namespace bcqlab
