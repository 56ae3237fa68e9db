#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "bcqlab/nn.hpp"
#include "bcqlab/replay.hpp"
#include "bcqlab/rng.hpp"

namespace bcqlab {

struct DdpgConfig {
  int state_dim = 0;
  int action_dim = 0;
  double max_action = 1.0;
  int h1 = 400, h2 = 300;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double critic_l2 = 1e-2;  // folded into the critic loss
  double gamma = 0.99;
  double tau = 0.005;

  void validate() const {
    if (state_dim <= 0 || action_dim <= 0)
      throw std::invalid_argument("agent dimensions must be positive");
    if (!(max_action > 0.0)) throw std::invalid_argument("action bound must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    if (critic_l2 < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
  }
};

/// Deterministic-policy objective: mean critic value of the actor's actions.
/// Accumulates the gradient of the NEGATED objective (a descent direction for
/// ascent on value) into actor_grad and returns the objective itself.
inline double deterministic_policy_objective(const TwoStreamCritic& critic, const Mlp& actor,
                                             const Eigen::MatrixXd& states,
                                             Eigen::VectorXd& actor_grad) {
  MlpCache actor_cache;
  const Eigen::MatrixXd actions = actor.forward(states, &actor_cache);
  TwoStreamCritic::Cache critic_cache;
  const Eigen::MatrixXd q = critic.forward(states, actions, &critic_cache);
  const double objective = q.mean();

  const Eigen::MatrixXd dq =
      Eigen::MatrixXd::Constant(1, q.cols(), -1.0 / static_cast<double>(q.cols()));
  Eigen::VectorXd critic_scratch = Eigen::VectorXd::Zero(critic.n_params());
  Eigen::MatrixXd d_action;
  critic.backward(critic_cache, dq, critic_scratch, &d_action);
  actor.backward(actor_cache, d_action, actor_grad);
  return objective;
}

class DdpgAgent {
 public:
  DdpgAgent(DdpgConfig cfg, unsigned long long seed)
      : cfg_(validated(std::move(cfg))),
        init_rng_(derive_seed(seed, 0x646470)),
        actor_(actor_spec(cfg_), init_rng_),
        critic_(cfg_.state_dim, cfg_.action_dim, cfg_.h1, cfg_.h2, init_rng_),
        actor_target_(actor_),
        critic_target_(critic_),
        actor_opt_(actor_.n_params(), cfg_.actor_lr),
        critic_opt_(critic_.n_params(), cfg_.critic_lr) {}

  const DdpgConfig& config() const { return cfg_; }
  Mlp& actor() { return actor_; }
  const Mlp& actor() const { return actor_; }
  TwoStreamCritic& critic() { return critic_; }
  const TwoStreamCritic& critic() const { return critic_; }
  const Mlp& actor_target() const { return actor_target_; }
  const TwoStreamCritic& critic_target() const { return critic_target_; }
  Mlp& actor_target_mutable() { return actor_target_; }
  TwoStreamCritic& critic_target_mutable() { return critic_target_; }

  Eigen::VectorXd act(const Eigen::VectorXd& state) const { return actor_.forward(state); }

  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng&) const { return act(state); }

  Eigen::VectorXd act_noisy(const Eigen::VectorXd& state, Rng& rng, double sigma) const {
    Eigen::VectorXd a = act(state);
    for (int i = 0; i < a.size(); ++i) {
      a(i) += sigma * rng.normal();
      if (a(i) > cfg_.max_action) a(i) = cfg_.max_action;
      if (a(i) < -cfg_.max_action) a(i) = -cfg_.max_action;
    }
    return a;
  }

  Eigen::VectorXd compute_targets(const MinibatchC& mb) const {
    const Eigen::MatrixXd next_actions = actor_target_.forward(mb.s_next);
    const Eigen::MatrixXd q_next = critic_target_.forward(mb.s_next, next_actions);
    return mb.r.array() +
           cfg_.gamma * mb.not_terminal.array() * q_next.row(0).transpose().array();
  }

  struct TrainStats {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
    double target_mean = 0.0;
  };

  /// One update: critic regression toward the bootstrapped targets, actor
  /// ascent on the critic, then soft target refresh.
  TrainStats train_iteration(const MinibatchC& mb) {
    TrainStats stats;
    const Eigen::VectorXd y = compute_targets(mb);
    stats.target_mean = y.mean();

    TwoStreamCritic::Cache cache;
    const Eigen::MatrixXd q = critic_.forward(mb.s, mb.a, &cache);
    const Eigen::VectorXd err = q.row(0).transpose() - y;
    stats.critic_loss = err.squaredNorm() / mb.size() +
                        cfg_.critic_l2 * critic_.params().squaredNorm();
    Eigen::VectorXd critic_grad = Eigen::VectorXd::Zero(critic_.n_params());
    const Eigen::MatrixXd dq = (2.0 / mb.size()) * err.transpose();
    critic_.backward(cache, dq, critic_grad);
    critic_grad += 2.0 * cfg_.critic_l2 * critic_.params();
    adam_step(critic_opt_, critic_.params(), critic_grad);

    Eigen::VectorXd actor_grad = Eigen::VectorXd::Zero(actor_.n_params());
    stats.actor_objective = deterministic_policy_objective(critic_, actor_, mb.s, actor_grad);
    adam_step(actor_opt_, actor_.params(), actor_grad);

    polyak_update(critic_target_.params(), critic_.params(), cfg_.tau);
    polyak_update(actor_target_.params(), actor_.params(), cfg_.tau);
    return stats;
  }

  double value_estimate(const Eigen::MatrixXd& states) const {
    const Eigen::MatrixXd actions = actor_.forward(states);
    return critic_.forward(states, actions).mean();
  }

 private:
  static DdpgConfig validated(DdpgConfig cfg) {
    cfg.validate();
    return cfg;
  }
  static MlpSpec actor_spec(const DdpgConfig& cfg) {
    return MlpSpec{{cfg.state_dim, cfg.h1, cfg.h2, cfg.action_dim}, Head::scaled_tanh,
                   cfg.max_action};
  }

  DdpgConfig cfg_;
  Rng init_rng_;
  Mlp actor_;
  TwoStreamCritic critic_;
  Mlp actor_target_;
  TwoStreamCritic critic_target_;
  AdamState actor_opt_;
  AdamState critic_opt_;
};

}  // namespace bcqlab
