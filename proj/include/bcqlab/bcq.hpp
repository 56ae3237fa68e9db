#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "bcqlab/nn.hpp"
#include "bcqlab/replay.hpp"
#include "bcqlab/rng.hpp"
#include "bcqlab/vae.hpp"

namespace bcqlab {

struct BcqConfig {
  int state_dim = 0;
  int action_dim = 0;
  double max_action = 1.0;
  int h1 = 400, h2 = 300;                // critic and perturbation widths
  std::vector<int> vae_hidden = {750, 750};
  int latent_dim = 0;                    // 0 means twice the action dimension
  double lr = 1e-3;                      // all five optimizers
  double gamma = 0.99;
  double tau = 0.005;
  double lambda = 0.75;                  // weight on the pessimistic twin
  int n_candidates = 10;
  double phi = 0.05;                     // perturbation radius, fraction of the bound
  double vae_l2 = 0.0;

  void validate() const {
    if (state_dim <= 0 || action_dim <= 0)
      throw std::invalid_argument("agent dimensions must be positive");
    if (!(max_action > 0.0)) throw std::invalid_argument("action bound must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
    if (n_candidates <= 0) throw std::invalid_argument("candidate count must be positive");
    if (!(phi >= 0.0)) throw std::invalid_argument("perturbation radius must be non-negative");
  }
};

/// Mean critic value of perturbed actions: objective = mean Q([s; a + xi(s, a)])
/// over the columns. Accumulates the gradient of the NEGATED objective into
/// xi_grad and returns the objective.
inline double perturbed_value_objective(const Mlp& critic, const Mlp& perturbation,
                                        const Eigen::MatrixXd& states,
                                        const Eigen::MatrixXd& actions,
                                        Eigen::VectorXd& xi_grad) {
  const int a_dim = static_cast<int>(actions.rows());
  MlpCache xi_cache;
  const Eigen::MatrixXd xi = perturbation.forward(vstack(states, actions), &xi_cache);
  MlpCache q_cache;
  const Eigen::MatrixXd q = critic.forward(vstack(states, actions + xi), &q_cache);
  const double objective = q.mean();

  const Eigen::MatrixXd dq =
      Eigen::MatrixXd::Constant(1, q.cols(), -1.0 / static_cast<double>(q.cols()));
  Eigen::VectorXd critic_scratch = Eigen::VectorXd::Zero(critic.n_params());
  const Eigen::MatrixXd d_input = critic.backward(q_cache, dq, critic_scratch);
  perturbation.backward(xi_cache, d_input.bottomRows(a_dim), xi_grad);
  return objective;
}

/// Batch-constrained agent for continuous control: a conditional generator
/// proposes batch-like candidate actions, a bounded perturbation widens the
/// search locally, and twin critics with a pessimism-weighted target score
/// them.
///
/// Randomness order within train_iteration, for reproducibility: generator
/// reparameterization noise first, then target candidate latents, then the
/// perturbation step's fresh candidate latents.
class BcqAgent {
 public:
  BcqAgent(BcqConfig cfg, unsigned long long seed)
      : cfg_(validated(std::move(cfg))),
        init_rng_(derive_seed(seed, 0x626371)),
        critic1_(critic_spec(cfg_), init_rng_),
        critic2_(critic_spec(cfg_), init_rng_),
        perturbation_(perturbation_spec(cfg_), init_rng_),
        vae_(vae_config(cfg_), init_rng_),
        critic1_target_(critic1_),
        critic2_target_(critic2_),
        perturbation_target_(perturbation_),
        critic1_opt_(critic1_.n_params(), cfg_.lr),
        critic2_opt_(critic2_.n_params(), cfg_.lr),
        perturbation_opt_(perturbation_.n_params(), cfg_.lr),
        encoder_opt_(vae_.encoder().n_params(), cfg_.lr),
        decoder_opt_(vae_.decoder().n_params(), cfg_.lr) {}

  const BcqConfig& config() const { return cfg_; }
  Mlp& critic1() { return critic1_; }
  Mlp& critic2() { return critic2_; }
  Mlp& perturbation() { return perturbation_; }
  Vae& generator() { return vae_; }
  const Mlp& critic1() const { return critic1_; }
  const Mlp& critic2() const { return critic2_; }
  const Mlp& perturbation() const { return perturbation_; }
  const Vae& generator() const { return vae_; }
  const Mlp& critic1_target() const { return critic1_target_; }
  const Mlp& critic2_target() const { return critic2_target_; }
  const Mlp& perturbation_target() const { return perturbation_target_; }
  Mlp& critic1_target_mutable() { return critic1_target_; }
  Mlp& critic2_target_mutable() { return critic2_target_; }
  Mlp& perturbation_target_mutable() { return perturbation_target_; }

  struct VaeStepStats {
    double total = 0.0, reconstruction = 0.0, divergence = 0.0;
  };

  VaeStepStats vae_step(const MinibatchC& mb, Rng& rng) {
    const int J = vae_.config().latent();
    Eigen::MatrixXd noise(J, mb.size());
    for (int c = 0; c < noise.cols(); ++c)
      for (int r = 0; r < J; ++r) noise(r, c) = rng.normal();
    Eigen::VectorXd enc_grad = Eigen::VectorXd::Zero(vae_.encoder().n_params());
    Eigen::VectorXd dec_grad = Eigen::VectorXd::Zero(vae_.decoder().n_params());
    const auto res = vae_.loss_and_grad(mb.s, mb.a, noise, enc_grad, dec_grad);
    adam_step(encoder_opt_, vae_.encoder().params(), enc_grad);
    adam_step(decoder_opt_, vae_.decoder().params(), dec_grad);
    return VaeStepStats{res.total, res.reconstruction, res.divergence};
  }

  /// Bootstrapped targets: per successor, the generator proposes candidates,
  /// the target perturbation nudges them, and the best pessimism-weighted
  /// twin value bootstraps.
  Eigen::VectorXd compute_targets(const MinibatchC& mb, Rng& rng) const {
    const int B = mb.size();
    const int n = cfg_.n_candidates;
    Eigen::MatrixXd rep;
    const Eigen::MatrixXd cand = vae_.sample_repeat(mb.s_next, n, rng, &rep);
    const Eigen::MatrixXd perturbed = clip_actions(
        cand + perturbation_target_.forward(vstack(rep, cand)));
    const Eigen::MatrixXd joint = vstack(rep, perturbed);
    const Eigen::MatrixXd q1 = critic1_target_.forward(joint);
    const Eigen::MatrixXd q2 = critic2_target_.forward(joint);
    const Eigen::ArrayXXd mixed = cfg_.lambda * q1.cwiseMin(q2).array() +
                                  (1.0 - cfg_.lambda) * q1.cwiseMax(q2).array();
    Eigen::VectorXd best(B);
    for (int i = 0; i < B; ++i)
      best(i) = mixed.block(0, static_cast<Eigen::Index>(i) * n, 1, n).maxCoeff();
    return mb.r.array() + cfg_.gamma * mb.not_terminal.array() * best.array();
  }

  struct CriticStepStats {
    double q1_loss = 0.0, q2_loss = 0.0;
  };

  CriticStepStats critic_step(const MinibatchC& mb, const Eigen::VectorXd& targets) {
    const Eigen::MatrixXd joint = vstack(mb.s, mb.a);
    CriticStepStats stats;
    stats.q1_loss = critic_regression(critic1_, critic1_opt_, joint, targets, mb.size());
    stats.q2_loss = critic_regression(critic2_, critic2_opt_, joint, targets, mb.size());
    return stats;
  }

  /// Ascends the first critic through the perturbation network on fresh
  /// generator candidates. Returns the pre-update objective.
  double perturbation_step(const Eigen::MatrixXd& states, const Eigen::MatrixXd& sampled) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(perturbation_.n_params());
    const double objective =
        perturbed_value_objective(critic1_, perturbation_, states, sampled, grad);
    adam_step(perturbation_opt_, perturbation_.params(), grad);
    return objective;
  }

  void refresh_targets() {
    polyak_update(critic1_target_.params(), critic1_.params(), cfg_.tau);
    polyak_update(critic2_target_.params(), critic2_.params(), cfg_.tau);
    polyak_update(perturbation_target_.params(), perturbation_.params(), cfg_.tau);
  }

  struct TrainStats {
    VaeStepStats vae;
    CriticStepStats critic;
    double perturbation_objective = 0.0;
    double target_mean = 0.0;
  };

  TrainStats train_iteration(const MinibatchC& mb, Rng& rng) {
    TrainStats stats;
    stats.vae = vae_step(mb, rng);
    const Eigen::VectorXd y = compute_targets(mb, rng);
    stats.target_mean = y.mean();
    stats.critic = critic_step(mb, y);
    stats.perturbation_objective = perturbation_step(mb.s, vae_.sample(mb.s, rng));
    refresh_targets();
    return stats;
  }

  /// Greedy over perturbed generator candidates under the first critic; ties
  /// go to the lowest candidate index.
  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng& rng) const {
    Eigen::MatrixXd rep;
    const Eigen::MatrixXd cand = vae_.sample_repeat(state, cfg_.n_candidates, rng, &rep);
    const Eigen::MatrixXd perturbed =
        clip_actions(cand + perturbation_.forward(vstack(rep, cand)));
    const Eigen::MatrixXd q1 = critic1_.forward(vstack(rep, perturbed));
    int best = 0;
    for (int j = 1; j < q1.cols(); ++j)
      if (q1(0, j) > q1(0, best)) best = j;
    return perturbed.col(best);
  }

  /// Mean over states of the chosen candidate's first-critic value.
  double value_estimate(const Eigen::MatrixXd& states, Rng& rng) const {
    const int n = cfg_.n_candidates;
    Eigen::MatrixXd rep;
    const Eigen::MatrixXd cand = vae_.sample_repeat(states, n, rng, &rep);
    const Eigen::MatrixXd perturbed =
        clip_actions(cand + perturbation_.forward(vstack(rep, cand)));
    const Eigen::MatrixXd q1 = critic1_.forward(vstack(rep, perturbed));
    double acc = 0.0;
    for (int i = 0; i < states.cols(); ++i)
      acc += q1.block(0, static_cast<Eigen::Index>(i) * n, 1, n).maxCoeff();
    return acc / static_cast<double>(states.cols());
  }

 private:
  static BcqConfig validated(BcqConfig cfg) {
    cfg.validate();
    return cfg;
  }
  static MlpSpec critic_spec(const BcqConfig& cfg) {
    return MlpSpec{{cfg.state_dim + cfg.action_dim, cfg.h1, cfg.h2, 1}, Head::linear, 1.0};
  }
  static MlpSpec perturbation_spec(const BcqConfig& cfg) {
    return MlpSpec{{cfg.state_dim + cfg.action_dim, cfg.h1, cfg.h2, cfg.action_dim},
                   Head::scaled_tanh, cfg.phi * cfg.max_action};
  }
  static VaeConfig vae_config(const BcqConfig& cfg) {
    VaeConfig v;
    v.state_dim = cfg.state_dim;
    v.action_dim = cfg.action_dim;
    v.latent_dim = cfg.latent_dim;
    v.hidden = cfg.vae_hidden;
    v.max_action = cfg.max_action;
    v.l2 = cfg.vae_l2;
    return v;
  }

  Eigen::MatrixXd clip_actions(Eigen::MatrixXd a) const {
    return a.cwiseMax(-cfg_.max_action).cwiseMin(cfg_.max_action);
  }

  double critic_regression(Mlp& critic, AdamState& opt, const Eigen::MatrixXd& joint,
                           const Eigen::VectorXd& targets, int batch) {
    MlpCache cache;
    const Eigen::MatrixXd q = critic.forward(joint, &cache);
    const Eigen::VectorXd err = q.row(0).transpose() - targets;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(critic.n_params());
    critic.backward(cache, (2.0 / batch) * err.transpose(), grad);
    adam_step(opt, critic.params(), grad);
    return err.squaredNorm() / batch;
  }

  BcqConfig cfg_;
  Rng init_rng_;
  Mlp critic1_;
  Mlp critic2_;
  Mlp perturbation_;
  Vae vae_;
  Mlp critic1_target_;
  Mlp critic2_target_;
  Mlp perturbation_target_;
  AdamState critic1_opt_;
  AdamState critic2_opt_;
  AdamState perturbation_opt_;
  AdamState encoder_opt_;
  AdamState decoder_opt_;
};

}  // namespace bcqlab
