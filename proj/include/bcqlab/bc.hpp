#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "bcqlab/nn.hpp"
#include "bcqlab/replay.hpp"
#include "bcqlab/rng.hpp"
#include "bcqlab/vae.hpp"

namespace bcqlab {

struct BcConfig {
  int state_dim = 0;
  int action_dim = 0;
  double max_action = 1.0;
  int h1 = 400, h2 = 300;
  double lr = 1e-3;

  void validate() const {
    if (state_dim <= 0 || action_dim <= 0)
      throw std::invalid_argument("agent dimensions must be positive");
    if (!(max_action > 0.0)) throw std::invalid_argument("action bound must be positive");
  }
};

/// Direct regression onto the batch's actions with a bounded deterministic
/// policy network.
class BcAgent {
 public:
  BcAgent(BcConfig cfg, unsigned long long seed)
      : cfg_(validated(std::move(cfg))),
        init_rng_(derive_seed(seed, 0x626300)),
        actor_(MlpSpec{{cfg_.state_dim, cfg_.h1, cfg_.h2, cfg_.action_dim}, Head::scaled_tanh,
                       cfg_.max_action},
               init_rng_),
        opt_(actor_.n_params(), cfg_.lr) {}

  const BcConfig& config() const { return cfg_; }
  Mlp& actor() { return actor_; }
  const Mlp& actor() const { return actor_; }

  Eigen::VectorXd act(const Eigen::VectorXd& state) const { return actor_.forward(state); }
  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng&) const { return act(state); }

  struct TrainStats {
    double loss = 0.0;
  };

  TrainStats train_iteration(const MinibatchC& mb) {
    MlpCache cache;
    const Eigen::MatrixXd out = actor_.forward(mb.s, &cache);
    const Eigen::MatrixXd err = out - mb.a;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(actor_.n_params());
    actor_.backward(cache, (2.0 / mb.size()) * err, grad);
    adam_step(opt_, actor_.params(), grad);
    return TrainStats{err.squaredNorm() / mb.size()};
  }

  double value_estimate(const Eigen::MatrixXd&) const { return 0.0; }  // no critic

 private:
  static BcConfig validated(BcConfig cfg) {
    cfg.validate();
    return cfg;
  }

  BcConfig cfg_;
  Rng init_rng_;
  Mlp actor_;
  AdamState opt_;
};

/// Clones the batch through the conditional generator alone: training fits
/// the generator, acting decodes one clipped-latent sample per query.
class VaeBcAgent {
 public:
  VaeBcAgent(VaeConfig cfg, unsigned long long seed, double lr = 1e-3)
      : lr_(lr),
        init_rng_(derive_seed(seed, 0x766263)),
        vae_(std::move(cfg), init_rng_),
        enc_opt_(vae_.encoder().n_params(), lr),
        dec_opt_(vae_.decoder().n_params(), lr) {}

  const Vae& generator() const { return vae_; }
  Vae& generator() { return vae_; }
  double learning_rate() const { return lr_; }

  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng& rng) const {
    return vae_.sample(state, rng);
  }

  struct TrainStats {
    double loss = 0.0;
    double reconstruction = 0.0;
    double divergence = 0.0;
  };

  TrainStats train_iteration(const MinibatchC& mb, Rng& rng) {
    const int J = vae_.config().latent();
    Eigen::MatrixXd noise(J, mb.size());
    for (int c = 0; c < noise.cols(); ++c)
      for (int r = 0; r < J; ++r) noise(r, c) = rng.normal();
    Eigen::VectorXd enc_grad = Eigen::VectorXd::Zero(vae_.encoder().n_params());
    Eigen::VectorXd dec_grad = Eigen::VectorXd::Zero(vae_.decoder().n_params());
    const auto res = vae_.loss_and_grad(mb.s, mb.a, noise, enc_grad, dec_grad);
    adam_step(enc_opt_, vae_.encoder().params(), enc_grad);
    adam_step(dec_opt_, vae_.decoder().params(), dec_grad);
    return TrainStats{res.total, res.reconstruction, res.divergence};
  }

  double value_estimate(const Eigen::MatrixXd&) const { return 0.0; }  // no critic

 private:
  double lr_;
  Rng init_rng_;
  Vae vae_;
  AdamState enc_opt_;
  AdamState dec_opt_;
};

}  // namespace bcqlab
