#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bcqlab/nn.hpp"
#include "bcqlab/rng.hpp"

namespace bcqlab {

/// Divergence of N(mu, diag(sigma^2)) from the standard normal, one sample.
inline double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_std) {
  double acc = 0.0;
  for (int j = 0; j < mu.size(); ++j) {
    const double var = std::exp(2.0 * log_std(j));
    acc += -0.5 * (1.0 + 2.0 * log_std(j) - mu(j) * mu(j) - var);
  }
  return acc;
}

struct VaeConfig {
  int state_dim = 0;
  int action_dim = 0;
  int latent_dim = 0;  // 0 means twice the action dimension
  std::vector<int> hidden = {750, 750};
  double max_action = 1.0;
  double log_std_min = -4.0;
  double log_std_max = 15.0;
  double latent_clip = 0.5;
  double l2 = 0.0;  // weight decay folded into the loss

  void validate() const {
    if (state_dim <= 0 || action_dim <= 0)
      throw std::invalid_argument("generator dimensions must be positive");
    if (hidden.empty()) throw std::invalid_argument("generator needs hidden layers");
    if (!(max_action > 0.0)) throw std::invalid_argument("action bound must be positive");
    if (!(log_std_min < log_std_max)) throw std::invalid_argument("bad log-std range");
    if (!(latent_clip > 0.0)) throw std::invalid_argument("latent clip must be positive");
    if (l2 < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
  }
  int latent() const { return latent_dim > 0 ? latent_dim : 2 * action_dim; }
};

/// Conditional generator fit to the batch's state-action pairs: an encoder
/// mapping (s, a) to a diagonal Gaussian over latents and a bounded decoder
/// mapping (s, z) back to an action. The training loss is the per-sample
/// squared reconstruction error plus the Gaussian divergence weighted by
/// 1/(2 latent_dim), averaged over the minibatch.
class Vae {
 public:
  Vae(VaeConfig cfg, Rng& rng)
      : cfg_(std::move(cfg)),
        encoder_(make_encoder_spec(cfg_), rng),
        decoder_(make_decoder_spec(cfg_), rng) {}

  const VaeConfig& config() const { return cfg_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }

  struct Moments {
    Eigen::MatrixXd mu;       // latent x N
    Eigen::MatrixXd log_std;  // clamped
  };

  Moments encode(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                 MlpCache* cache = nullptr) const {
    const Eigen::MatrixXd out = encoder_.forward(stack(s, a), cache);
    const int J = cfg_.latent();
    Moments m;
    m.mu = out.topRows(J);
    m.log_std = out.bottomRows(J).cwiseMax(cfg_.log_std_min).cwiseMin(cfg_.log_std_max);
    return m;
  }

  Eigen::MatrixXd decode(const Eigen::MatrixXd& s, const Eigen::MatrixXd& z,
                         MlpCache* cache = nullptr) const {
    return decoder_.forward(stack(s, z), cache);
  }

  struct LossResult {
    double total = 0.0;
    double reconstruction = 0.0;
    double divergence = 0.0;
  };

  /// Loss under reparameterized latents z = mu + sigma * noise, with the
  /// noise supplied by the caller (latent x N standard normals).
  LossResult loss(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                  const Eigen::MatrixXd& noise) const {
    return run(s, a, noise, nullptr, nullptr);
  }

  /// Loss plus exact gradients, accumulated into the two flat vectors.
  LossResult loss_and_grad(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& noise, Eigen::VectorXd& encoder_grad,
                           Eigen::VectorXd& decoder_grad) const {
    return run(s, a, noise, &encoder_grad, &decoder_grad);
  }

  /// One decoded action per state, latent drawn standard normal and clipped.
  Eigen::MatrixXd sample(const Eigen::MatrixXd& s, Rng& rng) const {
    return decode(s, draw_latents(static_cast<int>(s.cols()), rng));
  }

  /// n decoded candidates per state. Column i*n + j holds candidate j for
  /// state column i; repeated_states mirrors that layout when requested.
  Eigen::MatrixXd sample_repeat(const Eigen::MatrixXd& s, int n, Rng& rng,
                                Eigen::MatrixXd* repeated_states = nullptr) const {
    if (n <= 0) throw std::invalid_argument("candidate count must be positive");
    const int N = static_cast<int>(s.cols());
    Eigen::MatrixXd rep(s.rows(), static_cast<Eigen::Index>(N) * n);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < n; ++j) rep.col(static_cast<Eigen::Index>(i) * n + j) = s.col(i);
    Eigen::MatrixXd actions = decode(rep, draw_latents(N * n, rng));
    if (repeated_states) *repeated_states = std::move(rep);
    return actions;
  }

 private:
  static MlpSpec make_encoder_spec(const VaeConfig& cfg) {
    cfg.validate();
    MlpSpec spec;
    spec.widths.push_back(cfg.state_dim + cfg.action_dim);
    for (int h : cfg.hidden) spec.widths.push_back(h);
    spec.widths.push_back(2 * cfg.latent());
    return spec;
  }
  static MlpSpec make_decoder_spec(const VaeConfig& cfg) {
    MlpSpec spec;
    spec.widths.push_back(cfg.state_dim + cfg.latent());
    for (int h : cfg.hidden) spec.widths.push_back(h);
    spec.widths.push_back(cfg.action_dim);
    spec.head = Head::scaled_tanh;
    spec.head_scale = cfg.max_action;
    return spec;
  }

  static Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    return vstack(top, bottom);
  }

  Eigen::MatrixXd draw_latents(int n, Rng& rng) const {
    const int J = cfg_.latent();
    Eigen::MatrixXd z(J, n);
    for (int c = 0; c < n; ++c)
      for (int r = 0; r < J; ++r) {
        double v = rng.normal();
        if (v > cfg_.latent_clip) v = cfg_.latent_clip;
        if (v < -cfg_.latent_clip) v = -cfg_.latent_clip;
        z(r, c) = v;
      }
    return z;
  }

  LossResult run(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                 const Eigen::MatrixXd& noise, Eigen::VectorXd* encoder_grad,
                 Eigen::VectorXd* decoder_grad) const {
    const int J = cfg_.latent();
    const int N = static_cast<int>(s.cols());
    if (noise.rows() != J || noise.cols() != N)
      throw std::invalid_argument("noise must be latent x batch");

    MlpCache enc_cache;
    const Eigen::MatrixXd enc_out = encoder_.forward(stack(s, a), &enc_cache);
    const Eigen::MatrixXd mu = enc_out.topRows(J);
    const Eigen::MatrixXd raw = enc_out.bottomRows(J);
    const Eigen::MatrixXd log_std = raw.cwiseMax(cfg_.log_std_min).cwiseMin(cfg_.log_std_max);
    const Eigen::MatrixXd sigma = log_std.array().exp();
    const Eigen::MatrixXd z = mu + sigma.cwiseProduct(noise);

    MlpCache dec_cache;
    const Eigen::MatrixXd recon = decoder_.forward(stack(s, z), &dec_cache);
    const Eigen::MatrixXd err = recon - a;

    const double kl_weight = 1.0 / (2.0 * J);
    LossResult out;
    out.reconstruction = err.squaredNorm() / N;
    out.divergence = -0.5 *
                     (1.0 + 2.0 * log_std.array() - mu.array().square() - sigma.array().square())
                         .sum() /
                     N;
    out.total = out.reconstruction + kl_weight * out.divergence;
    if (cfg_.l2 > 0.0)
      out.total += cfg_.l2 * (encoder_.params().squaredNorm() + decoder_.params().squaredNorm());
    if (!encoder_grad || !decoder_grad) return out;

    const Eigen::MatrixXd d_recon = (2.0 / N) * err;
    const Eigen::MatrixXd d_dec_in = decoder_.backward(dec_cache, d_recon, *decoder_grad);
    const Eigen::MatrixXd dz = d_dec_in.bottomRows(J);

    const Eigen::MatrixXd d_mu = dz + (kl_weight / N) * mu;
    Eigen::MatrixXd d_log_std =
        dz.cwiseProduct(noise).cwiseProduct(sigma) +
        (kl_weight / N) * (sigma.array().square() - 1.0).matrix();
    // The clamp passes no gradient outside its active range.
    d_log_std =
        ((raw.array() > cfg_.log_std_min) && (raw.array() < cfg_.log_std_max))
            .select(d_log_std, 0.0);

    Eigen::MatrixXd enc_dout(2 * J, N);
    enc_dout.topRows(J) = d_mu;
    enc_dout.bottomRows(J) = d_log_std;
    encoder_.backward(enc_cache, enc_dout, *encoder_grad);

    if (cfg_.l2 > 0.0) {
      *encoder_grad += 2.0 * cfg_.l2 * encoder_.params();
      *decoder_grad += 2.0 * cfg_.l2 * decoder_.params();
    }
    return out;
  }

  VaeConfig cfg_;
  Mlp encoder_;
  Mlp decoder_;
};

}  // namespace bcqlab
