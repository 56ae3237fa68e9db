#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bcqlab/rng.hpp"

namespace bcqlab {

// Small dense-network toolkit. Every network keeps its parameters in one flat
// vector so optimizer state, soft target updates, and checkpoints all operate
// on plain Eigen vectors. Batches are column-major: one column per sample.

enum class Head { linear, scaled_tanh };

/// Vertical concatenation of two column-major batches.
inline Eigen::MatrixXd vstack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("column count mismatch");
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output
  Head head = Head::linear;
  double head_scale = 1.0;

  void validate() const {
    if (widths.size() < 2) throw std::invalid_argument("network needs at least two widths");
    for (int w : widths)
      if (w <= 0) throw std::invalid_argument("layer widths must be positive");
    if (!(head_scale >= 0.0)) throw std::invalid_argument("head scale must be non-negative");
  }
  int n_layers() const { return static_cast<int>(widths.size()) - 1; }
  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
};

struct MlpCache {
  std::vector<Eigen::MatrixXd> a;  // a[0] is the input, a[l+1] the layer output
  std::vector<Eigen::MatrixXd> z;  // pre-activations per layer
};

class Mlp {
 public:
  Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    int total = 0;
    for (int l = 0; l < spec_.n_layers(); ++l) {
      offsets_.push_back(total);
      total += spec_.widths[l + 1] * spec_.widths[l] + spec_.widths[l + 1];
    }
    params_.resize(total);
    int at = 0;
    for (int l = 0; l < spec_.n_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.widths[l]));
      const int count = spec_.widths[l + 1] * spec_.widths[l] + spec_.widths[l + 1];
      for (int i = 0; i < count; ++i) params_(at++) = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }

  const MlpSpec& spec() const { return spec_; }
  int n_params() const { return static_cast<int>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(int l) const {
    return {params_.data() + offsets_[l], spec_.widths[l + 1], spec_.widths[l]};
  }
  Eigen::Map<const Eigen::VectorXd> bias(int l) const {
    return {params_.data() + offsets_[l] + spec_.widths[l + 1] * spec_.widths[l],
            spec_.widths[l + 1]};
  }

  /// x is (in_dim x N); returns (out_dim x N). Hidden layers are rectified.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpCache* cache = nullptr) const {
    if (x.rows() != spec_.in_dim()) throw std::invalid_argument("input dimension mismatch");
    if (cache) {
      cache->a.assign(1, x);
      cache->z.clear();
    }
    Eigen::MatrixXd h = x;
    for (int l = 0; l < spec_.n_layers(); ++l) {
      Eigen::MatrixXd z = (weight(l) * h).colwise() + bias(l);
      if (cache) cache->z.push_back(z);
      if (l + 1 < spec_.n_layers()) {
        h = z.cwiseMax(0.0);
      } else if (spec_.head == Head::linear) {
        h = std::move(z);
      } else {
        h = spec_.head_scale * z.array().tanh();
      }
      if (cache) cache->a.push_back(h);
    }
    return h;
  }

  /// Backpropagates dout (out_dim x N) through a cached forward pass,
  /// accumulating parameter gradients into grad (same layout as params) and
  /// returning the gradient with respect to the input.
  Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& dout,
                           Eigen::VectorXd& grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("gradient size mismatch");
    const int L = spec_.n_layers();
    Eigen::MatrixXd dz;
    if (spec_.head == Head::linear) {
      dz = dout;
    } else if (spec_.head_scale == 0.0) {
      // The head is identically zero, and so is its derivative.
      dz = Eigen::MatrixXd::Zero(dout.rows(), dout.cols());
    } else {
      const Eigen::MatrixXd& y = cache.a.back();
      dz = dout.array() * (spec_.head_scale - y.array().square() / spec_.head_scale);
    }
    for (int l = L - 1; l >= 0; --l) {
      auto dw = Eigen::Map<Eigen::MatrixXd>(grad.data() + offsets_[l], spec_.widths[l + 1],
                                            spec_.widths[l]);
      auto db = Eigen::Map<Eigen::VectorXd>(
          grad.data() + offsets_[l] + spec_.widths[l + 1] * spec_.widths[l], spec_.widths[l + 1]);
      dw.noalias() += dz * cache.a[l].transpose();
      db.noalias() += dz.rowwise().sum();
      if (l == 0) return weight(0).transpose() * dz;
      Eigen::MatrixXd da = weight(l).transpose() * dz;
      dz = (cache.z[l - 1].array() > 0.0).select(da, 0.0);
    }
    return {};
  }

 private:
  MlpSpec spec_;
  std::vector<int> offsets_;
  Eigen::VectorXd params_;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Eigen::VectorXd m, v;

  AdamState(int n, double learning_rate) : lr(learning_rate) {
    if (n <= 0) throw std::invalid_argument("optimizer needs a positive parameter count");
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
  }
};

inline void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != state.m.size() || grad.size() != state.m.size())
    throw std::invalid_argument("optimizer size mismatch");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -=
      state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

inline void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau) {
  if (target.size() != online.size()) throw std::invalid_argument("target size mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  target = tau * online + (1.0 - tau) * target;
}

/// Action-value network whose action stream joins at the second layer:
/// state -> h1 rectified, then [h1; action] -> h2 rectified -> scalar.
class TwoStreamCritic {
  template <typename Vec>
  auto views(Vec& p) const {
    const double* d = p.data();
    int at = 0;
    Eigen::Map<const Eigen::MatrixXd> w1(d + at, h1_, s_dim_);
    at += h1_ * s_dim_;
    Eigen::Map<const Eigen::VectorXd> b1(d + at, h1_);
    at += h1_;
    Eigen::Map<const Eigen::MatrixXd> w2(d + at, h2_, h1_ + a_dim_);
    at += h2_ * (h1_ + a_dim_);
    Eigen::Map<const Eigen::VectorXd> b2(d + at, h2_);
    at += h2_;
    Eigen::Map<const Eigen::MatrixXd> w3(d + at, 1, h2_);
    at += h2_;
    Eigen::Map<const Eigen::VectorXd> b3(d + at, 1);
    return std::make_tuple(w1, b1, w2, b2, w3, b3);
  }

  auto mutable_views(Eigen::VectorXd& g) const {
    double* d = g.data();
    int at = 0;
    Eigen::Map<Eigen::MatrixXd> w1(d + at, h1_, s_dim_);
    at += h1_ * s_dim_;
    Eigen::Map<Eigen::VectorXd> b1(d + at, h1_);
    at += h1_;
    Eigen::Map<Eigen::MatrixXd> w2(d + at, h2_, h1_ + a_dim_);
    at += h2_ * (h1_ + a_dim_);
    Eigen::Map<Eigen::VectorXd> b2(d + at, h2_);
    at += h2_;
    Eigen::Map<Eigen::MatrixXd> w3(d + at, 1, h2_);
    at += h2_;
    Eigen::Map<Eigen::VectorXd> b3(d + at, 1);
    return std::make_tuple(w1, b1, w2, b2, w3, b3);
  }

 public:
  TwoStreamCritic(int state_dim, int action_dim, int h1, int h2, Rng& rng)
      : s_dim_(state_dim), a_dim_(action_dim), h1_(h1), h2_(h2) {
    if (state_dim <= 0 || action_dim <= 0 || h1 <= 0 || h2 <= 0)
      throw std::invalid_argument("critic dimensions must be positive");
    const int total = h1_ * s_dim_ + h1_ + h2_ * (h1_ + a_dim_) + h2_ + h2_ + 1;
    params_.resize(total);
    int at = 0;
    auto fill = [&](int count, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int i = 0; i < count; ++i) params_(at++) = (2.0 * rng.uniform() - 1.0) * bound;
    };
    fill(h1_ * s_dim_ + h1_, s_dim_);
    fill(h2_ * (h1_ + a_dim_) + h2_, h1_ + a_dim_);
    fill(h2_ + 1, h2_);
  }

  int n_params() const { return static_cast<int>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  struct Cache {
    Eigen::MatrixXd s, a, z1, a1, cat, z2, a2;
  };

  /// Returns (1 x N) action values for (state_dim x N) states and
  /// (action_dim x N) actions.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                          Cache* cache = nullptr) const {
    if (s.rows() != s_dim_ || a.rows() != a_dim_ || s.cols() != a.cols())
      throw std::invalid_argument("critic input shape mismatch");
    const auto [w1, b1, w2, b2, w3, b3] = views(params_);
    Eigen::MatrixXd z1 = (w1 * s).colwise() + b1;
    Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
    Eigen::MatrixXd cat(h1_ + a_dim_, s.cols());
    cat.topRows(h1_) = a1;
    cat.bottomRows(a_dim_) = a;
    Eigen::MatrixXd z2 = (w2 * cat).colwise() + b2;
    Eigen::MatrixXd a2 = z2.cwiseMax(0.0);
    Eigen::MatrixXd q = (w3 * a2).colwise() + b3;
    if (cache) *cache = Cache{s, a, std::move(z1), std::move(a1), std::move(cat), std::move(z2),
                              std::move(a2)};
    return q;
  }

  /// Accumulates parameter gradients for dq (1 x N); optionally reports the
  /// gradient with respect to the action input.
  void backward(const Cache& cache, const Eigen::MatrixXd& dq, Eigen::VectorXd& grad,
                Eigen::MatrixXd* d_action = nullptr) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("gradient size mismatch");
    const auto [w1, b1, w2, b2, w3, b3] = views(params_);
    auto [gw1, gb1, gw2, gb2, gw3, gb3] = mutable_views(grad);
    gw3.noalias() += dq * cache.a2.transpose();
    gb3.noalias() += dq.rowwise().sum();
    Eigen::MatrixXd da2 = w3.transpose() * dq;
    Eigen::MatrixXd dz2 = (cache.z2.array() > 0.0).select(da2, 0.0);
    gw2.noalias() += dz2 * cache.cat.transpose();
    gb2.noalias() += dz2.rowwise().sum();
    Eigen::MatrixXd dcat = w2.transpose() * dz2;
    if (d_action) *d_action = dcat.bottomRows(a_dim_);
    Eigen::MatrixXd dz1 = (cache.z1.array() > 0.0).select(dcat.topRows(h1_), 0.0);
    gw1.noalias() += dz1 * cache.s.transpose();
    gb1.noalias() += dz1.rowwise().sum();
  }

  int state_dim() const { return s_dim_; }
  int action_dim() const { return a_dim_; }

 private:
  int s_dim_, a_dim_, h1_, h2_;
  Eigen::VectorXd params_;
};

}  // namespace bcqlab
