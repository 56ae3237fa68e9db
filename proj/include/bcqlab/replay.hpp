#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "bcqlab/batch.hpp"
#include "bcqlab/rng.hpp"

namespace bcqlab {

/// Columnar minibatch of continuous transitions, one column per sample.
/// not_terminal is 1 when the successor may be bootstrapped; time-limit cuts
/// keep it at 1, only true terminals zero it.
struct MinibatchC {
  Eigen::MatrixXd s, a, s_next;
  Eigen::VectorXd r;
  Eigen::VectorXd not_terminal;

  int size() const { return static_cast<int>(r.size()); }
};

/// Column store over continuous transitions with amortized growth, built for
/// uniform minibatch sampling.
class ContinuousDataset {
 public:
  ContinuousDataset(int state_dim, int action_dim) : s_dim_(state_dim), a_dim_(action_dim) {
    if (state_dim <= 0 || action_dim <= 0)
      throw std::invalid_argument("dataset dimensions must be positive");
    reserve(64);
  }

  static ContinuousDataset from_batch(const Batch& batch) {
    if (batch.discrete) throw std::invalid_argument("dataset requires a continuous batch");
    ContinuousDataset ds(batch.meta.state_dim, batch.meta.action_dim);
    ds.reserve(static_cast<int>(batch.c.size()) + 1);
    for (const auto& t : batch.c) ds.push(t.s, t.a, t.r, t.s_next, t.terminal);
    return ds;
  }

  int size() const { return size_; }
  int state_dim() const { return s_dim_; }
  int action_dim() const { return a_dim_; }

  void push(const Eigen::VectorXd& s, const Eigen::VectorXd& a, double r,
            const Eigen::VectorXd& s_next, bool terminal) {
    if (s.size() != s_dim_ || s_next.size() != s_dim_ || a.size() != a_dim_)
      throw std::invalid_argument("transition dimension mismatch");
    if (size_ == capacity()) reserve(2 * capacity());
    s_.col(size_) = s;
    a_.col(size_) = a;
    s2_.col(size_) = s_next;
    r_(size_) = r;
    nt_(size_) = terminal ? 0.0 : 1.0;
    ++size_;
  }

  MinibatchC sample(int n, Rng& rng) const {
    if (size_ == 0) throw std::runtime_error("cannot sample from an empty dataset");
    if (n <= 0) throw std::invalid_argument("minibatch size must be positive");
    MinibatchC mb;
    mb.s.resize(s_dim_, n);
    mb.a.resize(a_dim_, n);
    mb.s_next.resize(s_dim_, n);
    mb.r.resize(n);
    mb.not_terminal.resize(n);
    for (int i = 0; i < n; ++i) {
      const int k = rng.uniform_int(size_);
      mb.s.col(i) = s_.col(k);
      mb.a.col(i) = a_.col(k);
      mb.s_next.col(i) = s2_.col(k);
      mb.r(i) = r_(k);
      mb.not_terminal(i) = nt_(k);
    }
    return mb;
  }

  /// The first n states, for fixed evaluation probes.
  Eigen::MatrixXd leading_states(int n) const {
    if (n <= 0 || n > size_) throw std::invalid_argument("bad probe size");
    return s_.leftCols(n);
  }

 private:
  int capacity() const { return static_cast<int>(s_.cols()); }

  void reserve(int cap) {
    if (cap <= capacity()) return;
    s_.conservativeResize(s_dim_, cap);
    a_.conservativeResize(a_dim_, cap);
    s2_.conservativeResize(s_dim_, cap);
    r_.conservativeResize(cap);
    nt_.conservativeResize(cap);
  }

  int s_dim_, a_dim_;
  int size_ = 0;
  Eigen::MatrixXd s_{}, a_{}, s2_{};
  Eigen::VectorXd r_{}, nt_{};
};

}  // namespace bcqlab
