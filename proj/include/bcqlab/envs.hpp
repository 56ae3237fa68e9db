#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcqlab/mdp.hpp"
#include "bcqlab/rng.hpp"

namespace bcqlab {

/// Two-state, two-action deterministic chain. Action 1 at state 0 pays 1 and
/// moves to state 1; action 0 at state 1 moves back for free; everything else
/// self-loops with zero reward. The start state is 0. Under the optimal
/// alternating policy the discounted return from state 0 is 1 / (1 - g^2).
inline FiniteMdp make_two_state(double discount = 0.99) {
  FiniteMdp m = FiniteMdp::zeros(2, 2, discount);
  m.transition[0](0, 0) = 1.0;  // a0 at s0: stay
  m.transition[0](1, 0) = 1.0;  // a0 at s1: back to s0
  m.transition[1](0, 1) = 1.0;  // a1 at s0: to s1, pays 1
  m.transition[1](1, 1) = 1.0;  // a1 at s1: stay
  m.reward[1](0, 1) = 1.0;
  m.initial_dist(0) = 1.0;
  m.validate();
  return m;
}

struct RandomMdpSpec {
  int n_states = 8;
  int n_actions = 3;
  bool deterministic = true;
  double reward_lo = 0.0;
  double reward_hi = 1.0;
  int branching = 3;  // successors per state-action pair when stochastic
  double discount = 0.99;
  std::uint64_t seed = 0;
};

/// Random MDP with rewards drawn uniformly from the configured range for
/// every (s, a, s2) triple. Deterministic instances give each pair a single
/// uniformly chosen successor; stochastic ones spread mass over `branching`
/// distinct successors with random weights. The start state is 0 and no
/// state is terminal.
inline FiniteMdp make_random_mdp(const RandomMdpSpec& spec) {
  if (spec.n_states <= 0 || spec.n_actions <= 0)
    throw std::invalid_argument("random mdp dimensions must be positive");
  if (spec.branching < 1 || spec.branching > spec.n_states)
    throw std::invalid_argument("branching must lie in [1, n_states]");
  if (!(spec.reward_lo <= spec.reward_hi))
    throw std::invalid_argument("empty reward range");
  Rng rng(derive_seed(spec.seed, 0x6d6470ULL));
  FiniteMdp m = FiniteMdp::zeros(spec.n_states, spec.n_actions, spec.discount);
  std::vector<int> successors;
  for (int s = 0; s < spec.n_states; ++s) {
    for (int a = 0; a < spec.n_actions; ++a) {
      const int k = spec.deterministic ? 1 : spec.branching;
      successors.clear();
      while (static_cast<int>(successors.size()) < k) {
        const int cand = rng.uniform_int(spec.n_states);
        bool dup = false;
        for (int v : successors) dup = dup || (v == cand);
        if (!dup) successors.push_back(cand);
      }
      if (k == 1) {
        m.transition[a](s, successors[0]) = 1.0;
      } else {
        std::vector<double> w(k);
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
          w[i] = rng.uniform(0.1, 1.0);
          total += w[i];
        }
        for (int i = 0; i < k; ++i) m.transition[a](s, successors[i]) = w[i] / total;
      }
      for (int s2 = 0; s2 < spec.n_states; ++s2)
        m.reward[a](s, s2) = rng.uniform(spec.reward_lo, spec.reward_hi);
    }
  }
  m.initial_dist(0) = 1.0;
  m.validate();
  return m;
}

/// Rectangular gridworld. Cell (x, y) has index y * width + x; the agent
/// starts at cell 0 and the goal (terminal, default the opposite corner) pays
/// 1 on arrival. Actions 0..3 move up, down, left, right; walking into a wall
/// stays put. With slip probability `noise` the move deviates to one of the
/// two perpendicular directions, half the mass each.
inline FiniteMdp make_gridworld(int width, int height, double noise = 0.0,
                                double discount = 0.99, int goal_state = -1) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
  if (noise < 0.0 || noise > 1.0) throw std::invalid_argument("noise must lie in [0, 1]");
  const int n = width * height;
  if (goal_state < 0) goal_state = n - 1;
  if (goal_state >= n) throw std::invalid_argument("goal outside grid");
  if (goal_state == 0) throw std::invalid_argument("goal must differ from the start cell");
  FiniteMdp m = FiniteMdp::zeros(n, 4, discount);
  const int dx[4] = {0, 0, -1, 1};
  const int dy[4] = {-1, 1, 0, 0};
  auto move = [&](int s, int dir) {
    const int x = s % width, y = s / width;
    const int nx = x + dx[dir], ny = y + dy[dir];
    if (nx < 0 || nx >= width || ny < 0 || ny >= height) return s;
    return ny * width + nx;
  };
  for (int s = 0; s < n; ++s) {
    if (s == goal_state) {
      for (int a = 0; a < 4; ++a) m.transition[a](s, s) = 1.0;
      continue;
    }
    for (int a = 0; a < 4; ++a) {
      const int perp0 = (a < 2) ? 2 : 0;  // vertical moves slip horizontally
      m.transition[a](s, move(s, a)) += 1.0 - noise;
      m.transition[a](s, move(s, perp0)) += noise / 2.0;
      m.transition[a](s, move(s, perp0 + 1)) += noise / 2.0;
      if (m.transition[a](s, goal_state) > 0.0) m.reward[a](s, goal_state) = 1.0;
    }
  }
  m.terminal[goal_state] = 1;
  m.initial_dist(0) = 1.0;
  m.validate();
  return m;
}

/// Torque-controlled pendulum swing-up, the standard frictionless pole on a
/// pivot. Observation (cos t, sin t, tdot); reward is the negative of
/// wrapped_angle^2 + 0.1 tdot^2 + 0.001 u^2; episodes truncate at 200 steps
/// and never terminate. Dynamics:
///   tdot <- clip(tdot + (3 g / (2 l) sin t + 3 / (m l^2) u) dt, -8, 8)
///   t    <- t + tdot dt
/// with g = 10, m = 1, l = 1, dt = 0.05 and torque clipped to [-2, 2].
class PendulumEnv {
 public:
  static constexpr int kObsDim = 3;
  static constexpr int kActionDim = 1;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kDt = 0.05;
  static constexpr int kHorizon = 200;

  struct StepResult {
    Eigen::Vector3d obs;
    double reward = 0.0;
    bool terminated = false;
    bool truncated = false;
  };

  int obs_dim() const { return kObsDim; }
  int action_dim() const { return kActionDim; }
  double max_action() const { return kMaxTorque; }
  int horizon() const { return kHorizon; }

  Eigen::Vector3d reset(Rng& rng) {
    theta_ = rng.uniform(-M_PI, M_PI);
    theta_dot_ = rng.uniform(-1.0, 1.0);
    t_ = 0;
    return observation();
  }

  /// Place the pendulum in an exact state (used to replay logged states).
  void set_state(double theta, double theta_dot, int elapsed_steps = 0) {
    theta_ = theta;
    theta_dot_ = theta_dot;
    t_ = elapsed_steps;
  }

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  int elapsed_steps() const { return t_; }

  Eigen::Vector3d observation() const {
    return Eigen::Vector3d(std::cos(theta_), std::sin(theta_), theta_dot_);
  }

  StepResult step(const Eigen::VectorXd& action) {
    if (action.size() != 1) throw std::invalid_argument("pendulum expects a 1-d action");
    const double u = std::clamp(action(0), -kMaxTorque, kMaxTorque);
    const double wrapped = wrap_angle(theta_);
    const double cost = wrapped * wrapped + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
    theta_dot_ += (3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                   3.0 / (kMass * kLength * kLength) * u) *
                  kDt;
    theta_dot_ = std::clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
    theta_ += theta_dot_ * kDt;
    ++t_;
    ++total_steps_;
    StepResult r;
    r.obs = observation();
    r.reward = -cost;
    r.terminated = false;
    r.truncated = t_ >= kHorizon;
    return r;
  }

  /// Lifetime environment-interaction counter, across resets. Offline
  /// training must leave this untouched.
  long total_steps() const { return total_steps_; }

  static double wrap_angle(double t) {
    const double two_pi = 2.0 * M_PI;
    double w = std::fmod(t + M_PI, two_pi);
    if (w < 0) w += two_pi;
    return w - M_PI;
  }

 private:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int t_ = 0;
  long total_steps_ = 0;
};

// ---------------------------------------------------------------------------
// Environment identifiers. The harness names environments with short strings:
//   "two-state" | "gridworld:WxH" | "random-mdp:<seed>" | "pendulum"
// ---------------------------------------------------------------------------

struct EnvId {
  std::string kind;  // "two-state", "gridworld", "random-mdp", "pendulum"
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
};

inline EnvId parse_env_id(const std::string& id) {
  EnvId out;
  if (id == "two-state" || id == "pendulum") {
    out.kind = id;
    return out;
  }
  const auto colon = id.find(':');
  const std::string head = id.substr(0, colon);
  if (head == "gridworld") {
    if (colon == std::string::npos) throw std::invalid_argument("gridworld id needs WxH: " + id);
    const std::string dims = id.substr(colon + 1);
    const auto x = dims.find('x');
    if (x == std::string::npos) throw std::invalid_argument("gridworld id needs WxH: " + id);
    try {
      out.width = std::stoi(dims.substr(0, x));
      out.height = std::stoi(dims.substr(x + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad gridworld dimensions: " + id);
    }
    if (out.width <= 0 || out.height <= 0)
      throw std::invalid_argument("bad gridworld dimensions: " + id);
    out.kind = "gridworld";
    return out;
  }
  if (head == "random-mdp") {
    if (colon == std::string::npos) throw std::invalid_argument("random-mdp id needs a seed: " + id);
    try {
      out.seed = std::stoull(id.substr(colon + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad random-mdp seed: " + id);
    }
    out.kind = "random-mdp";
    return out;
  }
  throw std::invalid_argument("unknown environment id: " + id);
}

inline bool is_tabular_env(const std::string& id) {
  return parse_env_id(id).kind != "pendulum";
}

/// Builds the tabular environment named by an id string. Gridworld noise and
/// the discount come from the caller since ids carry only the topology.
inline FiniteMdp make_tabular_env(const std::string& id, double discount,
                                  double gridworld_noise = 0.0) {
  const EnvId parsed = parse_env_id(id);
  if (parsed.kind == "two-state") return make_two_state(discount);
  if (parsed.kind == "gridworld")
    return make_gridworld(parsed.width, parsed.height, gridworld_noise, discount);
  if (parsed.kind == "random-mdp") {
    RandomMdpSpec spec;
    spec.seed = parsed.seed;
    spec.discount = discount;
    return make_random_mdp(spec);
  }
  throw std::invalid_argument("not a tabular environment: " + id);
}

}  // namespace bcqlab
