#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bcqlab/batch.hpp"
#include "bcqlab/bc.hpp"
#include "bcqlab/bcq.hpp"
#include "bcqlab/checkpoint.hpp"
#include "bcqlab/config.hpp"
#include "bcqlab/ddpg.hpp"
#include "bcqlab/envs.hpp"
#include "bcqlab/extrapolation.hpp"
#include "bcqlab/io.hpp"
#include "bcqlab/kbrl.hpp"
#include "bcqlab/mdp.hpp"
#include "bcqlab/replay.hpp"
#include "bcqlab/tabular.hpp"
#include "json.hpp"

namespace bcqlab {

// Experiment harness behind the CLI. Every run is described by a Config and
// writes its outputs under
//   <out_dir>/<env>/<scenario>/<agent>/seed-<seed>/
// as metrics.csv (one row per evaluation), checkpoint.json (final agent) and
// config.txt (the full settings the run actually used). Batches live under
// <out_dir>/batches/ unless batch_path points elsewhere. All randomness is
// derived from the seed key, so a rerun with the same config file reproduces
// every output byte for byte (wall_clock_s stays 0.0 unless real_wall_clock
// is set, keeping the metrics deterministic by default).

// ---------------------------------------------------------------------------
// Scenarios.
// ---------------------------------------------------------------------------

/// The five data-collection regimes a batch can come from:
///  - final-buffer: the full replay buffer of a fresh learner trained once
///    with high exploration noise;
///  - concurrent: the offline agent trains while the behavioral learner
///    collects, sharing the growing buffer;
///  - imitation: a trained expert acting noise-free;
///  - imperfect: the expert with Gaussian action noise plus a fraction of
///    uniformly random actions;
///  - random-behavioral: uniformly random actions throughout.
enum class Scenario { final_buffer, concurrent, imitation, imperfect, random_behavioral };

inline Scenario parse_scenario(const std::string& name) {
  if (name == "final-buffer") return Scenario::final_buffer;
  if (name == "concurrent") return Scenario::concurrent;
  if (name == "imitation") return Scenario::imitation;
  if (name == "imperfect") return Scenario::imperfect;
  if (name == "random-behavioral") return Scenario::random_behavioral;
  throw std::runtime_error("unknown scenario '" + name +
                           "' (expected final-buffer, concurrent, imitation, imperfect or "
                           "random-behavioral)");
}

inline double default_behavior_noise(Scenario sc) {
  switch (sc) {
    case Scenario::final_buffer: return 0.5;
    case Scenario::concurrent: return 0.1;
    case Scenario::imitation: return 0.0;
    case Scenario::imperfect: return 0.3;
    case Scenario::random_behavioral: return 0.0;
  }
  return 0.0;
}

/// Behavior-policy action noise: the config value, or the scenario's default
/// when the key is left negative.
inline double behavior_noise_of(const Config& cfg, Scenario sc) {
  const double v = cfg.get_real("behavior_noise");
  return v < 0.0 ? default_behavior_noise(sc) : v;
}

// ---------------------------------------------------------------------------
// Output paths.
// ---------------------------------------------------------------------------

inline std::string sanitize_path_component(std::string s) {
  for (char& ch : s)
    if (ch == ':' || ch == '/' || ch == '\\') ch = '-';
  return s;
}

struct RunPaths {
  std::string dir;
  std::string metrics;
  std::string behavior_metrics;
  std::string checkpoint;
  std::string config_echo;
};

inline RunPaths run_paths(const Config& cfg) {
  const std::string dir = cfg.get_text("out_dir") + "/" +
                          sanitize_path_component(cfg.get_text("env")) + "/" +
                          sanitize_path_component(cfg.get_text("scenario")) + "/" +
                          sanitize_path_component(cfg.get_text("agent")) + "/seed-" +
                          std::to_string(cfg.get_int("seed"));
  return RunPaths{dir, dir + "/metrics.csv", dir + "/behavior_metrics.csv",
                  dir + "/checkpoint.json", dir + "/config.txt"};
}

inline void ensure_parent_dir(const std::string& file_path) {
  const auto parent = std::filesystem::path(file_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::string resolved_batch_path(const Config& cfg) {
  const std::string given = cfg.get_text("batch_path");
  if (!given.empty()) return given;
  return cfg.get_text("out_dir") + "/batches/" + sanitize_path_component(cfg.get_text("env")) +
         "-" + sanitize_path_component(cfg.get_text("scenario")) + "-seed-" +
         std::to_string(cfg.get_int("seed")) + ".jsonl";
}

inline std::string batch_stats_path(const std::string& batch_path) {
  const std::string suffix = ".jsonl";
  if (batch_path.size() > suffix.size() &&
      batch_path.compare(batch_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return batch_path.substr(0, batch_path.size() - suffix.size()) + "-stats.json";
  return batch_path + "-stats.json";
}

inline std::string resolved_expert_path(const Config& cfg) {
  const std::string given = cfg.get_text("expert_path");
  if (!given.empty()) return given;
  return cfg.get_text("out_dir") + "/experts/" + sanitize_path_component(cfg.get_text("env")) +
         "-expert.json";
}

inline Batch load_batch_checked(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("batch file not found: " + path + " (run generate-batch first)");
  return load_batch(path);
}

// ---------------------------------------------------------------------------
// Metrics files.
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "iteration,eval_return_mean,eval_return_std,value_estimate,mc_true_value,wall_clock_s";

struct MetricsRow {
  long iteration = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double value_estimate = 0.0;
  double mc_true_value = 0.0;
  double wall_clock_s = 0.0;
};

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.iteration);
    out += ',' + format_real(r.eval_return_mean);
    out += ',' + format_real(r.eval_return_std);
    out += ',' + format_real(r.value_estimate);
    out += ',' + format_real(r.mc_true_value);
    out += ',' + format_real(r.wall_clock_s);
    out += '\n';
  }
  return out;
}

inline std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error("metrics file has an unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw std::runtime_error("metrics row has " + std::to_string(fields.size()) +
                               " fields: " + line);
    MetricsRow r;
    r.iteration = std::stol(fields[0]);
    r.eval_return_mean = std::stod(fields[1]);
    r.eval_return_std = std::stod(fields[2]);
    r.value_estimate = std::stod(fields[3]);
    r.mc_true_value = std::stod(fields[4]);
    r.wall_clock_s = std::stod(fields[5]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Uniform interface over the continuous-control agents.
// ---------------------------------------------------------------------------

class ContinuousAgent {
 public:
  virtual ~ContinuousAgent() = default;
  virtual std::string kind() const = 0;
  virtual Eigen::VectorXd act(const Eigen::VectorXd& state, Rng& rng) const = 0;
  virtual void train(const MinibatchC& mb, Rng& rng) = 0;
  /// Mean critic value over the given state-action pairs; zero for agents
  /// without a critic (behavioral cloning variants).
  virtual double pair_value(const Eigen::MatrixXd& states,
                            const Eigen::MatrixXd& actions) const = 0;
  virtual std::string checkpoint_json() const = 0;
};

class BcqRunner final : public ContinuousAgent {
 public:
  explicit BcqRunner(BcqAgent agent) : agent_(std::move(agent)) {}
  std::string kind() const override { return "bcq"; }
  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng& rng) const override {
    return agent_.act(state, rng);
  }
  void train(const MinibatchC& mb, Rng& rng) override { agent_.train_iteration(mb, rng); }
  double pair_value(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) const override {
    return agent_.critic1().forward(vstack(s, a)).mean();
  }
  std::string checkpoint_json() const override { return bcq_to_json(agent_); }

 private:
  BcqAgent agent_;
};

class DdpgRunner final : public ContinuousAgent {
 public:
  explicit DdpgRunner(DdpgAgent agent) : agent_(std::move(agent)) {}
  std::string kind() const override { return "ddpg"; }
  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng&) const override {
    return agent_.act(state);
  }
  void train(const MinibatchC& mb, Rng&) override { agent_.train_iteration(mb); }
  double pair_value(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) const override {
    return agent_.critic().forward(s, a).mean();
  }
  std::string checkpoint_json() const override { return ddpg_to_json(agent_); }

 private:
  DdpgAgent agent_;
};

class BcRunner final : public ContinuousAgent {
 public:
  explicit BcRunner(BcAgent agent) : agent_(std::move(agent)) {}
  std::string kind() const override { return "bc"; }
  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng&) const override {
    return agent_.act(state);
  }
  void train(const MinibatchC& mb, Rng&) override { agent_.train_iteration(mb); }
  double pair_value(const Eigen::MatrixXd&, const Eigen::MatrixXd&) const override { return 0.0; }
  std::string checkpoint_json() const override { return bc_to_json(agent_); }

 private:
  BcAgent agent_;
};

class VaeBcRunner final : public ContinuousAgent {
 public:
  explicit VaeBcRunner(VaeBcAgent agent) : agent_(std::move(agent)) {}
  std::string kind() const override { return "vae-bc"; }
  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng& rng) const override {
    return agent_.act(state, rng);
  }
  void train(const MinibatchC& mb, Rng& rng) override { agent_.train_iteration(mb, rng); }
  double pair_value(const Eigen::MatrixXd&, const Eigen::MatrixXd&) const override { return 0.0; }
  std::string checkpoint_json() const override { return vae_bc_to_json(agent_); }

 private:
  VaeBcAgent agent_;
};

inline BcqConfig bcq_config_from(const Config& cfg) {
  BcqConfig c;
  c.state_dim = PendulumEnv::kObsDim;
  c.action_dim = PendulumEnv::kActionDim;
  c.max_action = PendulumEnv::kMaxTorque;
  c.h1 = static_cast<int>(cfg.get_int("hidden1"));
  c.h2 = static_cast<int>(cfg.get_int("hidden2"));
  c.vae_hidden = {static_cast<int>(cfg.get_int("vae_hidden1")),
                  static_cast<int>(cfg.get_int("vae_hidden2"))};
  c.latent_dim = static_cast<int>(cfg.get_int("latent_dim"));
  c.lr = cfg.get_real("lr");
  c.gamma = cfg.get_real("discount");
  c.tau = cfg.get_real("tau");
  c.lambda = cfg.get_real("lambda");
  c.n_candidates = static_cast<int>(cfg.get_int("n_candidates"));
  c.phi = cfg.get_real("phi");
  c.vae_l2 = cfg.get_real("vae_l2");
  return c;
}

inline DdpgConfig ddpg_config_from(const Config& cfg) {
  DdpgConfig c;
  c.state_dim = PendulumEnv::kObsDim;
  c.action_dim = PendulumEnv::kActionDim;
  c.max_action = PendulumEnv::kMaxTorque;
  c.h1 = static_cast<int>(cfg.get_int("hidden1"));
  c.h2 = static_cast<int>(cfg.get_int("hidden2"));
  c.actor_lr = cfg.get_real("actor_lr");
  c.critic_lr = cfg.get_real("critic_lr");
  c.critic_l2 = cfg.get_real("critic_l2");
  c.gamma = cfg.get_real("discount");
  c.tau = cfg.get_real("tau");
  return c;
}

inline BcConfig bc_config_from(const Config& cfg) {
  BcConfig c;
  c.state_dim = PendulumEnv::kObsDim;
  c.action_dim = PendulumEnv::kActionDim;
  c.max_action = PendulumEnv::kMaxTorque;
  c.h1 = static_cast<int>(cfg.get_int("hidden1"));
  c.h2 = static_cast<int>(cfg.get_int("hidden2"));
  c.lr = cfg.get_real("lr");
  return c;
}

inline VaeConfig vae_config_from(const Config& cfg) {
  VaeConfig c;
  c.state_dim = PendulumEnv::kObsDim;
  c.action_dim = PendulumEnv::kActionDim;
  c.latent_dim = static_cast<int>(cfg.get_int("latent_dim"));
  c.hidden = {static_cast<int>(cfg.get_int("vae_hidden1")),
              static_cast<int>(cfg.get_int("vae_hidden2"))};
  c.max_action = PendulumEnv::kMaxTorque;
  c.l2 = cfg.get_real("vae_l2");
  return c;
}

inline std::unique_ptr<ContinuousAgent> make_continuous_agent(const Config& cfg) {
  const std::string kind = cfg.get_text("agent");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  if (kind == "bcq") return std::make_unique<BcqRunner>(BcqAgent(bcq_config_from(cfg), seed));
  if (kind == "ddpg") return std::make_unique<DdpgRunner>(DdpgAgent(ddpg_config_from(cfg), seed));
  if (kind == "bc") return std::make_unique<BcRunner>(BcAgent(bc_config_from(cfg), seed));
  if (kind == "vae-bc")
    return std::make_unique<VaeBcRunner>(
        VaeBcAgent(vae_config_from(cfg), seed, cfg.get_real("lr")));
  throw std::runtime_error("unknown continuous agent '" + kind +
                           "' (expected bcq, ddpg, bc or vae-bc)");
}

inline std::unique_ptr<ContinuousAgent> load_continuous_agent(const Config& cfg,
                                                              const std::string& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("checkpoint not found: " + path);
  const std::string text = read_text_file(path);
  const std::string kind = cfg.get_text("agent");
  if (kind == "bcq") return std::make_unique<BcqRunner>(bcq_from_json(text));
  if (kind == "ddpg") return std::make_unique<DdpgRunner>(ddpg_from_json(text));
  if (kind == "bc") return std::make_unique<BcRunner>(bc_from_json(text));
  if (kind == "vae-bc") return std::make_unique<VaeBcRunner>(vae_bc_from_json(text));
  throw std::runtime_error("unknown continuous agent '" + kind +
                           "' (expected bcq, ddpg, bc or vae-bc)");
}

// ---------------------------------------------------------------------------
// Pendulum evaluation probes.
// ---------------------------------------------------------------------------

using PolicyFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, Rng&)>;

struct EvalSummary {
  double mean = 0.0;
  double stddev = 0.0;
  int n_episodes = 0;
};

/// Undiscounted return over full episodes from the environment's initial
/// distribution; stddev is the sample standard deviation across episodes.
inline EvalSummary rollout_episodes(const PolicyFn& policy, int n_episodes, Rng& rng) {
  if (n_episodes <= 0) throw std::invalid_argument("n_episodes must be positive");
  std::vector<double> rets(n_episodes, 0.0);
  for (int e = 0; e < n_episodes; ++e) {
    PendulumEnv env;
    Eigen::VectorXd obs = env.reset(rng);
    double sum = 0.0;
    while (true) {
      const auto res = env.step(policy(obs, rng));
      sum += res.reward;
      if (res.terminated || res.truncated) break;
      obs = res.obs;
    }
    rets[e] = sum;
  }
  EvalSummary out;
  out.n_episodes = n_episodes;
  for (double r : rets) out.mean += r;
  out.mean /= n_episodes;
  if (n_episodes > 1) {
    double ss = 0.0;
    for (double r : rets) ss += (r - out.mean) * (r - out.mean);
    out.stddev = std::sqrt(ss / (n_episodes - 1));
  }
  return out;
}

/// Discounted Monte-Carlo value of the probe's state-action pairs: restart
/// the environment in each logged state, apply the logged action first, then
/// follow the policy for `horizon` steps. Episode-end flags are ignored; the
/// pendulum never terminates and its dynamics keep evolving past the horizon
/// cut, so the rollout measures the stationary discounted return.
inline double mc_pair_value(const PolicyFn& policy, const MinibatchC& probe, double discount,
                            long horizon, Rng& rng) {
  if (probe.size() == 0) throw std::invalid_argument("probe minibatch is empty");
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  double acc = 0.0;
  for (int j = 0; j < probe.size(); ++j) {
    PendulumEnv env;
    env.set_state(std::atan2(probe.s(1, j), probe.s(0, j)), probe.s(2, j), 0);
    Eigen::VectorXd a = probe.a.col(j);
    double disc = 1.0;
    double ret = 0.0;
    for (long t = 0; t < horizon; ++t) {
      const auto res = env.step(a);
      ret += disc * res.reward;
      disc *= discount;
      a = policy(res.obs, rng);
    }
    acc += ret;
  }
  return acc / probe.size();
}

// ---------------------------------------------------------------------------
// Online learning loop (behavioral data collection and expert training).
// ---------------------------------------------------------------------------

struct OnlineRunConfig {
  long total_steps = 100000;
  long start_steps = 1000;  // uniform-random actions before the policy takes over
  double noise_sigma = 0.1;
  double random_action_prob = 0.0;
  int minibatch_size = 100;
  std::uint64_t seed = 0;
  std::string policy_tag;
  std::string env_id = "pendulum";
};

/// Runs a learner online on the pendulum for exactly total_steps environment
/// steps, pushing every transition into `data` and logging it in the returned
/// batch. Training updates accrue one per environment step and are applied in
/// a burst at each episode end (and at the end of the run), once the buffer
/// holds a full minibatch; on_update fires after each applied update with the
/// running update count.
inline Batch run_online_ddpg(DdpgAgent& agent, ContinuousDataset& data, const OnlineRunConfig& oc,
                             const std::function<void(long)>& on_update = {}) {
  if (oc.total_steps <= 0) throw std::invalid_argument("total_steps must be positive");
  if (oc.minibatch_size <= 0) throw std::invalid_argument("minibatch_size must be positive");
  Rng env_rng(derive_seed(oc.seed, 0x6f6e656e76ULL));
  Rng mb_rng(derive_seed(oc.seed, 0x6f6e6d62ULL));
  PendulumEnv env;
  const double bound = env.max_action();
  Batch batch;
  batch.meta = BatchMeta{oc.env_id, env.obs_dim(), env.action_dim(), oc.policy_tag, oc.seed};
  batch.discrete = false;
  batch.c.reserve(oc.total_steps);
  Eigen::VectorXd obs = env.reset(env_rng);
  long pending = 0;
  long updates = 0;
  const auto flush = [&] {
    while (pending > 0 && data.size() >= oc.minibatch_size) {
      agent.train_iteration(data.sample(oc.minibatch_size, mb_rng));
      --pending;
      ++updates;
      if (on_update) on_update(updates);
    }
  };
  for (long step = 0; step < oc.total_steps; ++step) {
    Eigen::VectorXd a(env.action_dim());
    const bool exploring =
        step < oc.start_steps ||
        (oc.random_action_prob > 0.0 && env_rng.uniform() < oc.random_action_prob);
    if (exploring) {
      for (int i = 0; i < a.size(); ++i) a(i) = env_rng.uniform(-bound, bound);
    } else {
      a = agent.act_noisy(obs, env_rng, oc.noise_sigma);
    }
    const auto res = env.step(a);
    data.push(obs, a, res.reward, res.obs, res.terminated);
    ContinuousTransition tr;
    tr.s = obs;
    tr.a = a;
    tr.r = res.reward;
    tr.s_next = res.obs;
    tr.terminal = res.terminated;
    tr.truncated = res.truncated && !res.terminated;
    batch.c.push_back(tr);
    ++pending;
    if (res.terminated || res.truncated) {
      obs = env.reset(env_rng);
      flush();
    } else {
      obs = res.obs;
    }
  }
  flush();
  batch.validate();
  return batch;
}

// ---------------------------------------------------------------------------
// Expert management.
// ---------------------------------------------------------------------------

/// Trains candidate learners from several seeds and keeps the one with the
/// best evaluation return. Used to produce the demonstrator behind the
/// imitation and imperfect scenarios.
inline DdpgAgent train_pendulum_expert(const Config& cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const int n_candidates = 3;
  std::optional<DdpgAgent> best;
  double best_mean = 0.0;
  for (int i = 0; i < n_candidates; ++i) {
    DdpgAgent agent(ddpg_config_from(cfg), derive_seed(seed, 0x657867ULL * 8 + i));
    ContinuousDataset data(PendulumEnv::kObsDim, PendulumEnv::kActionDim);
    OnlineRunConfig oc;
    oc.total_steps = cfg.get_int("expert_train_steps");
    oc.start_steps = cfg.get_int("start_steps");
    oc.noise_sigma = cfg.get_real("exploration_noise");
    oc.minibatch_size = static_cast<int>(cfg.get_int("minibatch_size"));
    oc.seed = derive_seed(seed, 0x657872ULL * 8 + i);
    oc.policy_tag = "expert-candidate";
    run_online_ddpg(agent, data, oc);
    Rng eval_rng(derive_seed(seed, 0x657865ULL * 8 + i));
    const PolicyFn pi = [&](const Eigen::VectorXd& s, Rng&) { return agent.act(s); };
    const EvalSummary es =
        rollout_episodes(pi, static_cast<int>(cfg.get_int("eval_episodes")), eval_rng);
    std::cout << "expert candidate " << i << ": return " << es.mean << " +- " << es.stddev
              << "\n";
    if (!best || es.mean > best_mean) {
      best_mean = es.mean;
      best.emplace(std::move(agent));
    }
  }
  std::cout << "selected expert with return " << best_mean << "\n";
  return std::move(*best);
}

inline DdpgAgent load_pendulum_expert(const Config& cfg) {
  const std::string path = resolved_expert_path(cfg);
  if (!std::filesystem::exists(path))
    throw std::runtime_error("expert checkpoint not found: " + path +
                             " (run generate-batch --train-expert first)");
  return ddpg_from_json(read_text_file(path));
}

// ---------------------------------------------------------------------------
// generate-batch.
// ---------------------------------------------------------------------------

namespace detail {

inline Batch make_tabular_scenario_batch(const Config& cfg, Scenario sc, const FiniteMdp& mdp) {
  const std::string env = cfg.get_text("env");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const long n = cfg.get_int("buffer_size");
  const long horizon = cfg.get_int("episode_horizon");
  switch (sc) {
    case Scenario::random_behavioral:
      return collect_batch(mdp, TabularPolicy::uniform(mdp.n_states, mdp.n_actions), n, seed,
                           horizon, 0.0, "uniform-random", env);
    case Scenario::imitation: {
      const TabularPolicy expert = greedy_policy(value_iteration(mdp).q);
      return collect_batch(mdp, expert, n, seed, horizon, 0.0, "expert", env);
    }
    case Scenario::imperfect: {
      const TabularPolicy expert = greedy_policy(value_iteration(mdp).q);
      return collect_batch(mdp, expert, n, seed, horizon, cfg.get_real("random_action_prob"),
                           "noisy-expert", env);
    }
    case Scenario::final_buffer:
    case Scenario::concurrent:
      throw std::runtime_error("scenario '" + cfg.get_text("scenario") +
                               "' is not defined for tabular environments");
  }
  throw std::logic_error("unhandled scenario");
}

inline Batch make_pendulum_scenario_batch(const Config& cfg, Scenario sc, bool train_expert) {
  const std::string env_id = cfg.get_text("env");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const long n = cfg.get_int("buffer_size");
  const double noise = behavior_noise_of(cfg, sc);
  PendulumEnv env;
  switch (sc) {
    case Scenario::random_behavioral: {
      const auto zero = [](const Eigen::VectorXd&, Rng&) {
        return Eigen::VectorXd::Zero(PendulumEnv::kActionDim).eval();
      };
      return collect_continuous(env, zero, n, seed, 0.0, 1.0, "uniform-random", env_id);
    }
    case Scenario::imitation:
    case Scenario::imperfect: {
      DdpgAgent expert = [&] {
        if (!train_expert) return load_pendulum_expert(cfg);
        DdpgAgent trained = train_pendulum_expert(cfg);
        const std::string path = resolved_expert_path(cfg);
        ensure_parent_dir(path);
        write_text_file(path, ddpg_to_json(trained));
        std::cout << "wrote expert checkpoint to " << path << "\n";
        return trained;
      }();
      const auto actor = [&](const Eigen::VectorXd& s, Rng&) { return expert.act(s); };
      const double rap = sc == Scenario::imperfect ? cfg.get_real("random_action_prob") : 0.0;
      const char* tag = sc == Scenario::imperfect ? "noisy-expert" : "expert";
      return collect_continuous(env, actor, n, seed, noise, rap, tag, env_id);
    }
    case Scenario::final_buffer: {
      DdpgAgent fresh(ddpg_config_from(cfg), derive_seed(seed, 0x6662ULL));
      ContinuousDataset data(PendulumEnv::kObsDim, PendulumEnv::kActionDim);
      OnlineRunConfig oc;
      oc.total_steps = n;
      oc.start_steps = cfg.get_int("start_steps");
      oc.noise_sigma = noise;
      oc.minibatch_size = static_cast<int>(cfg.get_int("minibatch_size"));
      oc.seed = seed;
      oc.policy_tag = "online-ddpg";
      oc.env_id = env_id;
      return run_online_ddpg(fresh, data, oc);
    }
    case Scenario::concurrent:
      throw std::runtime_error(
          "the concurrent scenario collects its batch while training; run train directly");
  }
  throw std::logic_error("unhandled scenario");
}

}  // namespace detail

inline int cmd_generate_batch(const Config& cfg, bool train_expert = false) {
  const Scenario sc = parse_scenario(cfg.get_text("scenario"));
  const std::string env = cfg.get_text("env");
  const Batch batch =
      is_tabular_env(env)
          ? detail::make_tabular_scenario_batch(
                cfg, sc,
                make_tabular_env(env, cfg.get_real("discount"), cfg.get_real("gridworld_noise")))
          : detail::make_pendulum_scenario_batch(cfg, sc, train_expert);

  const std::string path = resolved_batch_path(cfg);
  ensure_parent_dir(path);
  save_batch(batch, path);

  const std::vector<double> returns = episode_returns(batch);
  const McEstimate est = detail::summarize(returns);
  nlohmann::json stats;
  stats["env_id"] = batch.meta.env_id;
  stats["scenario"] = cfg.get_text("scenario");
  stats["policy_tag"] = batch.meta.policy_tag;
  stats["seed"] = cfg.get_int("seed");
  stats["size"] = batch.size();
  stats["n_episodes"] = est.n_episodes;
  stats["episode_return_mean"] = est.mean;
  stats["episode_return_std"] = est.std_error * std::sqrt(std::max<long>(est.n_episodes, 1));
  stats["episode_return_std_error"] = est.std_error;
  write_text_file(batch_stats_path(path), stats.dump(2) + "\n");

  std::cout << "wrote " << batch.size() << " transitions to " << path << "\n";
  std::cout << "episodes " << est.n_episodes << ", mean return " << est.mean << " +- "
            << est.std_error << " (standard error)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train.
// ---------------------------------------------------------------------------

namespace detail {

inline double elapsed_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void print_eval(const MetricsRow& r) {
  std::cout << "iter " << r.iteration << "  return " << r.eval_return_mean << " +- "
            << r.eval_return_std << "  value " << r.value_estimate << "  mc "
            << r.mc_true_value << "\n";
}

inline int train_offline_continuous(const Config& cfg, const RunPaths& paths) {
  const Batch batch = load_batch_checked(resolved_batch_path(cfg));
  if (batch.discrete)
    throw std::runtime_error("batch at " + resolved_batch_path(cfg) +
                             " is discrete; this run needs a continuous batch");
  if (batch.meta.state_dim != PendulumEnv::kObsDim ||
      batch.meta.action_dim != PendulumEnv::kActionDim)
    throw std::runtime_error("batch dimensions do not match the pendulum");
  const ContinuousDataset data = ContinuousDataset::from_batch(batch);

  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  auto agent = make_continuous_agent(cfg);
  Rng mb_rng(derive_seed(seed, 0x6d696e69ULL));
  Rng train_rng(derive_seed(seed, 0x747261696eULL));
  Rng probe_rng(derive_seed(seed, 0x70726f6265ULL));
  const int probe_n =
      static_cast<int>(std::min<long>(cfg.get_int("value_probe_size"), data.size()));
  const MinibatchC probe = data.sample(probe_n, probe_rng);

  const long iterations = cfg.get_int("train_iterations");
  const long interval = cfg.get_int("eval_interval");
  const int mb_size = static_cast<int>(cfg.get_int("minibatch_size"));
  const int eval_episodes = static_cast<int>(cfg.get_int("eval_episodes"));
  const double discount = cfg.get_real("discount");
  const long mc_horizon = cfg.get_int("mc_horizon");
  const bool real_clock = cfg.get_flag("real_wall_clock");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<MetricsRow> rows;
  const PolicyFn pi = [&](const Eigen::VectorXd& s, Rng& rng) { return agent->act(s, rng); };
  const auto do_eval = [&](long iter) {
    Rng eval_rng(derive_seed(seed, 0x6576616c0000ULL + rows.size()));
    const EvalSummary es = rollout_episodes(pi, eval_episodes, eval_rng);
    MetricsRow r;
    r.iteration = iter;
    r.eval_return_mean = es.mean;
    r.eval_return_std = es.stddev;
    r.value_estimate = agent->pair_value(probe.s, probe.a);
    r.mc_true_value = mc_pair_value(pi, probe, discount, mc_horizon, eval_rng);
    r.wall_clock_s = real_clock ? elapsed_seconds(t0) : 0.0;
    rows.push_back(r);
    write_text_file(paths.metrics, metrics_to_csv(rows));
    print_eval(r);
  };

  do_eval(0);
  for (long it = 1; it <= iterations; ++it) {
    agent->train(data.sample(mb_size, mb_rng), train_rng);
    if (it % interval == 0) do_eval(it);
  }
  if (rows.back().iteration != iterations) do_eval(iterations);

  write_text_file(paths.checkpoint, agent->checkpoint_json());
  write_text_file(paths.config_echo, cfg.to_text());
  std::cout << "run complete: " << paths.dir << "\n";
  return 0;
}

inline int train_concurrent(const Config& cfg, const RunPaths& paths) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  DdpgAgent behavior(ddpg_config_from(cfg), derive_seed(seed, 0x626568ULL));
  auto offline = make_continuous_agent(cfg);
  ContinuousDataset data(PendulumEnv::kObsDim, PendulumEnv::kActionDim);
  Rng off_mb_rng(derive_seed(seed, 0x6d696e69ULL));
  Rng off_train_rng(derive_seed(seed, 0x747261696eULL));

  const long interval = cfg.get_int("eval_interval");
  const int mb_size = static_cast<int>(cfg.get_int("minibatch_size"));
  const int eval_episodes = static_cast<int>(cfg.get_int("eval_episodes"));
  const double discount = cfg.get_real("discount");
  const long mc_horizon = cfg.get_int("mc_horizon");
  const long probe_size = cfg.get_int("value_probe_size");
  const bool real_clock = cfg.get_flag("real_wall_clock");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<MetricsRow> rows, behavior_rows;
  const PolicyFn off_pi = [&](const Eigen::VectorXd& s, Rng& rng) { return offline->act(s, rng); };
  const PolicyFn beh_pi = [&](const Eigen::VectorXd& s, Rng&) { return behavior.act(s); };
  // Both agents are probed on the same pairs, resampled from the growing
  // buffer at every evaluation.
  const auto eval_both = [&](long iter) {
    const auto idx = static_cast<std::uint64_t>(rows.size());
    Rng pair_rng(derive_seed(seed, 0x70726f62650000ULL + idx));
    const int probe_n = static_cast<int>(std::min<long>(probe_size, data.size()));
    const MinibatchC probe = data.sample(probe_n, pair_rng);

    Rng eval_rng(derive_seed(seed, 0x6576616c0000ULL + idx));
    const EvalSummary es = rollout_episodes(off_pi, eval_episodes, eval_rng);
    MetricsRow r;
    r.iteration = iter;
    r.eval_return_mean = es.mean;
    r.eval_return_std = es.stddev;
    r.value_estimate = offline->pair_value(probe.s, probe.a);
    r.mc_true_value = mc_pair_value(off_pi, probe, discount, mc_horizon, eval_rng);
    r.wall_clock_s = real_clock ? elapsed_seconds(t0) : 0.0;
    rows.push_back(r);
    write_text_file(paths.metrics, metrics_to_csv(rows));
    print_eval(r);

    Rng beh_rng(derive_seed(seed, 0x6265760000ULL + idx));
    const EvalSummary bs = rollout_episodes(beh_pi, eval_episodes, beh_rng);
    MetricsRow b;
    b.iteration = iter;
    b.eval_return_mean = bs.mean;
    b.eval_return_std = bs.stddev;
    b.value_estimate = behavior.critic().forward(probe.s, probe.a).mean();
    b.mc_true_value = mc_pair_value(beh_pi, probe, discount, mc_horizon, beh_rng);
    b.wall_clock_s = real_clock ? elapsed_seconds(t0) : 0.0;
    behavior_rows.push_back(b);
    write_text_file(paths.behavior_metrics, metrics_to_csv(behavior_rows));
  };

  OnlineRunConfig oc;
  oc.total_steps = cfg.get_int("train_iterations");
  oc.start_steps = cfg.get_int("start_steps");
  oc.noise_sigma = behavior_noise_of(cfg, Scenario::concurrent);
  oc.minibatch_size = mb_size;
  oc.seed = seed;
  oc.policy_tag = "concurrent-ddpg";
  oc.env_id = cfg.get_text("env");

  long total_updates = 0;
  run_online_ddpg(behavior, data, oc, [&](long k) {
    if (k == 1) eval_both(0);
    offline->train(data.sample(mb_size, off_mb_rng), off_train_rng);
    total_updates = k;
    if (k % interval == 0) eval_both(k);
  });
  if (rows.empty() || rows.back().iteration != total_updates) eval_both(total_updates);

  write_text_file(paths.checkpoint, offline->checkpoint_json());
  write_text_file(paths.config_echo, cfg.to_text());
  std::cout << "run complete: " << paths.dir << "\n";
  return 0;
}

inline int train_tabular_run(const Config& cfg, Scenario sc, const RunPaths& paths) {
  if (sc == Scenario::final_buffer || sc == Scenario::concurrent)
    throw std::runtime_error("scenario '" + cfg.get_text("scenario") +
                             "' is not defined for tabular environments");
  const std::string env = cfg.get_text("env");
  const double discount = cfg.get_real("discount");
  const FiniteMdp mdp = make_tabular_env(env, discount, cfg.get_real("gridworld_noise"));
  const Batch batch = load_batch_checked(resolved_batch_path(cfg));
  if (!batch.discrete)
    throw std::runtime_error("batch at " + resolved_batch_path(cfg) +
                             " is continuous; this run needs a discrete batch");
  if (batch.meta.state_dim != mdp.n_states || batch.meta.action_dim != mdp.n_actions)
    throw std::runtime_error("batch dimensions do not match the environment");

  const std::string agent = cfg.get_text("agent");
  if (agent != "bcql" && agent != "tabular-q")
    throw std::runtime_error("unknown tabular agent '" + agent +
                             "' (expected bcql or tabular-q)");
  const bool constrained = agent == "bcql";
  const BatchActionSets sets(batch, mdp.n_states, mdp.n_actions);

  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const std::string schedule = cfg.get_text("schedule");
  TabularTrainConfig tc;
  tc.iterations = cfg.get_int("train_iterations");
  if (schedule == "constant")
    tc.schedule = LearningSchedule::constant_rate(cfg.get_real("alpha0"));
  else if (schedule == "polynomial")
    tc.schedule = LearningSchedule::polynomial_decay(cfg.get_real("alpha0"),
                                                     cfg.get_real("omega"));
  else
    throw std::runtime_error("unknown schedule '" + schedule +
                             "' (expected constant or polynomial)");
  tc.gamma = discount;
  tc.q_init = cfg.get_real("q_init");
  tc.rng_seed = seed;
  tc.window = cfg.get_int("eval_interval");

  Rng probe_rng(derive_seed(seed, 0x70726f6265ULL));
  const int probe_n =
      static_cast<int>(std::min<long>(cfg.get_int("value_probe_size"), batch.size()));
  std::vector<const DiscreteTransition*> probe(probe_n);
  for (int i = 0; i < probe_n; ++i)
    probe[i] = &batch.d[probe_rng.uniform_int(static_cast<int>(batch.size()))];

  const int eval_episodes = static_cast<int>(cfg.get_int("eval_episodes"));
  const long mc_horizon = cfg.get_int("mc_horizon");
  const bool real_clock = cfg.get_flag("real_wall_clock");
  const auto t0 = std::chrono::steady_clock::now();

  const auto policy_of = [&](const QTable& q) {
    return constrained ? extract_bcq_policy(q, sets).to_tabular(0) : greedy_policy(q);
  };

  std::vector<MetricsRow> rows;
  const auto do_eval = [&](long iter, const QTable& q) {
    const TabularPolicy pol = policy_of(q);
    Rng eval_rng(derive_seed(seed, 0x6576616c0000ULL + rows.size()));
    const McEstimate est = mc_return(mdp, pol, eval_episodes, mc_horizon, eval_rng);
    double ve = 0.0;
    double mc = 0.0;
    for (const DiscreteTransition* t : probe) {
      ve += q.values(t->s, t->a);
      mc += mc_rollout(mdp, pol, t->s, t->a, mc_horizon, eval_rng);
    }
    MetricsRow r;
    r.iteration = iter;
    r.eval_return_mean = est.mean;
    r.eval_return_std = est.std_error * std::sqrt(static_cast<double>(est.n_episodes));
    r.value_estimate = ve / probe_n;
    r.mc_true_value = mc / probe_n;
    r.wall_clock_s = real_clock ? elapsed_seconds(t0) : 0.0;
    rows.push_back(r);
    write_text_file(paths.metrics, metrics_to_csv(rows));
    print_eval(r);
  };

  const TabularTrainResult result = train_tabular(batch, tc, constrained, do_eval);
  if (rows.empty() || rows.back().iteration != result.iterations_run)
    do_eval(result.iterations_run, result.q);

  const TabularPolicy final_policy = policy_of(result.q);
  std::vector<int> actions(mdp.n_states, 0);
  for (int s = 0; s < mdp.n_states; ++s) {
    int arg = 0;
    final_policy.probs.row(s).maxCoeff(&arg);
    actions[s] = arg;
  }
  TabularCheckpoint ckpt;
  ckpt.agent = agent;
  ckpt.env_id = env;
  ckpt.discount = discount;
  ckpt.q_init = tc.q_init;
  ckpt.q = result.q;
  ckpt.policy = actions;
  write_text_file(paths.checkpoint, tabular_to_json(ckpt));
  write_text_file(paths.config_echo, cfg.to_text());
  std::cout << "trained " << agent << " for " << result.iterations_run << " iterations"
            << (result.converged ? " (converged)" : "") << "\n";
  std::cout << "run complete: " << paths.dir << "\n";
  return 0;
}

}  // namespace detail

inline int cmd_train(const Config& cfg) {
  const Scenario sc = parse_scenario(cfg.get_text("scenario"));
  const RunPaths paths = run_paths(cfg);
  std::filesystem::create_directories(paths.dir);
  if (is_tabular_env(cfg.get_text("env"))) return detail::train_tabular_run(cfg, sc, paths);
  if (sc == Scenario::concurrent) return detail::train_concurrent(cfg, paths);
  return detail::train_offline_continuous(cfg, paths);
}

// ---------------------------------------------------------------------------
// evaluate.
// ---------------------------------------------------------------------------

inline int cmd_evaluate(const Config& cfg) {
  const RunPaths paths = run_paths(cfg);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const int eval_episodes = static_cast<int>(cfg.get_int("eval_episodes"));
  nlohmann::json out;
  if (is_tabular_env(cfg.get_text("env"))) {
    if (!std::filesystem::exists(paths.checkpoint))
      throw std::runtime_error("checkpoint not found: " + paths.checkpoint);
    const TabularCheckpoint ckpt = tabular_from_json(read_text_file(paths.checkpoint));
    const FiniteMdp mdp =
        make_tabular_env(cfg.get_text("env"), ckpt.discount, cfg.get_real("gridworld_noise"));
    const TabularPolicy pol = TabularPolicy::deterministic(ckpt.policy, mdp.n_actions);
    Rng rng(derive_seed(seed, 0x65766374ULL));
    const McEstimate est = mc_return(mdp, pol, eval_episodes, cfg.get_int("mc_horizon"), rng);
    const QTable qe = evaluate_policy_exact(mdp, pol);
    const Eigen::VectorXd v = (pol.probs.array() * qe.values.array()).rowwise().sum();
    out["return_mean"] = est.mean;
    out["return_std"] = est.std_error * std::sqrt(static_cast<double>(est.n_episodes));
    out["n_episodes"] = est.n_episodes;
    out["exact_start_value"] = mdp.initial_dist.dot(v);
    std::cout << "return " << est.mean << " +- " << est.std_error << " (standard error), exact "
              << "start value " << mdp.initial_dist.dot(v) << "\n";
  } else {
    const auto agent = load_continuous_agent(cfg, paths.checkpoint);
    Rng rng(derive_seed(seed, 0x65766363ULL));
    const PolicyFn pi = [&](const Eigen::VectorXd& s, Rng& r) { return agent->act(s, r); };
    const EvalSummary es = rollout_episodes(pi, eval_episodes, rng);
    out["return_mean"] = es.mean;
    out["return_std"] = es.stddev;
    out["n_episodes"] = es.n_episodes;
    std::cout << "return " << es.mean << " +- " << es.stddev << " over " << es.n_episodes
              << " episodes\n";
  }
  write_text_file(paths.dir + "/evaluate.json", out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// analyze-extrapolation.
// ---------------------------------------------------------------------------

inline int cmd_analyze(const Config& cfg) {
  if (!is_tabular_env(cfg.get_text("env")))
    throw std::runtime_error("analyze-extrapolation requires a tabular environment");
  const double discount = cfg.get_real("discount");
  const FiniteMdp mdp =
      make_tabular_env(cfg.get_text("env"), discount, cfg.get_real("gridworld_noise"));
  const Batch batch = load_batch_checked(resolved_batch_path(cfg));
  const EmpiricalMdp emp = empirical_mdp(batch, mdp, cfg.get_real("q_init"));

  const std::string which = cfg.get_text("analysis_policy");
  TabularPolicy policy;
  if (which == "uniform") {
    policy = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
  } else if (which == "optimal") {
    policy = greedy_policy(value_iteration(mdp).q);
  } else if (which == "bcql") {
    TabularTrainConfig tc;
    tc.iterations = cfg.get_int("train_iterations");
    tc.gamma = discount;
    tc.q_init = cfg.get_real("q_init");
    tc.rng_seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    const std::string schedule = cfg.get_text("schedule");
    if (schedule == "constant")
      tc.schedule = LearningSchedule::constant_rate(cfg.get_real("alpha0"));
    else
      tc.schedule = LearningSchedule::polynomial_decay(cfg.get_real("alpha0"),
                                                       cfg.get_real("omega"));
    const TabularTrainResult trained = train_tabular(batch, tc, true);
    const BatchActionSets sets(batch, mdp.n_states, mdp.n_actions);
    policy = extract_bcq_policy(trained.q, sets).to_tabular(0);
  } else {
    throw std::runtime_error("unknown analysis_policy '" + which +
                             "' (expected bcql, uniform or optimal)");
  }

  const EpsilonTable direct = epsilon_direct(mdp, emp, policy);
  const EpsilonBellmanResult rec = epsilon_bellman(mdp, emp, policy);
  const double agreement = (direct.values - rec.eps.values).lpNorm<Eigen::Infinity>();
  const OccupancyVector occ = occupancy(mdp, policy);
  const double aggregate = epsilon_aggregate(direct, policy, occ);
  const Lemma1Result support = check_lemma1(mdp, emp, policy);
  const ConstraintResult constraint = is_batch_constrained(policy, batch, mdp);

  nlohmann::json out;
  out["env_id"] = cfg.get_text("env");
  out["analysis_policy"] = which;
  out["batch_size"] = batch.size();
  out["aggregate_extrapolation_error"] = aggregate;
  out["max_abs_extrapolation_error"] = direct.values.cwiseAbs().maxCoeff();
  out["recursion_agreement"] = agreement;
  out["recursion_converged"] = rec.converged;
  out["recursion_sweeps"] = rec.sweeps;
  out["support_match_holds"] = support.holds;
  out["support_max_divergence"] = support.max_divergence;
  if (support.arg_state >= 0) {
    out["support_arg_state"] = support.arg_state;
    out["support_arg_action"] = support.arg_action;
  }
  out["batch_constrained"] = constraint.constrained;
  if (constraint.witness) {
    out["constraint_witness_state"] = constraint.witness->first;
    out["constraint_witness_action"] = constraint.witness->second;
  }

  const RunPaths paths = run_paths(cfg);
  std::filesystem::create_directories(paths.dir);
  write_text_file(paths.dir + "/analysis.json", out.dump(2) + "\n");

  std::cout << "policy: " << which << " on " << cfg.get_text("env") << " ("
            << batch.size() << " transitions)\n";
  std::cout << "aggregate extrapolation error: " << aggregate << "\n";
  std::cout << "max |error|: " << direct.values.cwiseAbs().maxCoeff()
            << "  (direct vs recursion gap " << agreement << ")\n";
  std::cout << "support match: " << (support.holds ? "holds" : "violated")
            << "  max transition divergence " << support.max_divergence << "\n";
  std::cout << "batch-constrained: " << (constraint.constrained ? "yes" : "no") << "\n";
  std::cout << "wrote " << paths.dir << "/analysis.json\n";
  return 0;
}

// ---------------------------------------------------------------------------
// kbrl-demo.
// ---------------------------------------------------------------------------

inline int cmd_kbrl_demo(const Config& cfg) {
  const TwoStateDemoReport rep = two_state_demo(cfg.get_real("discount"));
  std::cout << "kernel model on the two-state batch (one transition per action):\n";
  std::cout << "  q(s0,a0) = " << rep.kbrl_q_s0_a0 << "   q(s0,a1) = " << rep.kbrl_q_s0_a1
            << "\n";
  std::cout << "  q(s1,a0) = " << rep.kbrl_q_s1_a0 << "   q(s1,a1) = " << rep.kbrl_q_s1_a1
            << "\n";
  std::cout << "  greedy policy [s0, s1]: [a" << rep.kbrl_policy[0] << ", a"
            << rep.kbrl_policy[1] << "]  true return from s0: " << rep.kbrl_return_s0 << "\n";
  std::cout << "constrained learner on the same batch:\n";
  std::cout << "  greedy policy [s0, s1]: [a" << rep.bcql_policy[0] << ", a"
            << rep.bcql_policy[1] << "]  true return from s0: " << rep.bcql_return_s0 << "\n";
  std::cout << "optimal return from s0: " << rep.optimal_return_s0 << "\n";
  std::cout << (rep.kbrl_degenerate ? "the kernel model collapses both states onto one action"
                                    : "unexpected: the kernel model did not collapse")
            << "; the constrained learner "
            << (rep.bcql_recovers_optimal ? "recovers the optimum" : "missed the optimum")
            << "\n";

  nlohmann::json out;
  out["discount"] = rep.discount;
  out["kbrl_q"] = {{"s0_a0", rep.kbrl_q_s0_a0},
                   {"s0_a1", rep.kbrl_q_s0_a1},
                   {"s1_a0", rep.kbrl_q_s1_a0},
                   {"s1_a1", rep.kbrl_q_s1_a1}};
  out["kbrl_policy"] = rep.kbrl_policy;
  out["kbrl_return_s0"] = rep.kbrl_return_s0;
  out["kbrl_degenerate"] = rep.kbrl_degenerate;
  out["bcql_policy"] = rep.bcql_policy;
  out["bcql_return_s0"] = rep.bcql_return_s0;
  out["bcql_recovers_optimal"] = rep.bcql_recovers_optimal;
  out["optimal_return_s0"] = rep.optimal_return_s0;
  const std::string path = cfg.get_text("out_dir") + "/kbrl_demo.json";
  ensure_parent_dir(path);
  write_text_file(path, out.dump(2) + "\n");
  std::cout << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report.
// ---------------------------------------------------------------------------

inline int cmd_report(const Config& cfg) {
  const std::string root = cfg.get_text("out_dir");
  if (!std::filesystem::exists(root))
    throw std::runtime_error("output directory not found: " + root);
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cout << "no metrics found under " << root << "\n";
    return 0;
  }

  nlohmann::json report = nlohmann::json::array();
  std::cout << "final return averages the last five evaluations of each run\n";
  for (const std::string& file : files) {
    const std::vector<MetricsRow> rows = parse_metrics_csv(read_text_file(file));
    if (rows.empty()) continue;
    const size_t tail = std::min<size_t>(5, rows.size());
    double final_return = 0.0;
    for (size_t i = rows.size() - tail; i < rows.size(); ++i)
      final_return += rows[i].eval_return_mean;
    final_return /= tail;
    const std::string run =
        std::filesystem::relative(std::filesystem::path(file).parent_path(), root).string();
    nlohmann::json entry;
    entry["run"] = run;
    entry["metrics_file"] = file;
    entry["evals"] = rows.size();
    entry["final_return"] = final_return;
    entry["last_value_estimate"] = rows.back().value_estimate;
    entry["last_mc_true_value"] = rows.back().mc_true_value;
    report.push_back(entry);
    std::cout << run << ": evals " << rows.size() << ", final return " << final_return
              << ", value " << rows.back().value_estimate << ", mc "
              << rows.back().mc_true_value << "\n";
  }
  const std::string path = root + "/report.json";
  write_text_file(path, report.dump(2) + "\n");
  std::cout << "wrote " << path << "\n";
  return 0;
}

}  // namespace bcqlab
