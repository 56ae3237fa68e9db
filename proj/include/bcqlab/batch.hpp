#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bcqlab/io.hpp"
#include "bcqlab/mdp.hpp"
#include "bcqlab/rng.hpp"
#include "json.hpp"

namespace bcqlab {

// A batch is an immutable log of transitions gathered once and trained on
// offline. `terminal` marks environment-true episode ends (the successor is a
// terminal state and must not be bootstrapped through); `truncated` marks
// horizon cuts, which end the episode in the log but are not terminal.

struct DiscreteTransition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  bool terminal = false;
  bool truncated = false;
};

struct ContinuousTransition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool terminal = false;
  bool truncated = false;
};

struct BatchMeta {
  std::string env_id;
  int state_dim = 0;   // number of states for discrete batches
  int action_dim = 0;  // number of actions for discrete batches
  std::string policy_tag;
  std::uint64_t seed = 0;
};

struct Batch {
  BatchMeta meta;
  bool discrete = true;
  std::vector<DiscreteTransition> d;
  std::vector<ContinuousTransition> c;

  long size() const { return discrete ? static_cast<long>(d.size()) : static_cast<long>(c.size()); }
  bool empty() const { return size() == 0; }

  void validate() const {
    if (meta.state_dim <= 0 || meta.action_dim <= 0)
      throw std::invalid_argument("batch meta dimensions must be positive");
    if (discrete) {
      if (!c.empty()) throw std::invalid_argument("discrete batch holds continuous rows");
      for (size_t i = 0; i < d.size(); ++i) {
        const auto& t = d[i];
        if (t.s < 0 || t.s >= meta.state_dim || t.s_next < 0 || t.s_next >= meta.state_dim ||
            t.a < 0 || t.a >= meta.action_dim)
          throw std::invalid_argument("transition " + std::to_string(i) + " is out of range");
        if (t.terminal && t.truncated)
          throw std::invalid_argument("transition " + std::to_string(i) +
                                      " is both terminal and truncated");
      }
    } else {
      if (!d.empty()) throw std::invalid_argument("continuous batch holds discrete rows");
      for (size_t i = 0; i < c.size(); ++i) {
        const auto& t = c[i];
        if (t.s.size() != meta.state_dim || t.s_next.size() != meta.state_dim ||
            t.a.size() != meta.action_dim)
          throw std::invalid_argument("transition " + std::to_string(i) + " has a bad shape");
        if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() ||
            !std::isfinite(t.r))
          throw std::invalid_argument("transition " + std::to_string(i) + " is non-finite");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Collection.
// ---------------------------------------------------------------------------

/// Rolls a behavior policy on a tabular MDP for exactly n_steps transitions.
/// Episodes restart from the initial distribution on terminal entry or after
/// `horizon` steps (logged as truncated, not terminal); the last episode may
/// be cut mid-flight by the step budget. With probability random_action_prob
/// the logged action is uniform instead of the policy's draw.
inline Batch collect_batch(const FiniteMdp& mdp, const TabularPolicy& behavior, long n_steps,
                           std::uint64_t seed, long horizon = 10000,
                           double random_action_prob = 0.0, const std::string& policy_tag = "",
                           const std::string& env_id = "") {
  if (n_steps <= 0) throw std::invalid_argument("n_steps must be positive");
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  if (random_action_prob < 0.0 || random_action_prob > 1.0)
    throw std::invalid_argument("random_action_prob must lie in [0, 1]");
  detail::check_policy_shape(mdp, behavior);
  Rng rng(derive_seed(seed, 0x636f6cULL));
  Batch batch;
  batch.meta = BatchMeta{env_id, mdp.n_states, mdp.n_actions, policy_tag, seed};
  batch.discrete = true;
  batch.d.reserve(n_steps);
  int s = rng.categorical(mdp.initial_dist);
  long t_in_episode = 0;
  while (static_cast<long>(batch.d.size()) < n_steps) {
    if (mdp.is_terminal(s) || t_in_episode >= horizon) {
      s = rng.categorical(mdp.initial_dist);
      t_in_episode = 0;
      continue;
    }
    const int a = (random_action_prob > 0.0 && rng.uniform() < random_action_prob)
                      ? rng.uniform_int(mdp.n_actions)
                      : rng.categorical(behavior.probs.row(s));
    const int s2 = rng.categorical(mdp.transition[a].row(s));
    ++t_in_episode;
    DiscreteTransition tr;
    tr.s = s;
    tr.a = a;
    tr.r = mdp.reward[a](s, s2);
    tr.s_next = s2;
    tr.terminal = mdp.is_terminal(s2);
    tr.truncated = !tr.terminal && t_in_episode >= horizon;
    batch.d.push_back(tr);
    s = s2;
  }
  batch.validate();
  return batch;
}

/// Collects whole episodes (each run to termination or max_steps), so the log
/// never ends mid-trajectory.
inline Batch collect_episodes(const FiniteMdp& mdp, const TabularPolicy& behavior,
                              long n_episodes, std::uint64_t seed, long max_steps = 10000,
                              double random_action_prob = 0.0,
                              const std::string& policy_tag = "", const std::string& env_id = "") {
  if (n_episodes <= 0) throw std::invalid_argument("n_episodes must be positive");
  if (max_steps <= 0) throw std::invalid_argument("max_steps must be positive");
  detail::check_policy_shape(mdp, behavior);
  Rng rng(derive_seed(seed, 0x636f6cULL));
  Batch batch;
  batch.meta = BatchMeta{env_id, mdp.n_states, mdp.n_actions, policy_tag, seed};
  batch.discrete = true;
  for (long e = 0; e < n_episodes; ++e) {
    int s = rng.categorical(mdp.initial_dist);
    for (long t = 0; t < max_steps && !mdp.is_terminal(s); ++t) {
      const int a = (random_action_prob > 0.0 && rng.uniform() < random_action_prob)
                        ? rng.uniform_int(mdp.n_actions)
                        : rng.categorical(behavior.probs.row(s));
      const int s2 = rng.categorical(mdp.transition[a].row(s));
      DiscreteTransition tr;
      tr.s = s;
      tr.a = a;
      tr.r = mdp.reward[a](s, s2);
      tr.s_next = s2;
      tr.terminal = mdp.is_terminal(s2);
      tr.truncated = !tr.terminal && t + 1 >= max_steps;
      batch.d.push_back(tr);
      s = s2;
    }
  }
  batch.validate();
  return batch;
}

/// Rolls an actor on a continuous-control environment for exactly n_steps.
/// The logged action is the actor's output plus Gaussian exploration noise
/// (std noise_sigma), clipped to the action bounds; with probability
/// random_action_prob it is replaced by a uniform action. Episode ends
/// (terminal or truncation) trigger a reset.
template <class Env, class Actor>
Batch collect_continuous(Env& env, Actor&& actor, long n_steps, std::uint64_t seed,
                         double noise_sigma = 0.0, double random_action_prob = 0.0,
                         const std::string& policy_tag = "", const std::string& env_id = "") {
  if (n_steps <= 0) throw std::invalid_argument("n_steps must be positive");
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
  if (random_action_prob < 0.0 || random_action_prob > 1.0)
    throw std::invalid_argument("random_action_prob must lie in [0, 1]");
  Rng rng(derive_seed(seed, 0x636f6cULL));
  const double bound = env.max_action();
  Batch batch;
  batch.meta = BatchMeta{env_id, env.obs_dim(), env.action_dim(), policy_tag, seed};
  batch.discrete = false;
  batch.c.reserve(n_steps);
  Eigen::VectorXd obs = env.reset(rng);
  while (static_cast<long>(batch.c.size()) < n_steps) {
    Eigen::VectorXd a;
    if (random_action_prob > 0.0 && rng.uniform() < random_action_prob) {
      a.resize(env.action_dim());
      for (int i = 0; i < a.size(); ++i) a(i) = rng.uniform(-bound, bound);
    } else {
      a = actor(obs, rng);
      for (int i = 0; i < a.size(); ++i) {
        if (noise_sigma > 0.0) a(i) += rng.normal(0.0, noise_sigma);
        a(i) = std::clamp(a(i), -bound, bound);
      }
    }
    const auto step = env.step(a);
    ContinuousTransition tr;
    tr.s = obs;
    tr.a = a;
    tr.r = step.reward;
    tr.s_next = step.obs;
    tr.terminal = step.terminated;
    tr.truncated = step.truncated && !step.terminated;
    batch.c.push_back(tr);
    obs = (step.terminated || step.truncated) ? env.reset(rng) : step.obs;
  }
  batch.validate();
  return batch;
}

/// Undiscounted per-episode reward sums; episodes end at terminal or
/// truncated rows, and an unfinished tail episode is dropped.
inline std::vector<double> episode_returns(const Batch& batch) {
  std::vector<double> out;
  double acc = 0.0;
  bool open = false;
  auto flush = [&](bool done) {
    if (done) {
      out.push_back(acc);
      acc = 0.0;
      open = false;
    }
  };
  if (batch.discrete) {
    for (const auto& t : batch.d) {
      acc += t.r;
      open = true;
      flush(t.terminal || t.truncated);
    }
  } else {
    for (const auto& t : batch.c) {
      acc += t.r;
      open = true;
      flush(t.terminal || t.truncated);
    }
  }
  (void)open;
  return out;
}

// ---------------------------------------------------------------------------
// Structural checks on discrete batches.
// ---------------------------------------------------------------------------

namespace detail {

inline void require_discrete(const Batch& batch, const char* who) {
  if (!batch.discrete)
    throw std::invalid_argument(std::string(who) + " requires a discrete batch");
}

}  // namespace detail

struct CoherencyResult {
  bool coherent = true;
  // First transition whose non-terminal successor never occurs as a source.
  std::optional<DiscreteTransition> witness;
};

/// A batch is coherent when every non-terminal successor it contains also
/// occurs as a source state, i.e. trajectories do not dangle.
inline CoherencyResult is_coherent(const Batch& batch) {
  detail::require_discrete(batch, "is_coherent");
  std::vector<std::uint8_t> is_source(batch.meta.state_dim, 0);
  for (const auto& t : batch.d) is_source[t.s] = 1;
  for (const auto& t : batch.d) {
    if (!t.terminal && !is_source[t.s_next]) return CoherencyResult{false, t};
  }
  return CoherencyResult{true, std::nullopt};
}

struct ConstraintResult {
  bool constrained = true;
  // First (state, action) the policy can reach and choose that the batch lacks.
  std::optional<std::pair<int, int>> witness;
};

/// Checks whether a policy is batch-constrained: every action it takes with
/// positive probability, at every non-terminal state it reaches from the
/// initial distribution, must appear as a (state, action) pair in the batch.
/// Terminal states are excluded since no action is ever taken there.
inline ConstraintResult is_batch_constrained(const TabularPolicy& policy, const Batch& batch,
                                             const FiniteMdp& mdp) {
  detail::require_discrete(batch, "is_batch_constrained");
  detail::check_policy_shape(mdp, policy);
  if (batch.meta.state_dim != mdp.n_states || batch.meta.action_dim != mdp.n_actions)
    throw std::invalid_argument("batch dimensions do not match mdp");
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(mdp.n_states, mdp.n_actions);
  for (const auto& t : batch.d) seen(t.s, t.a) = 1;
  const auto reach = reachable_states(mdp, policy);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!reach[s] || mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a)
      if (policy.probs(s, a) > 0.0 && !seen(s, a))
        return ConstraintResult{false, std::make_pair(s, a)};
  }
  return ConstraintResult{true, std::nullopt};
}

// ---------------------------------------------------------------------------
// Empirical MDP induced by a batch.
// ---------------------------------------------------------------------------

/// Count-based model of the batch. Seen pairs transition with frequency
/// estimates p(s2|s,a) = N(s,a,s2) / N(s,a) and pay the base MDP's rewards;
/// unseen pairs route to an extra absorbing terminal state `init_state()`
/// (index n_states) and pay q_init(s, a) on the way in. Rows at base-terminal
/// states are normalized to the canonical zero-reward self-loop, which leaves
/// every value unchanged since terminal states are masked to zero anyway.
struct EmpiricalMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> counts;  // [a](s, s2) observation counts
  Eigen::MatrixXd pair_counts;          // (s, a) totals
  Eigen::MatrixXd q_init;               // reward for unseen pairs
  FiniteMdp base;                       // rewards, discount, terminals, start

  int init_state() const { return n_states; }
  bool seen(int s, int a) const { return pair_counts(s, a) > 0.0; }

  /// Transition probability in the empirical model; s2 may be init_state().
  double prob(int s, int a, int s2) const {
    if (base.is_terminal(s)) return s2 == s ? 1.0 : 0.0;
    if (!seen(s, a)) return s2 == init_state() ? 1.0 : 0.0;
    if (s2 == init_state()) return 0.0;
    return counts[a](s, s2) / pair_counts(s, a);
  }

  /// Expands the empirical model into a standalone MDP on n_states + 1
  /// states, with the extra state terminal and absorbing.
  FiniteMdp to_finite_mdp() const {
    const int n = n_states + 1;
    FiniteMdp m = FiniteMdp::zeros(n, n_actions, base.discount);
    for (int a = 0; a < n_actions; ++a) {
      for (int s = 0; s < n_states; ++s) {
        if (base.is_terminal(s)) {
          m.transition[a](s, s) = 1.0;
          continue;
        }
        if (!seen(s, a)) {
          m.transition[a](s, init_state()) = 1.0;
          m.reward[a](s, init_state()) = q_init(s, a);
          continue;
        }
        for (int s2 = 0; s2 < n_states; ++s2) {
          if (counts[a](s, s2) <= 0.0) continue;
          m.transition[a](s, s2) = counts[a](s, s2) / pair_counts(s, a);
          m.reward[a](s, s2) = base.reward[a](s, s2);
        }
      }
      m.transition[a](init_state(), init_state()) = 1.0;
    }
    for (int s = 0; s < n_states; ++s) m.terminal[s] = base.terminal[s];
    m.terminal[init_state()] = 1;
    m.initial_dist.head(n_states) = base.initial_dist;
    m.validate();
    return m;
  }
};

inline EmpiricalMdp empirical_mdp(const Batch& batch, const FiniteMdp& base,
                                  const Eigen::MatrixXd& q_init) {
  detail::require_discrete(batch, "empirical_mdp");
  if (batch.meta.state_dim != base.n_states || batch.meta.action_dim != base.n_actions)
    throw std::invalid_argument("batch dimensions do not match mdp");
  if (q_init.rows() != base.n_states || q_init.cols() != base.n_actions)
    throw std::invalid_argument("q_init table shape mismatch");
  EmpiricalMdp emp;
  emp.n_states = base.n_states;
  emp.n_actions = base.n_actions;
  emp.counts.assign(base.n_actions, Eigen::MatrixXd::Zero(base.n_states, base.n_states));
  emp.pair_counts = Eigen::MatrixXd::Zero(base.n_states, base.n_actions);
  emp.q_init = q_init;
  emp.base = base;
  for (const auto& t : batch.d) {
    emp.counts[t.a](t.s, t.s_next) += 1.0;
    emp.pair_counts(t.s, t.a) += 1.0;
  }
  return emp;
}

inline EmpiricalMdp empirical_mdp(const Batch& batch, const FiniteMdp& base,
                                  double q_init = 0.0) {
  return empirical_mdp(batch, base,
                       Eigen::MatrixXd::Constant(base.n_states, base.n_actions, q_init));
}

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line; the first line is the header.
// ---------------------------------------------------------------------------

inline std::string to_jsonl_text(const Batch& batch) {
  batch.validate();
  std::string out;
  out.reserve(static_cast<size_t>(batch.size()) * 64 + 256);
  out += "{\"kind\": \"";
  out += batch.discrete ? "discrete" : "continuous";
  out += "\", \"env_id\": \"" + json_escape(batch.meta.env_id) + "\"";
  out += ", \"state_dim\": " + std::to_string(batch.meta.state_dim);
  out += ", \"action_dim\": " + std::to_string(batch.meta.action_dim);
  out += ", \"policy_tag\": \"" + json_escape(batch.meta.policy_tag) + "\"";
  out += ", \"seed\": " + std::to_string(batch.meta.seed);
  out += ", \"count\": " + std::to_string(batch.size()) + "}\n";
  auto flags = [](const auto& t) {
    return std::string(", \"terminal\": ") + (t.terminal ? "true" : "false") +
           ", \"truncated\": " + (t.truncated ? "true" : "false") + "}\n";
  };
  if (batch.discrete) {
    for (const auto& t : batch.d) {
      out += "{\"s\": " + std::to_string(t.s) + ", \"a\": " + std::to_string(t.a) +
             ", \"r\": " + format_real(t.r) + ", \"s_next\": " + std::to_string(t.s_next) +
             flags(t);
    }
  } else {
    auto vec = [](const Eigen::VectorXd& v) {
      std::string s = "[";
      for (int i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += format_real(v(i));
      }
      return s + "]";
    };
    for (const auto& t : batch.c) {
      out += "{\"s\": " + vec(t.s) + ", \"a\": " + vec(t.a) + ", \"r\": " + format_real(t.r) +
             ", \"s_next\": " + vec(t.s_next) + flags(t);
    }
  }
  return out;
}

inline Batch batch_from_jsonl_text(const std::string& text) {
  Batch batch;
  size_t pos = 0;
  long line_no = 0;
  bool have_header = false;
  long expected = 0;
  auto fail = [&](size_t line_start, const std::string& msg) -> std::runtime_error {
    return std::runtime_error("batch parse error at line " + std::to_string(line_no) +
                              ", byte " + std::to_string(line_start) + ": " + msg);
  };
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const size_t line_start = pos;
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(line_start + (e.byte > 0 ? e.byte - 1 : 0), e.what());
    }
    try {
      if (!have_header) {
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind != "discrete" && kind != "continuous") throw std::runtime_error("bad kind");
        batch.discrete = kind == "discrete";
        batch.meta.env_id = doc.at("env_id").get<std::string>();
        batch.meta.state_dim = doc.at("state_dim").get<int>();
        batch.meta.action_dim = doc.at("action_dim").get<int>();
        batch.meta.policy_tag = doc.at("policy_tag").get<std::string>();
        batch.meta.seed = doc.at("seed").get<std::uint64_t>();
        expected = doc.at("count").get<long>();
        have_header = true;
        continue;
      }
      if (batch.discrete) {
        DiscreteTransition t;
        t.s = doc.at("s").get<int>();
        t.a = doc.at("a").get<int>();
        t.r = doc.at("r").get<double>();
        t.s_next = doc.at("s_next").get<int>();
        t.terminal = doc.at("terminal").get<bool>();
        t.truncated = doc.at("truncated").get<bool>();
        batch.d.push_back(t);
      } else {
        ContinuousTransition t;
        auto vec = [&](const char* key) {
          const auto& node = doc.at(key);
          Eigen::VectorXd v(node.size());
          for (size_t i = 0; i < node.size(); ++i) v(i) = node[i].get<double>();
          return v;
        };
        t.s = vec("s");
        t.a = vec("a");
        t.r = doc.at("r").get<double>();
        t.s_next = vec("s_next");
        t.terminal = doc.at("terminal").get<bool>();
        t.truncated = doc.at("truncated").get<bool>();
        batch.c.push_back(t);
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(line_start, e.what());
    }
  }
  if (!have_header) throw std::runtime_error("batch parse error: missing header line");
  if (batch.size() != expected)
    throw std::runtime_error("batch parse error: header count " + std::to_string(expected) +
                             " does not match " + std::to_string(batch.size()) + " rows");
  batch.validate();
  return batch;
}

inline void save_batch(const Batch& batch, const std::string& path) {
  write_text_file(path, to_jsonl_text(batch));
}

inline Batch load_batch(const std::string& path) {
  return batch_from_jsonl_text(read_text_file(path));
}

}  // namespace bcqlab
