#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "bcqlab/bc.hpp"
#include "bcqlab/bcq.hpp"
#include "bcqlab/ddpg.hpp"
#include "bcqlab/io.hpp"
#include "bcqlab/mdp.hpp"

namespace bcqlab {

// Network checkpoints: JSON with the agent's configuration and every flat
// parameter vector, written with full precision so a load reproduces the
// saved agent bit for bit. Optimizer state is not captured; checkpoints serve
// evaluation and batch generation, not training resumption.

namespace detail {

inline void append_param_vector(std::string& out, const Eigen::VectorXd& v) {
  out += '[';
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_real(v(i));
  }
  out += ']';
}

inline Eigen::VectorXd param_vector(const nlohmann::json& j, const std::string& name) {
  if (!j.contains(name) || !j[name].is_array())
    throw std::runtime_error("checkpoint is missing parameter block '" + name + "'");
  Eigen::VectorXd v(j[name].size());
  for (size_t i = 0; i < j[name].size(); ++i) v(static_cast<int>(i)) = j[name][i].get<double>();
  return v;
}

inline void assign_params(Eigen::VectorXd& dst, const Eigen::VectorXd& src,
                          const std::string& name) {
  if (dst.size() != src.size())
    throw std::runtime_error("checkpoint parameter block '" + name + "' has size " +
                             std::to_string(src.size()) + ", expected " +
                             std::to_string(dst.size()));
  dst = src;
}

inline nlohmann::json parse_checkpoint(const std::string& text, const std::string& want_kind) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint parse error: ") + e.what());
  }
  if (!j.contains("kind") || j["kind"].get<std::string>() != want_kind)
    throw std::runtime_error("checkpoint kind mismatch: expected '" + want_kind + "'");
  return j;
}

}  // namespace detail

inline std::string ddpg_to_json(const DdpgAgent& agent) {
  const DdpgConfig& c = agent.config();
  std::string out = "{\"kind\": \"ddpg\", \"config\": {";
  out += "\"state_dim\": " + std::to_string(c.state_dim);
  out += ", \"action_dim\": " + std::to_string(c.action_dim);
  out += ", \"max_action\": " + format_real(c.max_action);
  out += ", \"h1\": " + std::to_string(c.h1) + ", \"h2\": " + std::to_string(c.h2);
  out += ", \"actor_lr\": " + format_real(c.actor_lr);
  out += ", \"critic_lr\": " + format_real(c.critic_lr);
  out += ", \"critic_l2\": " + format_real(c.critic_l2);
  out += ", \"gamma\": " + format_real(c.gamma);
  out += ", \"tau\": " + format_real(c.tau);
  out += "}, \"actor\": ";
  detail::append_param_vector(out, agent.actor().params());
  out += ", \"critic\": ";
  detail::append_param_vector(out, agent.critic().params());
  out += ", \"actor_target\": ";
  detail::append_param_vector(out, agent.actor_target().params());
  out += ", \"critic_target\": ";
  detail::append_param_vector(out, agent.critic_target().params());
  out += "}\n";
  return out;
}

inline DdpgAgent ddpg_from_json(const std::string& text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "ddpg");
  const auto& jc = j.at("config");
  DdpgConfig c;
  c.state_dim = jc.at("state_dim").get<int>();
  c.action_dim = jc.at("action_dim").get<int>();
  c.max_action = jc.at("max_action").get<double>();
  c.h1 = jc.at("h1").get<int>();
  c.h2 = jc.at("h2").get<int>();
  c.actor_lr = jc.at("actor_lr").get<double>();
  c.critic_lr = jc.at("critic_lr").get<double>();
  c.critic_l2 = jc.at("critic_l2").get<double>();
  c.gamma = jc.at("gamma").get<double>();
  c.tau = jc.at("tau").get<double>();
  DdpgAgent agent(c, 0);
  detail::assign_params(agent.actor().params(), detail::param_vector(j, "actor"), "actor");
  detail::assign_params(agent.critic().params(), detail::param_vector(j, "critic"), "critic");
  detail::assign_params(agent.actor_target_mutable().params(),
                        detail::param_vector(j, "actor_target"), "actor_target");
  detail::assign_params(agent.critic_target_mutable().params(),
                        detail::param_vector(j, "critic_target"), "critic_target");
  return agent;
}

inline std::string bcq_to_json(const BcqAgent& agent) {
  const BcqConfig& c = agent.config();
  std::string out = "{\"kind\": \"bcq\", \"config\": {";
  out += "\"state_dim\": " + std::to_string(c.state_dim);
  out += ", \"action_dim\": " + std::to_string(c.action_dim);
  out += ", \"max_action\": " + format_real(c.max_action);
  out += ", \"h1\": " + std::to_string(c.h1) + ", \"h2\": " + std::to_string(c.h2);
  out += ", \"vae_hidden\": [";
  for (size_t i = 0; i < c.vae_hidden.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(c.vae_hidden[i]);
  }
  out += "], \"latent_dim\": " + std::to_string(c.latent_dim);
  out += ", \"lr\": " + format_real(c.lr);
  out += ", \"gamma\": " + format_real(c.gamma);
  out += ", \"tau\": " + format_real(c.tau);
  out += ", \"lambda\": " + format_real(c.lambda);
  out += ", \"n_candidates\": " + std::to_string(c.n_candidates);
  out += ", \"phi\": " + format_real(c.phi);
  out += ", \"vae_l2\": " + format_real(c.vae_l2);
  out += "}";
  const auto blocks = {
      std::pair<const char*, const Eigen::VectorXd*>{"critic1", &agent.critic1().params()},
      {"critic2", &agent.critic2().params()},
      {"perturbation", &agent.perturbation().params()},
      {"critic1_target", &agent.critic1_target().params()},
      {"critic2_target", &agent.critic2_target().params()},
      {"perturbation_target", &agent.perturbation_target().params()},
      {"encoder", &agent.generator().encoder().params()},
      {"decoder", &agent.generator().decoder().params()},
  };
  for (const auto& [name, params] : blocks) {
    out += ", \"";
    out += name;
    out += "\": ";
    detail::append_param_vector(out, *params);
  }
  out += "}\n";
  return out;
}

inline BcqAgent bcq_from_json(const std::string& text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "bcq");
  const auto& jc = j.at("config");
  BcqConfig c;
  c.state_dim = jc.at("state_dim").get<int>();
  c.action_dim = jc.at("action_dim").get<int>();
  c.max_action = jc.at("max_action").get<double>();
  c.h1 = jc.at("h1").get<int>();
  c.h2 = jc.at("h2").get<int>();
  c.vae_hidden = jc.at("vae_hidden").get<std::vector<int>>();
  c.latent_dim = jc.at("latent_dim").get<int>();
  c.lr = jc.at("lr").get<double>();
  c.gamma = jc.at("gamma").get<double>();
  c.tau = jc.at("tau").get<double>();
  c.lambda = jc.at("lambda").get<double>();
  c.n_candidates = jc.at("n_candidates").get<int>();
  c.phi = jc.at("phi").get<double>();
  c.vae_l2 = jc.at("vae_l2").get<double>();
  BcqAgent agent(c, 0);
  detail::assign_params(agent.critic1().params(), detail::param_vector(j, "critic1"), "critic1");
  detail::assign_params(agent.critic2().params(), detail::param_vector(j, "critic2"), "critic2");
  detail::assign_params(agent.perturbation().params(), detail::param_vector(j, "perturbation"),
                        "perturbation");
  detail::assign_params(agent.critic1_target_mutable().params(),
                        detail::param_vector(j, "critic1_target"), "critic1_target");
  detail::assign_params(agent.critic2_target_mutable().params(),
                        detail::param_vector(j, "critic2_target"), "critic2_target");
  detail::assign_params(agent.perturbation_target_mutable().params(),
                        detail::param_vector(j, "perturbation_target"), "perturbation_target");
  detail::assign_params(agent.generator().encoder().params(), detail::param_vector(j, "encoder"),
                        "encoder");
  detail::assign_params(agent.generator().decoder().params(), detail::param_vector(j, "decoder"),
                        "decoder");
  return agent;
}

inline std::string bc_to_json(const BcAgent& agent) {
  const BcConfig& c = agent.config();
  std::string out = "{\"kind\": \"bc\", \"config\": {";
  out += "\"state_dim\": " + std::to_string(c.state_dim);
  out += ", \"action_dim\": " + std::to_string(c.action_dim);
  out += ", \"max_action\": " + format_real(c.max_action);
  out += ", \"h1\": " + std::to_string(c.h1) + ", \"h2\": " + std::to_string(c.h2);
  out += ", \"lr\": " + format_real(c.lr);
  out += "}, \"actor\": ";
  detail::append_param_vector(out, agent.actor().params());
  out += "}\n";
  return out;
}

inline BcAgent bc_from_json(const std::string& text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "bc");
  const auto& jc = j.at("config");
  BcConfig c;
  c.state_dim = jc.at("state_dim").get<int>();
  c.action_dim = jc.at("action_dim").get<int>();
  c.max_action = jc.at("max_action").get<double>();
  c.h1 = jc.at("h1").get<int>();
  c.h2 = jc.at("h2").get<int>();
  c.lr = jc.at("lr").get<double>();
  BcAgent agent(c, 0);
  detail::assign_params(agent.actor().params(), detail::param_vector(j, "actor"), "actor");
  return agent;
}

inline std::string vae_bc_to_json(const VaeBcAgent& agent) {
  const VaeConfig& c = agent.generator().config();
  std::string out = "{\"kind\": \"vae-bc\", \"config\": {";
  out += "\"state_dim\": " + std::to_string(c.state_dim);
  out += ", \"action_dim\": " + std::to_string(c.action_dim);
  out += ", \"latent_dim\": " + std::to_string(c.latent_dim);
  out += ", \"hidden\": [";
  for (size_t i = 0; i < c.hidden.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(c.hidden[i]);
  }
  out += "], \"max_action\": " + format_real(c.max_action);
  out += ", \"l2\": " + format_real(c.l2);
  out += ", \"lr\": " + format_real(agent.learning_rate());
  out += "}, \"encoder\": ";
  detail::append_param_vector(out, agent.generator().encoder().params());
  out += ", \"decoder\": ";
  detail::append_param_vector(out, agent.generator().decoder().params());
  out += "}\n";
  return out;
}

inline VaeBcAgent vae_bc_from_json(const std::string& text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "vae-bc");
  const auto& jc = j.at("config");
  VaeConfig c;
  c.state_dim = jc.at("state_dim").get<int>();
  c.action_dim = jc.at("action_dim").get<int>();
  c.latent_dim = jc.at("latent_dim").get<int>();
  c.hidden = jc.at("hidden").get<std::vector<int>>();
  c.max_action = jc.at("max_action").get<double>();
  c.l2 = jc.at("l2").get<double>();
  VaeBcAgent agent(c, 0, jc.at("lr").get<double>());
  detail::assign_params(agent.generator().encoder().params(), detail::param_vector(j, "encoder"),
                        "encoder");
  detail::assign_params(agent.generator().decoder().params(), detail::param_vector(j, "decoder"),
                        "decoder");
  return agent;
}

/// Action-value table plus its extracted greedy policy, for tabular agents.
struct TabularCheckpoint {
  std::string agent;  // "bcql" or "tabular-q"
  std::string env_id;
  double discount = 0.99;
  double q_init = 0.0;
  QTable q;
  std::vector<int> policy;
};

inline std::string tabular_to_json(const TabularCheckpoint& ckpt) {
  std::string out = "{\"kind\": \"tabular\", \"agent\": \"" + json_escape(ckpt.agent) + "\"";
  out += ", \"env_id\": \"" + json_escape(ckpt.env_id) + "\"";
  out += ", \"discount\": " + format_real(ckpt.discount);
  out += ", \"q_init\": " + format_real(ckpt.q_init);
  out += ", \"q\": [";
  for (int s = 0; s < ckpt.q.values.rows(); ++s) {
    if (s) out += ',';
    out += '[';
    for (int a = 0; a < ckpt.q.values.cols(); ++a) {
      if (a) out += ',';
      out += format_real(ckpt.q.values(s, a));
    }
    out += ']';
  }
  out += "], \"policy\": [";
  for (size_t s = 0; s < ckpt.policy.size(); ++s) {
    if (s) out += ',';
    out += std::to_string(ckpt.policy[s]);
  }
  out += "]}\n";
  return out;
}

inline TabularCheckpoint tabular_from_json(const std::string& text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "tabular");
  TabularCheckpoint ckpt;
  ckpt.agent = j.at("agent").get<std::string>();
  ckpt.env_id = j.at("env_id").get<std::string>();
  ckpt.discount = j.at("discount").get<double>();
  ckpt.q_init = j.at("q_init").get<double>();
  const auto& q = j.at("q");
  const int S = static_cast<int>(q.size());
  if (S == 0) throw std::runtime_error("checkpoint q table is empty");
  const int A = static_cast<int>(q[0].size());
  ckpt.q.values.resize(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) ckpt.q.values(s, a) = q[s][a].get<double>();
  ckpt.policy = j.at("policy").get<std::vector<int>>();
  return ckpt;
}

}  // namespace bcqlab
