#include "maclearn/run_config.hpp"

#include <filesystem>
#include <fstream>

namespace maclearn {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

void reject_unknown_keys(const json& obj, const std::string& context,
                         const std::vector<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const auto& a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw ConfigError(what + " does not exist: " + path);
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T get_required(const json& obj, const std::string& context, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(context + ": missing required key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

EnvConfig parse_env_config(const json& obj) {
  reject_unknown_keys(obj, "env",
                      {"n_ues", "p_pdus", "buffer_capacity", "tbler", "memory_len", "t_max",
                       "reward_rho", "arrival_rate"});
  EnvConfig cfg;
  cfg.n_ues = get_or(obj, "n_ues", cfg.n_ues);
  cfg.p_pdus = get_or(obj, "p_pdus", cfg.p_pdus);
  cfg.buffer_capacity = get_or(obj, "buffer_capacity", cfg.buffer_capacity);
  cfg.tbler = get_or(obj, "tbler", cfg.tbler);
  cfg.memory_len = get_or(obj, "memory_len", cfg.memory_len);
  cfg.t_max = get_or(obj, "t_max", cfg.t_max);
  cfg.reward_rho = get_or(obj, "reward_rho", cfg.reward_rho);
  if (obj.contains("arrival_rate")) cfg.arrival_rate = obj.at("arrival_rate").get<double>();
  cfg.validate();
  return cfg;
}

AbstractionRunConfig parse_abstraction_run(const json& root) {
  reject_unknown_keys(root, "config",
                      {"seed", "out_dir", "observation", "abstraction", "z_values", "plateau_tol"});
  AbstractionRunConfig run;
  run.seed = get_or<std::uint64_t>(root, "seed", 0);
  run.out_dir = get_or<std::string>(root, "out_dir", "");

  const json obs = root.value("observation", json::object());
  reject_unknown_keys(obs, "observation", {"buffer_capacity", "memory_len"});
  run.abstraction.buffer_capacity = get_or(obs, "buffer_capacity", run.abstraction.buffer_capacity);
  run.abstraction.memory_len = get_or(obs, "memory_len", run.abstraction.memory_len);

  if (!root.contains("abstraction")) throw ConfigError("config: missing 'abstraction' section");
  const json abs = root.at("abstraction");
  reject_unknown_keys(abs, "abstraction",
                      {"z_size", "beta", "lr", "episodes", "encoder_hidden", "decoder_hidden",
                       "experts"});
  run.abstraction.z_size = get_or(abs, "z_size", run.abstraction.z_size);
  run.abstraction.beta = get_or(abs, "beta", run.abstraction.beta);
  run.abstraction.lr = get_or(abs, "lr", run.abstraction.lr);
  run.abstraction.episodes = get_or(abs, "episodes", run.abstraction.episodes);
  run.abstraction.encoder_hidden = get_or(abs, "encoder_hidden", run.abstraction.encoder_hidden);
  run.abstraction.decoder_hidden = get_or(abs, "decoder_hidden", run.abstraction.decoder_hidden);
  run.abstraction.experts = get_required<std::vector<std::string>>(abs, "abstraction", "experts");
  run.abstraction.validate();

  run.z_values = get_or(root, "z_values", std::vector<int>{});
  run.plateau_tol = get_or(root, "plateau_tol", run.plateau_tol);
  return run;
}

PolicyRunConfig parse_policy_run(const json& root) {
  reject_unknown_keys(root, "config", {"seed", "out_dir", "env", "marl"});
  PolicyRunConfig run;
  run.seed = get_or<std::uint64_t>(root, "seed", 0);
  run.out_dir = get_or<std::string>(root, "out_dir", "");
  if (!root.contains("env")) throw ConfigError("config: missing 'env' section");
  run.marl.env = parse_env_config(root.at("env"));

  if (!root.contains("marl")) throw ConfigError("config: missing 'marl' section");
  const json marl = root.at("marl");
  reject_unknown_keys(marl, "marl",
                      {"gamma", "clip", "lr", "episodes", "rollout_episodes", "epochs",
                       "entropy_coef", "value_coef", "actor_hidden", "evaluator_hidden",
                       "checkpoint_interval", "phi_checkpoint"});
  run.marl.gamma = get_or(marl, "gamma", run.marl.gamma);
  run.marl.clip = get_or(marl, "clip", run.marl.clip);
  run.marl.lr = get_or(marl, "lr", run.marl.lr);
  run.marl.n_train_episodes = get_or(marl, "episodes", run.marl.n_train_episodes);
  run.marl.rollout_episodes = get_or(marl, "rollout_episodes", run.marl.rollout_episodes);
  run.marl.epochs_per_update = get_or(marl, "epochs", run.marl.epochs_per_update);
  run.marl.entropy_coef = get_or(marl, "entropy_coef", run.marl.entropy_coef);
  run.marl.value_coef = get_or(marl, "value_coef", run.marl.value_coef);
  run.marl.actor_hidden = get_or(marl, "actor_hidden", run.marl.actor_hidden);
  run.marl.evaluator_hidden = get_or(marl, "evaluator_hidden", run.marl.evaluator_hidden);
  run.marl.checkpoint_interval = get_or(marl, "checkpoint_interval", run.marl.checkpoint_interval);
  run.phi_checkpoint = get_or<std::string>(marl, "phi_checkpoint", "");
  run.marl.seed = run.seed;
  return run;
}

QRunConfig parse_q_run(const json& root) {
  reject_unknown_keys(root, "config", {"seed", "out_dir", "env", "q"});
  QRunConfig run;
  run.seed = get_or<std::uint64_t>(root, "seed", 0);
  run.out_dir = get_or<std::string>(root, "out_dir", "");
  if (!root.contains("env")) throw ConfigError("config: missing 'env' section");
  run.q.env = parse_env_config(root.at("env"));
  const json q = root.value("q", json::object());
  reject_unknown_keys(q, "q", {"alpha", "epsilon", "gamma", "episodes"});
  run.q.alpha = get_or(q, "alpha", run.q.alpha);
  run.q.epsilon = get_or(q, "epsilon", run.q.epsilon);
  run.q.gamma = get_or(q, "gamma", run.q.gamma);
  run.q.n_train_episodes = get_or(q, "episodes", run.q.n_train_episodes);
  run.q.seed = run.seed;
  run.q.validate();
  return run;
}

SweepRunConfig parse_sweep_run(const json& root) {
  reject_unknown_keys(root, "config",
                      {"seed", "out_dir", "axis", "values", "agent_values", "n_seeds", "env",
                       "solutions"});
  SweepRunConfig run;
  run.seed = get_or<std::uint64_t>(root, "seed", 0);
  run.out_dir = get_or<std::string>(root, "out_dir", "");
  run.spec.seed = run.seed;
  run.spec.axis = sweep_axis_from_name(get_required<std::string>(root, "config", "axis"));
  run.spec.n_seeds = get_or(root, "n_seeds", run.spec.n_seeds);
  if (!root.contains("env")) throw ConfigError("config: missing 'env' section");
  run.spec.base_env = parse_env_config(root.at("env"));

  if (run.spec.axis == SweepAxis::AgentsLambda) {
    if (!root.contains("agent_values"))
      throw ConfigError("config: agents axis requires 'agent_values'");
    for (const auto& pt : root.at("agent_values")) {
      reject_unknown_keys(pt, "agent_values entry", {"n_ues", "lambda"});
      AgentsPoint p;
      p.n_ues = get_required<int>(pt, "agent_values entry", "n_ues");
      p.lambda = get_required<double>(pt, "agent_values entry", "lambda");
      run.spec.agent_values.push_back(p);
    }
  } else {
    run.spec.values = get_required<std::vector<double>>(root, "config", "values");
  }

  if (!root.contains("solutions")) throw ConfigError("config: missing 'solutions' section");
  const json sols = root.at("solutions");
  if (!sols.is_object()) throw ConfigError("config: 'solutions' must be an object");
  for (const auto& [name, body] : sols.items()) {
    reject_unknown_keys(body, "solution '" + name + "'", {"actor", "phi", "table"});
    SweepSolutionRef ref;
    ref.name = name;
    ref.actor = get_or<std::string>(body, "actor", "");
    ref.phi = get_or<std::string>(body, "phi", "");
    ref.table = get_or<std::string>(body, "table", "");
    if (!ref.actor.empty()) require_file(ref.actor, "actor checkpoint for '" + name + "'");
    if (!ref.phi.empty()) require_file(ref.phi, "phi checkpoint for '" + name + "'");
    if (!ref.table.empty()) require_file(ref.table, "q table for '" + name + "'");
    run.solutions.push_back(std::move(ref));
  }
  run.spec.validate();
  return run;
}

std::string config_hash(const json& root) {
  return hash_hex(fnv1a(root.dump()));
}

}  // namespace maclearn
