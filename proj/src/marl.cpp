#include "maclearn/marl.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace maclearn {

namespace {

constexpr double kLogClamp = 1e-12;

double safe_log(double x) { return std::log(std::max(x, kLogClamp)); }

Action sample_action(const Eigen::VectorXd& probs, Rng& rng, ActionSelection sel) {
  if (sel == ActionSelection::Greedy) {
    int best = 0;
    for (Eigen::Index i = 1; i < probs.size(); ++i) {
      if (probs(i) > probs(best)) best = static_cast<int>(i);
    }
    return Action::from_index(best);
  }
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return Action::from_index(static_cast<int>(i));
  }
  return Action::from_index(static_cast<int>(probs.size()) - 1);
}

}  // namespace

ObsMode obs_mode_from_name(const std::string& name) {
  if (name == "raw") return ObsMode::Raw;
  if (name == "abstract") return ObsMode::Abstract;
  throw ConfigError("unknown observation mode: " + name);
}

std::string obs_mode_name(ObsMode mode) {
  return mode == ObsMode::Raw ? "raw" : "abstract";
}

void MarlConfig::validate() const {
  env.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("marl: gamma must be in [0,1]");
  if (!(clip > 0.0)) throw ConfigError("marl: clip must be > 0");
  if (!(lr > 0.0)) throw ConfigError("marl: lr must be > 0");
  if (n_train_episodes < 1) throw ConfigError("marl: n_train_episodes must be >= 1");
  if (rollout_episodes < 1) throw ConfigError("marl: rollout_episodes must be >= 1");
  if (epochs_per_update < 1) throw ConfigError("marl: epochs_per_update must be >= 1");
  if (entropy_coef < 0.0 || value_coef < 0.0)
    throw ConfigError("marl: loss coefficients must be >= 0");
}

int SharedActor::input_dim() const {
  return mode == ObsMode::Raw ? onehot_dim(q, m) : z_size;
}

Eigen::VectorXd actor_input(const Observation& obs, ObsMode mode, int Q, int M,
                            const PhiModel* phi) {
  if (mode == ObsMode::Raw) return encode_obs_onehot(obs, Q, M);
  if (phi == nullptr) throw ConfigError("actor_input: abstract mode requires a phi model");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(phi->z_size);
  v(phi->label(obs)) = 1.0;
  return v;
}

RolloutBatch collect_rollouts(const SharedActor& actor, const Mlp& evaluator,
                              const PhiModel* phi, const EnvConfig& env_cfg, int episodes,
                              std::uint64_t seed) {
  if (episodes < 1) throw ContractError("collect_rollouts: episodes must be >= 1");
  if (actor.mode == ObsMode::Abstract && phi == nullptr)
    throw ConfigError("collect_rollouts: abstract mode requires a phi model");

  RolloutBatch batch;
  const int n = env_cfg.n_ues;
  for (int ep = 0; ep < episodes; ++ep) {
    EnvConfig cfg = env_cfg;
    cfg.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(2 * ep));
    Rng action_rng(derive_seed(seed, static_cast<std::uint64_t>(2 * ep + 1)));
    Environment env(cfg);
    std::vector<Observation> obs = env.observations();

    EpisodeStats stats;
    while (!env.done()) {
      std::vector<Action> actions(static_cast<std::size_t>(n));
      std::vector<std::size_t> step_rows;
      for (int i = 0; i < n; ++i) {
        if (!env.ue_state(i).active) continue;  // pre-arrival UEs act as (NoOp, Silent)
        RolloutStep step;
        step.input = actor_input(obs[static_cast<std::size_t>(i)], actor.mode, actor.q, actor.m, phi);
        const Eigen::VectorXd probs = actor.net.forward1(step.input);
        const Action a = sample_action(probs, action_rng, ActionSelection::Sample);
        step.action = a.index();
        step.logp = safe_log(probs(step.action));
        step.value = evaluator.forward1(step.input)(0);
        actions[static_cast<std::size_t>(i)] = a;
        step_rows.push_back(batch.steps.size());
        batch.steps.push_back(std::move(step));
        batch.episode_of_step.push_back(ep);
        batch.agent_of_step.push_back(i);
      }
      const StepResult res = env.step(actions);
      bool any_collision = false, any_bad = false;
      for (const auto& fi : res.info) {
        any_collision = any_collision || fi.collision;
        any_bad = any_bad || fi.bad_delete;
      }
      stats.collision_slots += any_collision ? 1 : 0;
      stats.bad_delete_slots += any_bad ? 1 : 0;
      stats.total_reward += res.reward;
      stats.length += 1;
      for (std::size_t row : step_rows) {
        batch.steps[row].reward = res.reward;
        batch.steps[row].done = res.done;
      }
      obs = res.observations;
    }
    stats.delivered = env.total_delivered();
    batch.episodes.push_back(stats);
  }
  return batch;
}

void compute_returns_and_advantages(RolloutBatch& batch, double gamma) {
  // Steps of one agent within an episode are contiguous in reverse scan order
  // via (episode, agent) keys.
  const auto n = batch.steps.size();
  std::vector<double> running;  // indexed by agent
  int current_episode = -1;
  for (std::size_t idx = n; idx-- > 0;) {
    auto& step = batch.steps[idx];
    const int ep = batch.episode_of_step[idx];
    const int agent = batch.agent_of_step[idx];
    if (ep != current_episode) {
      running.assign(running.size(), 0.0);
      current_episode = ep;
    }
    if (static_cast<std::size_t>(agent) >= running.size()) running.resize(static_cast<std::size_t>(agent) + 1, 0.0);
    if (step.done) running[static_cast<std::size_t>(agent)] = 0.0;
    running[static_cast<std::size_t>(agent)] =
        step.reward + gamma * running[static_cast<std::size_t>(agent)];
    step.ret = running[static_cast<std::size_t>(agent)];
    step.advantage = step.ret - step.value;
  }
  if (n == 0) return;
  double mean = 0.0;
  for (const auto& s : batch.steps) mean += s.advantage;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& s : batch.steps) var += (s.advantage - mean) * (s.advantage - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
  for (auto& s : batch.steps) s.advantage = (s.advantage - mean) * inv_std;
}

PpoStats ppo_update(Mlp& actor, Mlp& evaluator, AdamOptimizer& actor_opt,
                    AdamOptimizer& evaluator_opt, const RolloutBatch& batch,
                    const MarlConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(batch.steps.size());
  if (n == 0) throw ContractError("ppo_update: empty batch");
  const int in_dim = static_cast<int>(batch.steps.front().input.size());
  Eigen::MatrixXd x(n, in_dim);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = batch.steps[static_cast<std::size_t>(i)].input.transpose();

  PpoStats stats;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    // Actor epoch.
    ForwardCache actor_cache;
    const Eigen::MatrixXd probs = actor.forward(x, actor_cache);
    Eigen::MatrixXd dprobs = Eigen::MatrixXd::Zero(n, kNumActions);
    double surrogate = 0.0, entropy_sum = 0.0;
    int clipped_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& step = batch.steps[static_cast<std::size_t>(i)];
      const double p_new = probs(i, step.action);
      const double ratio = std::exp(safe_log(p_new) - step.logp);
      const double a = step.advantage;
      const double unclipped = ratio * a;
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a;
      surrogate += std::min(unclipped, clipped);
      if (unclipped <= clipped) {
        // Gradient flows only through the unclipped branch.
        dprobs(i, step.action) -= inv_n * a * ratio / std::max(p_new, kLogClamp);
      } else {
        clipped_count += 1;
      }
      for (int k = 0; k < kNumActions; ++k) {
        const double p = probs(i, k);
        if (p > 0.0) entropy_sum -= p * std::log(p);
        // d(-entropy_coef * mean entropy)/dp.
        dprobs(i, k) += inv_n * cfg.entropy_coef * (safe_log(p) + 1.0);
      }
    }
    stats.actor_loss = -surrogate * inv_n - cfg.entropy_coef * entropy_sum * inv_n;
    stats.mean_entropy = entropy_sum * inv_n;
    stats.clip_fraction = static_cast<double>(clipped_count) * inv_n;
    if (!std::isfinite(stats.actor_loss)) throw TrainingError("ppo_update: non-finite actor loss");
    const MlpGradients actor_grads = actor.backward(actor_cache, dprobs);
    actor_opt.step(actor, actor_grads);

    // Evaluator epoch.
    ForwardCache value_cache;
    const Eigen::MatrixXd values = evaluator.forward(x, value_cache);
    Eigen::MatrixXd dvalues(n, 1);
    double value_loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double err = values(i, 0) - batch.steps[static_cast<std::size_t>(i)].ret;
      value_loss += err * err;
      dvalues(i, 0) = cfg.value_coef * 2.0 * err * inv_n;
    }
    stats.value_loss = cfg.value_coef * value_loss * inv_n;
    if (!std::isfinite(stats.value_loss)) throw TrainingError("ppo_update: non-finite value loss");
    const MlpGradients value_grads = evaluator.backward(value_cache, dvalues);
    evaluator_opt.step(evaluator, value_grads);
  }
  return stats;
}

TrainResult train_mappo(const MarlConfig& cfg, const PhiModel* phi) {
  cfg.validate();
  if (cfg.obs_mode == ObsMode::Abstract && phi == nullptr)
    throw ConfigError("train_mappo: abstract mode requires a phi model");

  TrainResult result;
  result.actor.mode = cfg.obs_mode;
  result.actor.q = cfg.env.buffer_capacity;
  result.actor.m = cfg.env.memory_len;
  result.actor.z_size = phi != nullptr ? phi->z_size : 0;
  if (cfg.obs_mode == ObsMode::Abstract) {
    if (phi->q != cfg.env.buffer_capacity || phi->m != cfg.env.memory_len)
      throw ConfigError("train_mappo: phi geometry does not match the environment");
  }

  const int in_dim = result.actor.input_dim();
  {
    std::vector<int> dims{in_dim};
    dims.insert(dims.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
    dims.push_back(kNumActions);
    std::vector<Activation> acts(cfg.actor_hidden.size(), Activation::Tanh);
    acts.push_back(Activation::Softmax);
    result.actor.net = Mlp::from_sizes(dims, acts, derive_seed(cfg.seed, 11));
  }
  {
    std::vector<int> dims{in_dim};
    dims.insert(dims.end(), cfg.evaluator_hidden.begin(), cfg.evaluator_hidden.end());
    dims.push_back(1);
    std::vector<Activation> acts(cfg.evaluator_hidden.size(), Activation::Tanh);
    acts.push_back(Activation::Identity);
    result.evaluator = Mlp::from_sizes(dims, acts, derive_seed(cfg.seed, 12));
  }

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamOptimizer actor_opt(result.actor.net, adam_cfg);
  AdamOptimizer evaluator_opt(result.evaluator, adam_cfg);

  int episodes_done = 0;
  int update = 0;
  while (episodes_done < cfg.n_train_episodes) {
    const int g = std::min(cfg.rollout_episodes, cfg.n_train_episodes - episodes_done);
    RolloutBatch batch =
        collect_rollouts(result.actor, result.evaluator, phi, cfg.env,
                         g, derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(update)));
    compute_returns_and_advantages(batch, cfg.gamma);
    ppo_update(result.actor.net, result.evaluator, actor_opt, evaluator_opt, batch, cfg);

    episodes_done += g;
    update += 1;
    UpdateStats row;
    row.update = update;
    row.episodes_done = episodes_done;
    for (const auto& e : batch.episodes) {
      row.mean_reward += e.total_reward;
      row.mean_delivered += e.delivered;
      row.mean_ep_len += e.length;
    }
    const double inv_g = 1.0 / static_cast<double>(batch.episodes.size());
    row.mean_reward *= inv_g;
    row.mean_delivered *= inv_g;
    row.mean_ep_len *= inv_g;
    result.curves.push_back(row);

    if (cfg.checkpoint_interval > 0 && !cfg.checkpoint_dir.empty() &&
        update % cfg.checkpoint_interval == 0) {
      const auto path = std::filesystem::path(cfg.checkpoint_dir) /
                        ("actor_update_" + std::to_string(update) + ".ckpt");
      save_checkpoint(path.string(), actor_to_checkpoint(result.actor));
    }
  }
  return result;
}

EvalMetrics evaluate_policy(const SharedActor& actor, const PhiModel* phi,
                            const EnvConfig& env_cfg, int n_episodes, std::uint64_t seed,
                            ActionSelection selection) {
  if (n_episodes < 1) throw ContractError("evaluate_policy: n_episodes must be >= 1");
  if (actor.mode == ObsMode::Abstract && phi == nullptr)
    throw ConfigError("evaluate_policy: abstract mode requires a phi model");

  EvalMetrics metrics;
  metrics.episodes = n_episodes;
  std::vector<double> delivered;
  delivered.reserve(static_cast<std::size_t>(n_episodes));
  long total_slots = 0, collision_slots = 0, bad_delete_slots = 0;

  for (int ep = 0; ep < n_episodes; ++ep) {
    EnvConfig cfg = env_cfg;
    cfg.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(2 * ep));
    Rng action_rng(derive_seed(seed, static_cast<std::uint64_t>(2 * ep + 1)));
    Environment env(cfg);
    std::vector<Observation> obs = env.observations();
    int ep_len = 0;
    while (!env.done()) {
      std::vector<Action> actions(static_cast<std::size_t>(cfg.n_ues));
      for (int i = 0; i < cfg.n_ues; ++i) {
        if (!env.ue_state(i).active) continue;
        const Eigen::VectorXd input =
            actor_input(obs[static_cast<std::size_t>(i)], actor.mode, actor.q, actor.m, phi);
        const Eigen::VectorXd probs = actor.net.forward1(input);
        actions[static_cast<std::size_t>(i)] = sample_action(probs, action_rng, selection);
      }
      const StepResult res = env.step(actions);
      bool any_collision = false, any_bad = false;
      for (const auto& fi : res.info) {
        any_collision = any_collision || fi.collision;
        any_bad = any_bad || fi.bad_delete;
      }
      collision_slots += any_collision ? 1 : 0;
      bad_delete_slots += any_bad ? 1 : 0;
      ep_len += 1;
      obs = res.observations;
    }
    total_slots += ep_len;
    metrics.mean_ep_len += ep_len;
    delivered.push_back(static_cast<double>(env.total_delivered()));
  }

  metrics.mean_ep_len /= static_cast<double>(n_episodes);
  double mean = 0.0;
  for (double d : delivered) mean += d;
  mean /= static_cast<double>(n_episodes);
  double var = 0.0;
  for (double d : delivered) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n_episodes);
  metrics.mean_delivered = mean;
  metrics.std_delivered = std::sqrt(var);
  metrics.collision_rate = total_slots > 0 ? static_cast<double>(collision_slots) / static_cast<double>(total_slots) : 0.0;
  metrics.bad_delete_rate = total_slots > 0 ? static_cast<double>(bad_delete_slots) / static_cast<double>(total_slots) : 0.0;
  return metrics;
}

Checkpoint actor_to_checkpoint(const SharedActor& actor) {
  Checkpoint ckpt;
  ckpt.kind = "actor";
  ckpt.meta["obs_mode"] = obs_mode_name(actor.mode);
  ckpt.meta["q"] = std::to_string(actor.q);
  ckpt.meta["m"] = std::to_string(actor.m);
  ckpt.meta["z_size"] = std::to_string(actor.z_size);
  ckpt.nets.push_back(actor.net);
  return ckpt;
}

SharedActor actor_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "actor")
    throw IntegrityError("expected an actor checkpoint, got '" + ckpt.kind + "'");
  if (ckpt.nets.size() != 1) throw IntegrityError("actor checkpoint must hold exactly one network");
  SharedActor actor;
  actor.net = ckpt.nets[0];
  actor.mode = obs_mode_from_name(ckpt.meta_at("obs_mode"));
  actor.q = ckpt.meta_int("q");
  actor.m = ckpt.meta_int("m");
  actor.z_size = ckpt.meta_int("z_size");
  if (actor.net.in_dim() != actor.input_dim())
    throw IntegrityError("actor checkpoint: network input does not match metadata");
  return actor;
}

std::string curves_csv(const std::vector<UpdateStats>& curves) {
  std::ostringstream out;
  out << "update,episodes_done,mean_reward,mean_delivered,mean_ep_len\n";
  for (const auto& row : curves) {
    out << row.update << ',' << row.episodes_done << ',' << row.mean_reward << ','
        << row.mean_delivered << ',' << row.mean_ep_len << '\n';
  }
  return out.str();
}

}  // namespace maclearn
