#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maclearn/abstraction.hpp"
#include "maclearn/env.hpp"
#include "maclearn/nn.hpp"

namespace maclearn {

// MAPPO with parameter sharing: one actor executed by every UE and one
// centralized evaluator used only during training, trained with the clipped
// surrogate objective on either the raw one-hot observation or its abstracted
// label.

enum class ObsMode { Raw, Abstract };
enum class ActionSelection { Sample, Greedy };

ObsMode obs_mode_from_name(const std::string& name);
std::string obs_mode_name(ObsMode mode);

struct MarlConfig {
  double gamma = 0.99;
  double clip = 0.2;  // psi
  double lr = 1e-3;
  int n_train_episodes = 20000;   // N_tr
  int rollout_episodes = 10;      // g, episodes per update
  int epochs_per_update = 4;      // Y
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  ObsMode obs_mode = ObsMode::Raw;
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> evaluator_hidden{64, 64};
  EnvConfig env;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // updates between snapshots; 0 disables
  std::string checkpoint_dir;

  void validate() const;
};

struct SharedActor {
  Mlp net;
  ObsMode mode = ObsMode::Raw;
  int q = 0;
  int m = 0;
  int z_size = 0;  // used in Abstract mode

  int input_dim() const;
};

// Raw mode: one-hot observation encoding; Abstract mode: one-hot of phi(obs).
Eigen::VectorXd actor_input(const Observation& obs, ObsMode mode, int Q, int M,
                            const PhiModel* phi);

struct RolloutStep {
  Eigen::VectorXd input;
  int action = 0;
  double logp = 0.0;    // behavior log-probability at collection
  double reward = 0.0;  // shared global reward
  bool done = false;
  double value = 0.0;   // evaluator estimate at collection
  double ret = 0.0;
  double advantage = 0.0;
};

struct EpisodeStats {
  double total_reward = 0.0;
  int length = 0;
  int delivered = 0;
  int collision_slots = 0;   // slots with two or more transmitters
  int bad_delete_slots = 0;  // slots with at least one bad delete
};

struct RolloutBatch {
  std::vector<RolloutStep> steps;  // grouped by episode, slot order, agent order
  std::vector<EpisodeStats> episodes;
  std::vector<int> episode_of_step;
  std::vector<int> agent_of_step;
};

RolloutBatch collect_rollouts(const SharedActor& actor, const Mlp& evaluator,
                              const PhiModel* phi, const EnvConfig& env_cfg, int episodes,
                              std::uint64_t seed);

// Discounted returns within each episode per agent, advantage = return minus
// the collected value estimate, then batch normalization of advantages.
void compute_returns_and_advantages(RolloutBatch& batch, double gamma);

struct PpoStats {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double mean_entropy = 0.0;
  double clip_fraction = 0.0;
};

// Runs all Y epochs over the batch: one full-batch Adam step per epoch for
// actor and evaluator.
PpoStats ppo_update(Mlp& actor, Mlp& evaluator, AdamOptimizer& actor_opt,
                    AdamOptimizer& evaluator_opt, const RolloutBatch& batch,
                    const MarlConfig& cfg);

struct UpdateStats {
  int update = 0;
  int episodes_done = 0;
  double mean_reward = 0.0;
  double mean_delivered = 0.0;
  double mean_ep_len = 0.0;
};

struct TrainResult {
  SharedActor actor;
  Mlp evaluator;
  std::vector<UpdateStats> curves;
};

TrainResult train_mappo(const MarlConfig& cfg, const PhiModel* phi);

struct EvalMetrics {
  double mean_delivered = 0.0;
  double std_delivered = 0.0;
  double mean_ep_len = 0.0;
  double collision_rate = 0.0;   // collision slots / total slots
  double bad_delete_rate = 0.0;  // bad-delete slots / total slots
  int episodes = 0;
};

EvalMetrics evaluate_policy(const SharedActor& actor, const PhiModel* phi,
                            const EnvConfig& env_cfg, int n_episodes, std::uint64_t seed,
                            ActionSelection selection);

Checkpoint actor_to_checkpoint(const SharedActor& actor);
SharedActor actor_from_checkpoint(const Checkpoint& ckpt);

std::string curves_csv(const std::vector<UpdateStats>& curves);

}  // namespace maclearn
