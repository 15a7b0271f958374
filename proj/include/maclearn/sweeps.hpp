#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maclearn/marl.hpp"
#include "maclearn/policies.hpp"
#include "maclearn/qlearning.hpp"

namespace maclearn {

// Generalization studies: evaluate a set of solutions while sweeping the
// packet count P, the channel TBLER, or the (N, lambda) arrival grid, with
// seed-repeated episodes and CSV outputs.

using ActionSelector = std::function<Action(int ue, const Observation& obs, Rng& rng)>;

// One full episode under a selector; env and action streams derive from the
// episode seed.
EpisodeStats run_episode(const EnvConfig& cfg, std::uint64_t episode_seed,
                         const ActionSelector& select);

// A named, ready-to-run solution (learned actor, Q table, expert, or random).
struct Solution {
  std::string name;
  ActionSelector select;
};

Solution solution_from_policy(const std::string& name, PolicyFn policy, bool sample);
Solution solution_from_actor(const std::string& name, SharedActor actor,
                             std::optional<PhiModel> phi, ActionSelection selection);
Solution solution_from_qtable(const std::string& name, QTable table);

enum class SweepAxis { P, Tbler, AgentsLambda };

SweepAxis sweep_axis_from_name(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct AgentsPoint {
  int n_ues = 2;
  double lambda = 1.0;
};

struct SweepSpec {
  SweepAxis axis = SweepAxis::P;
  std::vector<double> values;            // P or TBLER points
  std::vector<AgentsPoint> agent_values; // (N, lambda) points
  int n_seeds = 20;
  EnvConfig base_env;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t num_points() const;
  EnvConfig env_at(std::size_t point) const;
  std::string value_label(std::size_t point) const;
};

struct SweepCell {
  std::string solution;
  std::string value;
  std::vector<EpisodeStats> raw;  // one entry per seed
  double mean_delivered = 0.0;
  double std_delivered = 0.0;
  double mean_ep_len = 0.0;
  double collision_rate = 0.0;
  double bad_delete_rate = 0.0;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepCell> cells;
};

// Mean/std aggregation of per-seed episode stats; permutation-invariant.
void aggregate(SweepCell& cell);

// Episode seeds derive from (sweep seed, solution name, repetition) only, so
// identical configurations evaluated in different sweeps give identical
// results.
SweepResult run_sweep(const SweepSpec& spec, const std::vector<Solution>& solutions);

std::string sweep_raw_csv(const SweepResult& result);
std::string sweep_aggregate_csv(const SweepResult& result);

}  // namespace maclearn
