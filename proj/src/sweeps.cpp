#include "maclearn/sweeps.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace maclearn {

EpisodeStats run_episode(const EnvConfig& cfg, std::uint64_t episode_seed,
                         const ActionSelector& select) {
  EnvConfig env_cfg = cfg;
  env_cfg.rng_seed = derive_seed(episode_seed, 21);
  Rng action_rng(derive_seed(episode_seed, 22));
  Environment env(env_cfg);
  std::vector<Observation> obs = env.observations();

  EpisodeStats stats;
  while (!env.done()) {
    std::vector<Action> actions(static_cast<std::size_t>(env_cfg.n_ues));
    for (int i = 0; i < env_cfg.n_ues; ++i) {
      if (!env.ue_state(i).active) continue;
      actions[static_cast<std::size_t>(i)] = select(i, obs[static_cast<std::size_t>(i)], action_rng);
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
    obs = res.observations;
  }
  stats.delivered = env.total_delivered();
  return stats;
}

Solution solution_from_policy(const std::string& name, PolicyFn policy, bool sample) {
  return Solution{name, [policy = std::move(policy), sample](int, const Observation& obs, Rng& rng) {
                    const PolicyDistribution d = policy(obs);
                    return sample ? d.sample(rng) : Action::from_index(d.argmax());
                  }};
}

Solution solution_from_actor(const std::string& name, SharedActor actor,
                             std::optional<PhiModel> phi, ActionSelection selection) {
  if (actor.mode == ObsMode::Abstract && !phi)
    throw ConfigError("solution '" + name + "': abstract actor requires a phi model");
  auto shared_phi = phi ? std::make_shared<PhiModel>(std::move(*phi)) : nullptr;
  auto shared_actor = std::make_shared<SharedActor>(std::move(actor));
  return Solution{name, [shared_actor, shared_phi, selection](int, const Observation& obs, Rng& rng) {
                    const Eigen::VectorXd input = actor_input(
                        obs, shared_actor->mode, shared_actor->q, shared_actor->m, shared_phi.get());
                    const Eigen::VectorXd probs = shared_actor->net.forward1(input);
                    if (selection == ActionSelection::Greedy) {
                      int best = 0;
                      for (Eigen::Index k = 1; k < probs.size(); ++k) {
                        if (probs(k) > probs(best)) best = static_cast<int>(k);
                      }
                      return Action::from_index(best);
                    }
                    PolicyDistribution d;
                    for (int k = 0; k < kNumActions; ++k) d.probs[static_cast<std::size_t>(k)] = probs(k);
                    return d.sample(rng);
                  }};
}

Solution solution_from_qtable(const std::string& name, QTable table) {
  auto shared = std::make_shared<QTable>(std::move(table));
  return Solution{name, [shared](int, const Observation& obs, Rng& rng) {
                    return shared->act(obs, rng);
                  }};
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "p") return SweepAxis::P;
  if (name == "tbler") return SweepAxis::Tbler;
  if (name == "agents") return SweepAxis::AgentsLambda;
  throw ConfigError("unknown sweep axis: " + name);
}

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::P: return "p";
    case SweepAxis::Tbler: return "tbler";
    case SweepAxis::AgentsLambda: return "agents";
  }
  throw ContractError("invalid sweep axis");
}

void SweepSpec::validate() const {
  base_env.validate();
  if (n_seeds < 1) throw ConfigError("sweep: n_seeds must be >= 1");
  if (axis == SweepAxis::AgentsLambda) {
    if (agent_values.empty()) throw ConfigError("sweep: agents axis needs (n, lambda) points");
  } else if (values.empty()) {
    throw ConfigError("sweep: axis values must be non-empty");
  }
}

std::size_t SweepSpec::num_points() const {
  return axis == SweepAxis::AgentsLambda ? agent_values.size() : values.size();
}

EnvConfig SweepSpec::env_at(std::size_t point) const {
  EnvConfig cfg = base_env;
  switch (axis) {
    case SweepAxis::P:
      cfg.p_pdus = static_cast<int>(values[point]);
      break;
    case SweepAxis::Tbler:
      cfg.tbler = values[point];
      break;
    case SweepAxis::AgentsLambda:
      cfg.n_ues = agent_values[point].n_ues;
      cfg.arrival_rate = agent_values[point].lambda;
      break;
  }
  return cfg;
}

std::string SweepSpec::value_label(std::size_t point) const {
  std::ostringstream out;
  switch (axis) {
    case SweepAxis::P:
      out << static_cast<int>(values[point]);
      break;
    case SweepAxis::Tbler:
      out << values[point];
      break;
    case SweepAxis::AgentsLambda:
      out << agent_values[point].n_ues << 'x' << agent_values[point].lambda;
      break;
  }
  return out.str();
}

void aggregate(SweepCell& cell) {
  const auto n = cell.raw.size();
  if (n == 0) throw ContractError("aggregate: no seed results");
  double mean = 0.0, mean_len = 0.0;
  long slots = 0, collisions = 0, bad = 0;
  for (const auto& e : cell.raw) {
    mean += e.delivered;
    mean_len += e.length;
    slots += e.length;
    collisions += e.collision_slots;
    bad += e.bad_delete_slots;
  }
  mean /= static_cast<double>(n);
  mean_len /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& e : cell.raw) var += (e.delivered - mean) * (e.delivered - mean);
  var /= static_cast<double>(n);
  cell.mean_delivered = mean;
  cell.std_delivered = std::sqrt(var);
  cell.mean_ep_len = mean_len;
  cell.collision_rate = slots > 0 ? static_cast<double>(collisions) / static_cast<double>(slots) : 0.0;
  cell.bad_delete_rate = slots > 0 ? static_cast<double>(bad) / static_cast<double>(slots) : 0.0;
}

SweepResult run_sweep(const SweepSpec& spec, const std::vector<Solution>& solutions) {
  spec.validate();
  SweepResult result;
  result.axis = sweep_axis_name(spec.axis);
  for (const auto& sol : solutions) {
    const std::uint64_t sol_seed = derive_seed(spec.seed, fnv1a(sol.name));
    for (std::size_t pt = 0; pt < spec.num_points(); ++pt) {
      SweepCell cell;
      cell.solution = sol.name;
      cell.value = spec.value_label(pt);
      const EnvConfig cfg = spec.env_at(pt);
      for (int rep = 0; rep < spec.n_seeds; ++rep) {
        cell.raw.push_back(
            run_episode(cfg, derive_seed(sol_seed, static_cast<std::uint64_t>(rep)), sol.select));
      }
      aggregate(cell);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

std::string sweep_raw_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "solution,axis,value,seed,delivered,ep_len,collision_slots,bad_delete_slots\n";
  for (const auto& cell : result.cells) {
    for (std::size_t rep = 0; rep < cell.raw.size(); ++rep) {
      const auto& e = cell.raw[rep];
      out << cell.solution << ',' << result.axis << ',' << cell.value << ',' << rep << ','
          << e.delivered << ',' << e.length << ',' << e.collision_slots << ','
          << e.bad_delete_slots << '\n';
    }
  }
  return out.str();
}

std::string sweep_aggregate_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "solution,axis,value,mean_delivered,std_delivered,mean_ep_len,collision_rate,"
         "bad_delete_rate,n_seeds\n";
  for (const auto& cell : result.cells) {
    out << cell.solution << ',' << result.axis << ',' << cell.value << ',' << cell.mean_delivered
        << ',' << cell.std_delivered << ',' << cell.mean_ep_len << ',' << cell.collision_rate
        << ',' << cell.bad_delete_rate << ',' << cell.raw.size() << '\n';
  }
  return out.str();
}

}  // namespace maclearn
