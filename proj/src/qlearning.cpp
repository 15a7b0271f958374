#include "maclearn/qlearning.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace maclearn {

void QConfig::validate() const {
  env.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("q: alpha must be in [0,1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("q: epsilon must be in [0,1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("q: gamma must be in [0,1]");
  if (n_train_episodes < 1) throw ConfigError("q: n_train_episodes must be >= 1");
}

const std::array<double, kNumActions>* QTable::find(std::int64_t obs_idx) const {
  auto it = entries_.find(obs_idx);
  return it == entries_.end() ? nullptr : &it->second;
}

std::array<double, kNumActions>& QTable::row(std::int64_t obs_idx) {
  return entries_[obs_idx];
}

namespace {
int argmax_row(const std::array<double, kNumActions>& row) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(best)]) best = a;
  }
  return best;
}
}  // namespace

Action QTable::act(const Observation& obs, Rng& rng) const {
  const auto* row = find(observation_index(obs, q_, m_));
  if (row == nullptr) return Action::from_index(static_cast<int>(rng.uniform_int(kNumActions)));
  return Action::from_index(argmax_row(*row));
}

double QTable::max_value(std::int64_t obs_idx) const {
  const auto* row = find(obs_idx);
  if (row == nullptr) return 0.0;
  return (*row)[static_cast<std::size_t>(argmax_row(*row))];
}

std::string QTable::export_text() const {
  std::ostringstream out;
  out << "maclearn-qtable 1 " << q_ << ' ' << m_ << '\n';
  char buf[48];
  for (const auto& [idx, row] : entries_) {
    out << idx;
    for (double v : row) {
      std::snprintf(buf, sizeof(buf), "%a", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
  return out.str();
}

QTable QTable::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0, q = 0, m = 0;
  if (!(in >> magic >> version >> q >> m) || magic != "maclearn-qtable" || version != 1)
    throw IntegrityError("q table: bad header");
  QTable table(q, m);
  std::int64_t idx;
  while (in >> idx) {
    std::array<double, kNumActions> row{};
    for (int a = 0; a < kNumActions; ++a) {
      std::string tok;
      if (!(in >> tok)) throw IntegrityError("q table: truncated row");
      char* end = nullptr;
      row[static_cast<std::size_t>(a)] = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw IntegrityError("q table: bad value '" + tok + "'");
    }
    table.entries_[idx] = row;
  }
  return table;
}

QTable q_train(const QConfig& cfg) {
  cfg.validate();
  const int Q = cfg.env.buffer_capacity;
  const int M = cfg.env.memory_len;
  QTable table(Q, M);
  Rng explore_rng(derive_seed(cfg.seed, 7));

  for (int ep = 0; ep < cfg.n_train_episodes; ++ep) {
    EnvConfig env_cfg = cfg.env;
    env_cfg.rng_seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(ep));
    Environment env(env_cfg);
    std::vector<Observation> obs = env.observations();

    while (!env.done()) {
      const int n = env_cfg.n_ues;
      std::vector<Action> actions(static_cast<std::size_t>(n));
      std::vector<std::int64_t> obs_idx(static_cast<std::size_t>(n), -1);
      for (int i = 0; i < n; ++i) {
        if (!env.ue_state(i).active) continue;
        obs_idx[static_cast<std::size_t>(i)] = observation_index(obs[static_cast<std::size_t>(i)], Q, M);
        if (explore_rng.uniform() < cfg.epsilon) {
          actions[static_cast<std::size_t>(i)] =
              Action::from_index(static_cast<int>(explore_rng.uniform_int(kNumActions)));
        } else {
          const auto* row = table.find(obs_idx[static_cast<std::size_t>(i)]);
          // Unvisited rows read as zeros: greedy picks action 0.
          actions[static_cast<std::size_t>(i)] =
              row == nullptr ? Action{} : Action::from_index(argmax_row(*row));
        }
      }
      const StepResult res = env.step(actions);
      for (int i = 0; i < n; ++i) {
        const std::int64_t oi = obs_idx[static_cast<std::size_t>(i)];
        if (oi < 0) continue;
        const double next_max =
            res.done ? 0.0
                     : table.max_value(observation_index(res.observations[static_cast<std::size_t>(i)], Q, M));
        auto& row = table.row(oi);
        auto& qv = row[static_cast<std::size_t>(actions[static_cast<std::size_t>(i)].index())];
        qv += cfg.alpha * (res.reward + cfg.gamma * next_max - qv);
      }
      obs = res.observations;
    }
  }
  return table;
}

Action q_act(const QTable& table, const Observation& obs, Rng& rng) {
  return table.act(obs, rng);
}

}  // namespace maclearn
