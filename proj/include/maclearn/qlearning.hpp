#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "maclearn/env.hpp"
#include "maclearn/rng.hpp"

namespace maclearn {

// Tabular Q-learning benchmark over raw observation indices. A single table
// is shared by all agents and updated from every agent's transitions with the
// shared global reward. At evaluation, an observation never seen during
// training falls back to a uniformly random action.

struct QConfig {
  double alpha = 0.1;
  double epsilon = 0.1;
  double gamma = 0.99;
  int n_train_episodes = 20000;
  EnvConfig env;
  std::uint64_t seed = 0;

  void validate() const;
};

class QTable {
 public:
  QTable() = default;
  QTable(int q, int m) : q_(q), m_(m) {}

  int buffer_capacity() const { return q_; }
  int memory_len() const { return m_; }
  std::size_t size() const { return entries_.size(); }

  const std::array<double, kNumActions>* find(std::int64_t obs_idx) const;
  std::array<double, kNumActions>& row(std::int64_t obs_idx);  // inserts zeros if absent

  // Greedy argmax over the stored row (ties toward the lowest action index);
  // uniform random action if the observation was never visited.
  Action act(const Observation& obs, Rng& rng) const;

  // Greedy value used for bootstrapping; absent rows count as zero.
  double max_value(std::int64_t obs_idx) const;

  std::string export_text() const;  // one line per entry: index then 6 values
  static QTable from_text(const std::string& text);

 private:
  int q_ = 0;
  int m_ = 0;
  std::map<std::int64_t, std::array<double, kNumActions>> entries_;
};

QTable q_train(const QConfig& cfg);

Action q_act(const QTable& table, const Observation& obs, Rng& rng);

}  // namespace maclearn
