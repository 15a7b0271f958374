#include "maclearn/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace maclearn {

Action Action::from_index(int idx) {
  if (idx < 0 || idx >= kNumActions) throw ContractError("Action::from_index: out of range");
  return Action{static_cast<DataAction>(idx / 2), static_cast<SignalAction>(idx % 2)};
}

void EnvConfig::validate() const {
  if (n_ues < 1) throw ConfigError("env: n_ues must be >= 1");
  if (buffer_capacity < 0) throw ConfigError("env: buffer_capacity must be >= 0");
  if (p_pdus < 0 || p_pdus > buffer_capacity)
    throw ConfigError("env: require 0 <= p_pdus <= buffer_capacity");
  if (!(tbler >= 0.0 && tbler <= 1.0)) throw ConfigError("env: tbler must be in [0,1]");
  if (memory_len < 1) throw ConfigError("env: memory_len must be >= 1");
  if (t_max < 1) throw ConfigError("env: t_max must be >= 1");
  if (!(reward_rho > 0.0)) throw ConfigError("env: reward_rho must be > 0");
  if (arrival_rate && !(*arrival_rate > 0.0))
    throw ConfigError("env: arrival_rate must be > 0 when set");
}

std::vector<DownlinkMsg> bs_expert_step(int n_ues, std::optional<int> tx_success_ue,
                                        const std::vector<int>& requesters, Rng& rng) {
  std::vector<DownlinkMsg> dl(static_cast<std::size_t>(n_ues), DownlinkMsg::NoGrant);
  if (tx_success_ue) {
    if (*tx_success_ue < 0 || *tx_success_ue >= n_ues)
      throw ContractError("bs_expert_step: success index out of range");
    dl[static_cast<std::size_t>(*tx_success_ue)] = DownlinkMsg::Ack;
  }
  std::vector<int> candidates;
  for (int i : requesters) {
    if (i < 0 || i >= n_ues) throw ContractError("bs_expert_step: requester index out of range");
    if (!tx_success_ue || i != *tx_success_ue) candidates.push_back(i);
  }
  if (candidates.size() == 1) {
    dl[static_cast<std::size_t>(candidates[0])] = DownlinkMsg::Grant;
  } else if (candidates.size() > 1) {
    const auto pick = rng.uniform_int(candidates.size());
    dl[static_cast<std::size_t>(candidates[pick])] = DownlinkMsg::Grant;
  }
  return dl;
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.rng_seed) {
  cfg_.validate();
  reset();
}

std::vector<Observation> Environment::reset() {
  rng_ = Rng(cfg_.rng_seed);
  t_ = 0;
  done_ = false;
  ues_.assign(static_cast<std::size_t>(cfg_.n_ues), UEState{});
  pending_requests_.clear();

  if (cfg_.arrival_rate) {
    double cum = 0.0;
    for (auto& ue : ues_) {
      cum += rng_.exponential(*cfg_.arrival_rate);
      ue.arrival_slot = static_cast<int>(std::llround(cum));
    }
  }

  const HistoryEntry empty_filler{0, Action{}, DownlinkMsg::NoGrant};
  histories_.assign(
      static_cast<std::size_t>(cfg_.n_ues),
      std::vector<HistoryEntry>(static_cast<std::size_t>(cfg_.memory_len), empty_filler));

  activate_arrivals();
  return observations();
}

void Environment::activate_arrivals() {
  for (std::size_t i = 0; i < ues_.size(); ++i) {
    auto& ue = ues_[i];
    if (!ue.active && ue.arrival_slot <= t_) {
      ue.active = true;
      ue.buffer = cfg_.p_pdus;
      ue.head_delivered = false;
      histories_[i].assign(static_cast<std::size_t>(cfg_.memory_len),
                           HistoryEntry{cfg_.p_pdus, Action{}, DownlinkMsg::NoGrant});
    }
  }
}

bool Environment::deliveries_finished() const {
  for (const auto& ue : ues_) {
    if (!ue.active) return false;  // an arrival is still pending
    if (ue.buffer > 0) return false;
  }
  return true;
}

StepResult Environment::step(const std::vector<Action>& actions) {
  if (static_cast<int>(actions.size()) != cfg_.n_ues)
    throw ContractError("env: action vector length mismatch");
  if (done_) throw ContractError("env: step() called on a finished episode");

  const int n = cfg_.n_ues;
  std::vector<StepInfo> info(static_cast<std::size_t>(n));
  std::vector<Action> applied(static_cast<std::size_t>(n));
  std::vector<int> buf_before(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& ue = ues_[static_cast<std::size_t>(i)];
    applied[static_cast<std::size_t>(i)] = ue.active ? actions[static_cast<std::size_t>(i)] : Action{};
    buf_before[static_cast<std::size_t>(i)] = ue.buffer;
  }

  // Data plane: a lone transmission survives the erasure channel with
  // probability 1 - TBLER; two or more transmissions collide.
  std::vector<int> transmitters;
  for (int i = 0; i < n; ++i) {
    if (applied[static_cast<std::size_t>(i)].data == DataAction::Transmit &&
        ues_[static_cast<std::size_t>(i)].buffer > 0) {
      transmitters.push_back(i);
    }
  }
  std::optional<int> success_ue;
  bool first_time_success = false;
  if (transmitters.size() == 1) {
    const int i = transmitters[0];
    const bool erased = rng_.uniform() < cfg_.tbler;
    if (!erased) {
      success_ue = i;
      info[static_cast<std::size_t>(i)].tx_success = true;
      auto& ue = ues_[static_cast<std::size_t>(i)];
      if (!ue.head_delivered) {
        ue.head_delivered = true;
        first_time_success = true;
      }
    }
  } else if (transmitters.size() > 1) {
    for (int i : transmitters) info[static_cast<std::size_t>(i)].collision = true;
  }

  // Delete resolution. Delete on an empty buffer is a no-op (neither bad nor
  // good); popping the head resets its delivery flag.
  bool any_bad = false, any_good = false;
  for (int i = 0; i < n; ++i) {
    auto& ue = ues_[static_cast<std::size_t>(i)];
    if (applied[static_cast<std::size_t>(i)].data == DataAction::Delete && ue.buffer > 0) {
      if (ue.head_delivered) {
        info[static_cast<std::size_t>(i)].good_delete = true;
        ue.delivered_total += 1;
        any_good = true;
      } else {
        info[static_cast<std::size_t>(i)].bad_delete = true;
        any_bad = true;
      }
      ue.buffer -= 1;
      ue.head_delivered = false;
    }
  }

  // Global reward: a bad delete anywhere dominates; otherwise a good delete
  // or a first-time successful transmission pays +rho; otherwise -1.
  double reward = -1.0;
  if (any_bad) {
    reward = -cfg_.reward_rho;
  } else if (any_good || first_time_success) {
    reward = cfg_.reward_rho;
  }

  // Control plane: the BS answers this slot's requests and channel outcome;
  // UEs see the answer in the next slot's observation.
  std::vector<int> requesters;
  for (int i = 0; i < n; ++i) {
    if (ues_[static_cast<std::size_t>(i)].active &&
        applied[static_cast<std::size_t>(i)].signal == SignalAction::AccessRequest) {
      requesters.push_back(i);
    }
  }
  const std::vector<DownlinkMsg> dl = bs_expert_step(n, success_ue, requesters, rng_);

  for (int i = 0; i < n; ++i) {
    if (!ues_[static_cast<std::size_t>(i)].active) continue;
    auto& h = histories_[static_cast<std::size_t>(i)];
    h.insert(h.begin(), HistoryEntry{buf_before[static_cast<std::size_t>(i)],
                                     applied[static_cast<std::size_t>(i)],
                                     dl[static_cast<std::size_t>(i)]});
    h.pop_back();
  }
  pending_requests_ = requesters;

  t_ += 1;
  activate_arrivals();
  done_ = (t_ >= cfg_.t_max) || deliveries_finished();

  return StepResult{observations(), reward, done_, std::move(info)};
}

Observation Environment::observation_of(int ue) const {
  if (ue < 0 || ue >= cfg_.n_ues) throw ContractError("env: UE index out of range");
  return Observation{ues_[static_cast<std::size_t>(ue)].buffer,
                     histories_[static_cast<std::size_t>(ue)]};
}

std::vector<Observation> Environment::observations() const {
  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(cfg_.n_ues));
  for (int i = 0; i < cfg_.n_ues; ++i) obs.push_back(observation_of(i));
  return obs;
}

const UEState& Environment::ue_state(int ue) const {
  if (ue < 0 || ue >= cfg_.n_ues) throw ContractError("env: UE index out of range");
  return ues_[static_cast<std::size_t>(ue)];
}

int Environment::total_delivered() const {
  int total = 0;
  for (const auto& ue : ues_) total += ue.delivered_total;
  return total;
}

std::int64_t observation_space_size(int Q, int M) {
  if (Q < 0 || M < 1) throw ContractError("observation space: require Q >= 0, M >= 1");
  const std::int64_t per_entry = static_cast<std::int64_t>(Q + 1) * kNumActions * kNumDownlink;
  std::int64_t size = Q + 1;
  for (int j = 0; j < M; ++j) size *= per_entry;
  return size;
}

std::int64_t observation_index(const Observation& obs, int Q, int M) {
  if (Q < 0 || M < 1) throw ContractError("observation_index: require Q >= 0, M >= 1");
  if (static_cast<int>(obs.history.size()) != M)
    throw ContractError("observation_index: history length != M");
  if (obs.buf_now < 0 || obs.buf_now > Q) throw ContractError("observation_index: buf_now out of range");
  std::int64_t idx = obs.buf_now;
  for (const auto& e : obs.history) {
    if (e.buf < 0 || e.buf > Q) throw ContractError("observation_index: history buf out of range");
    idx = idx * (Q + 1) + e.buf;
    idx = idx * kNumActions + e.action.index();
    idx = idx * kNumDownlink + static_cast<int>(e.dl);
  }
  return idx;
}

Observation observation_from_index(std::int64_t idx, int Q, int M) {
  if (idx < 0 || idx >= observation_space_size(Q, M))
    throw ContractError("observation_from_index: index out of range");
  Observation obs;
  obs.history.resize(static_cast<std::size_t>(M));
  for (int j = M - 1; j >= 0; --j) {
    auto& e = obs.history[static_cast<std::size_t>(j)];
    e.dl = static_cast<DownlinkMsg>(idx % kNumDownlink);
    idx /= kNumDownlink;
    e.action = Action::from_index(static_cast<int>(idx % kNumActions));
    idx /= kNumActions;
    e.buf = static_cast<int>(idx % (Q + 1));
    idx /= (Q + 1);
  }
  obs.buf_now = static_cast<int>(idx);
  return obs;
}

std::vector<Observation> enumerate_observations(int Q, int M) {
  const std::int64_t size = observation_space_size(Q, M);
  std::vector<Observation> all;
  all.reserve(static_cast<std::size_t>(size));
  for (std::int64_t i = 0; i < size; ++i) all.push_back(observation_from_index(i, Q, M));
  return all;
}

std::string format_trace_line(int slot, const std::vector<HistoryEntry>& slot_records,
                              double reward, bool done) {
  std::ostringstream out;
  out << slot;
  for (const auto& rec : slot_records) {
    out << ',' << rec.buf << ',' << rec.action.index() << ',' << static_cast<int>(rec.dl);
  }
  out << ',' << reward << ',' << (done ? 1 : 0);
  return out.str();
}

}  // namespace maclearn
