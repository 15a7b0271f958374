#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maclearn/errors.hpp"
#include "maclearn/rng.hpp"

namespace maclearn {

// Uplink TDMA MAC environment: N UEs deliver P data PDUs each to a base
// station over a shared erasure channel, with a per-UE error-free control
// plane. One data transmission opportunity per slot; simultaneous
// transmissions collide.

enum class DataAction : int { NoOp = 0, Transmit = 1, Delete = 2 };
enum class SignalAction : int { Silent = 0, AccessRequest = 1 };
enum class DownlinkMsg : int { NoGrant = 0, Grant = 1, Ack = 2 };

inline constexpr int kNumActions = 6;
inline constexpr int kNumDownlink = 3;

struct Action {
  DataAction data = DataAction::NoOp;
  SignalAction signal = SignalAction::Silent;

  // Joint index 2*data + signal, bijective over {0..5}.
  int index() const { return 2 * static_cast<int>(data) + static_cast<int>(signal); }
  static Action from_index(int idx);

  bool operator==(const Action&) const = default;
};

struct HistoryEntry {
  int buf = 0;                            // buffer level observed at the slot start
  Action action{};                        // action taken in the slot
  DownlinkMsg dl = DownlinkMsg::NoGrant;  // base-station answer for the slot
  bool operator==(const HistoryEntry&) const = default;
};

// Per-agent partial view of the global state: current buffer level plus the
// last M slots of (buffer, action, downlink message), most recent first.
struct Observation {
  int buf_now = 0;
  std::vector<HistoryEntry> history;
  bool operator==(const Observation&) const = default;
};

struct EnvConfig {
  int n_ues = 2;
  int p_pdus = 2;            // P: dPDUs each UE must deliver
  int buffer_capacity = 10;  // Q
  double tbler = 1e-4;       // erasure probability for a lone transmission
  int memory_len = 1;        // M
  int t_max = 300;
  double reward_rho = 3.0;
  std::uint64_t rng_seed = 0;
  // Poisson arrival rate (per slot). Absent: all UEs present at t=0.
  std::optional<double> arrival_rate;

  void validate() const;  // throws ConfigError
};

struct UEState {
  int buffer = 0;
  bool head_delivered = false;  // head-of-buffer dPDU received by the BS at least once
  bool active = false;
  int delivered_total = 0;      // dPDUs successfully delivered (good deletes)
  int arrival_slot = 0;
};

struct StepInfo {
  bool collision = false;
  bool tx_success = false;  // lone transmission that survived the channel
  bool bad_delete = false;
  bool good_delete = false;
};

struct StepResult {
  std::vector<Observation> observations;
  double reward = 0.0;
  bool done = false;
  std::vector<StepInfo> info;
};

// Base-station control-plane answer for one slot: Ack to the UE whose
// transmission was received (takes precedence over any grant to it), one
// Grant uniformly among the remaining access requesters, NoGrant elsewhere.
std::vector<DownlinkMsg> bs_expert_step(int n_ues, std::optional<int> tx_success_ue,
                                        const std::vector<int>& requesters, Rng& rng);

class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  // Re-seeds the stream from the config, so identical resets replay
  // identically. Returns the per-UE observations at t=0.
  std::vector<Observation> reset();

  StepResult step(const std::vector<Action>& actions);

  Observation observation_of(int ue) const;
  std::vector<Observation> observations() const;

  int slot() const { return t_; }
  bool done() const { return done_; }
  const EnvConfig& config() const { return cfg_; }
  const UEState& ue_state(int ue) const;
  const std::vector<int>& pending_requests() const { return pending_requests_; }
  int total_delivered() const;

 private:
  void activate_arrivals();
  bool deliveries_finished() const;

  EnvConfig cfg_;
  Rng rng_;
  int t_ = 0;
  bool done_ = false;
  std::vector<UEState> ues_;
  std::vector<std::vector<HistoryEntry>> histories_;  // per UE, most recent first
  std::vector<int> pending_requests_;                 // requesters of the previous slot
};

// Canonical enumeration of the observation space for buffer capacity Q and
// memory M: (Q+1) * ((Q+1)*6*3)^M observations in lexicographic order of the
// tuple (buf_now, entry_0, ..., entry_{M-1}).
std::int64_t observation_space_size(int Q, int M);
std::vector<Observation> enumerate_observations(int Q, int M);
std::int64_t observation_index(const Observation& obs, int Q, int M);
Observation observation_from_index(std::int64_t idx, int Q, int M);

// Stable line format for episode traces:
// slot,buf_i,action_i,dl_i (per UE),reward,done
std::string format_trace_line(int slot, const std::vector<HistoryEntry>& slot_records,
                              double reward, bool done);

}  // namespace maclearn
