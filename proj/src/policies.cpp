#include "maclearn/policies.hpp"

#include <cmath>

namespace maclearn {

PolicyDistribution PolicyDistribution::one_hot(Action a) {
  PolicyDistribution d;
  d.probs[static_cast<std::size_t>(a.index())] = 1.0;
  return d;
}

PolicyDistribution PolicyDistribution::uniform() {
  PolicyDistribution d;
  d.probs.fill(1.0 / kNumActions);
  return d;
}

int PolicyDistribution::argmax() const {
  int best = 0;
  for (int i = 1; i < kNumActions; ++i) {
    if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

Action PolicyDistribution::sample(Rng& rng) const {
  return Action::from_index(rng.sample_discrete(probs));
}

double PolicyDistribution::entropy() const {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

PolicyDistribution grant_based_expert(const Observation& obs) {
  const DownlinkMsg last_dl = obs.history.front().dl;
  if (obs.buf_now > 0 && last_dl == DownlinkMsg::Ack)
    return PolicyDistribution::one_hot({DataAction::Delete, SignalAction::Silent});
  if (obs.buf_now > 0 && last_dl == DownlinkMsg::Grant)
    return PolicyDistribution::one_hot({DataAction::Transmit, SignalAction::Silent});
  if (obs.buf_now > 0)
    return PolicyDistribution::one_hot({DataAction::NoOp, SignalAction::AccessRequest});
  return PolicyDistribution::one_hot({DataAction::NoOp, SignalAction::Silent});
}

PolicyDistribution grant_free_expert(const Observation& obs) {
  if (obs.buf_now == 0)
    return PolicyDistribution::one_hot({DataAction::NoOp, SignalAction::Silent});
  if (obs.history.front().action.data == DataAction::Transmit)
    return PolicyDistribution::one_hot({DataAction::Delete, SignalAction::Silent});
  return PolicyDistribution::one_hot({DataAction::Transmit, SignalAction::Silent});
}

PolicyDistribution random_policy(const Observation&) { return PolicyDistribution::uniform(); }

PolicyFn expert_by_name(const std::string& name) {
  if (name == "grant_based") return grant_based_expert;
  if (name == "grant_free") return grant_free_expert;
  if (name == "random") return random_policy;
  throw ConfigError("unknown expert policy: " + name);
}

}  // namespace maclearn
