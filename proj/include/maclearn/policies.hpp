#pragma once

#include <array>
#include <functional>
#include <string>

#include "maclearn/env.hpp"
#include "maclearn/rng.hpp"

namespace maclearn {

// Probability distribution over the 6-action joint space.
struct PolicyDistribution {
  std::array<double, kNumActions> probs{};

  static PolicyDistribution one_hot(Action a);
  static PolicyDistribution uniform();

  // Highest-probability action, ties broken toward the lowest index.
  int argmax() const;
  Action sample(Rng& rng) const;
  double entropy() const;
};

// A policy is a pure function of the observation.
using PolicyFn = std::function<PolicyDistribution(const Observation&)>;

// Grant-based MAC expert: requests access while holding data, transmits only
// on a grant, deletes only on an ACK.
PolicyDistribution grant_based_expert(const Observation& obs);

// Grant-free MAC expert: transmits as soon as data is available and deletes
// right after its own transmission without waiting for the ACK.
PolicyDistribution grant_free_expert(const Observation& obs);

// Uniform distribution over all six actions.
PolicyDistribution random_policy(const Observation& obs);

// Lookup by name: "grant_based", "grant_free", "random".
PolicyFn expert_by_name(const std::string& name);

}  // namespace maclearn
