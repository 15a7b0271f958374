#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maclearn/abstraction.hpp"
#include "maclearn/marl.hpp"
#include "maclearn/qlearning.hpp"
#include "maclearn/sweeps.hpp"

#include <json.hpp>

namespace maclearn {

// Declarative JSON run configurations with strict validation: unknown keys
// are fatal, referenced files must exist at parse time.

nlohmann::json load_json_file(const std::string& path);

// Throws ConfigError naming any key of `obj` outside `allowed`.
void reject_unknown_keys(const nlohmann::json& obj, const std::string& context,
                         const std::vector<std::string>& allowed);

EnvConfig parse_env_config(const nlohmann::json& obj);

struct AbstractionRunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;
  AbstractionConfig abstraction;
  // search-z extras
  std::vector<int> z_values;
  double plateau_tol = 0.05;
};
AbstractionRunConfig parse_abstraction_run(const nlohmann::json& root);

struct PolicyRunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;
  MarlConfig marl;
  std::string phi_checkpoint;  // required in abstract mode
};
PolicyRunConfig parse_policy_run(const nlohmann::json& root);

struct QRunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;
  QConfig q;
};
QRunConfig parse_q_run(const nlohmann::json& root);

struct SweepSolutionRef {
  std::string name;           // m_ophi | m_o | q_o | grant_based | grant_free | random
  std::string actor;          // checkpoint path for learned actors
  std::string phi;            // phi checkpoint path (abstract actors)
  std::string table;          // q-table path
};

struct SweepRunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;
  SweepSpec spec;
  std::vector<SweepSolutionRef> solutions;
};
SweepRunConfig parse_sweep_run(const nlohmann::json& root);

// Canonical serialization used for config fingerprints.
std::string config_hash(const nlohmann::json& root);

}  // namespace maclearn
