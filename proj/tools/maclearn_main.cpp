// Command-line front end: trains the observation abstraction, the MAPPO
// actors, and the tabular baseline, runs evaluation sweeps, and inspects
// artifacts. All commands are reproducible from (config, seed).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "maclearn/abstraction.hpp"
#include "maclearn/marl.hpp"
#include "maclearn/qlearning.hpp"
#include "maclearn/run_config.hpp"
#include "maclearn/sweeps.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maclearn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitIntegrity = 4;

std::string resolve_out_dir(const std::string& flag_out, const std::string& cfg_out,
                            const std::string& command) {
  if (!flag_out.empty()) return flag_out;
  if (!cfg_out.empty()) return cfg_out;
  if (const char* root = std::getenv("MACLEARN_OUT")) return (fs::path(root) / command).string();
  return (fs::path("runs") / command).string();
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& cfg_hash, std::uint64_t seed,
                    const std::vector<std::string>& outputs, const json& inputs = json::object()) {
  json manifest;
  manifest["command"] = command;
  manifest["config_hash"] = cfg_hash;
  manifest["seed"] = seed;
  manifest["inputs"] = inputs;
  json outs = json::object();
  for (const auto& name : outputs) {
    outs[name] = hash_hex(fnv1a_file((fs::path(out_dir) / name).string()));
  }
  manifest["outputs"] = outs;
  atomic_write_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::string losses_csv(const AbstractionTrace& trace) {
  std::ostringstream out;
  out << "episode,l_total,l_div,l_prior\n";
  for (std::size_t i = 0; i < trace.l_total.size(); ++i) {
    out << i << ',' << trace.l_total[i] << ',' << trace.l_div[i] << ',' << trace.l_prior[i]
        << '\n';
  }
  return out.str();
}

int cmd_train_abstraction(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                          const std::string& out_flag, std::optional<int> episodes_flag) {
  const json root = load_json_file(config_path);
  AbstractionRunConfig run = parse_abstraction_run(root);
  if (seed_flag) run.seed = *seed_flag;
  if (episodes_flag) run.abstraction.episodes = *episodes_flag;
  const std::string out_dir = resolve_out_dir(out_flag, run.out_dir, "train-abstraction");

  std::cout << "training abstraction: z=" << run.abstraction.z_size
            << " beta=" << run.abstraction.beta << " episodes=" << run.abstraction.episodes
            << " seed=" << run.seed << "\n";
  const AbstractionResult result = train_abstraction(run.abstraction, run.seed);
  const PhiModel phi = phi_from_model(result.model);

  save_checkpoint((fs::path(out_dir) / "phi.ckpt").string(), phi_to_checkpoint(phi));
  atomic_write_file((fs::path(out_dir) / "labels.txt").string(), phi_label_table_text(phi));
  atomic_write_file((fs::path(out_dir) / "losses.csv").string(), losses_csv(result.trace));
  write_manifest(out_dir, "train-abstraction", config_hash(root), run.seed,
                 {"phi.ckpt", "labels.txt", "losses.csv"});

  int used = 0;
  for (int c : phi.label_histogram()) used += c > 0 ? 1 : 0;
  std::cout << "final L_div=" << result.trace.l_div.back()
            << " eval L_div=" << result.eval_divergence << " labels_used=" << used << "/"
            << phi.z_size << "\nwrote " << out_dir << "\n";
  return kExitOk;
}

int cmd_search_z(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                 const std::string& out_flag, std::optional<int> episodes_flag) {
  const json root = load_json_file(config_path);
  AbstractionRunConfig run = parse_abstraction_run(root);
  if (seed_flag) run.seed = *seed_flag;
  if (episodes_flag) run.abstraction.episodes = *episodes_flag;
  if (run.z_values.empty()) throw ConfigError("search-z: config needs a 'z_values' list");
  const std::string out_dir = resolve_out_dir(out_flag, run.out_dir, "search-z");

  const ZSearchResult result =
      z_size_search(run.abstraction, run.z_values, run.seed, run.plateau_tol);
  std::ostringstream csv;
  csv << "z,eval_divergence\n";
  for (const auto& e : result.table) csv << e.z << ',' << e.divergence << '\n';
  atomic_write_file((fs::path(out_dir) / "zsearch.csv").string(), csv.str());
  write_manifest(out_dir, "search-z", config_hash(root), run.seed, {"zsearch.csv"});

  for (const auto& e : result.table)
    std::cout << "z=" << e.z << "  eval L_div=" << e.divergence << "\n";
  std::cout << "plateau z=" << result.plateau_z << "\nwrote " << out_dir << "\n";
  return kExitOk;
}

int cmd_train_policy(const std::string& config_path, const std::string& mode,
                     std::optional<std::uint64_t> seed_flag, const std::string& out_flag,
                     std::optional<int> episodes_flag) {
  const json root = load_json_file(config_path);
  PolicyRunConfig run = parse_policy_run(root);
  if (seed_flag) {
    run.seed = *seed_flag;
    run.marl.seed = *seed_flag;
  }
  if (episodes_flag) run.marl.n_train_episodes = *episodes_flag;
  run.marl.obs_mode = obs_mode_from_name(mode);
  const std::string out_dir = resolve_out_dir(out_flag, run.out_dir, "train-policy");

  std::optional<PhiModel> phi;
  if (run.marl.obs_mode == ObsMode::Abstract) {
    if (run.phi_checkpoint.empty())
      throw ConfigError("train-policy: abstract mode requires marl.phi_checkpoint");
    phi = phi_from_checkpoint(load_checkpoint(run.phi_checkpoint));
  }
  if (!run.marl.checkpoint_dir.empty()) run.marl.checkpoint_dir = out_dir;
  if (run.marl.checkpoint_interval > 0) run.marl.checkpoint_dir = out_dir;

  std::cout << "training MAPPO (" << mode << "): episodes=" << run.marl.n_train_episodes
            << " seed=" << run.marl.seed << "\n";
  const TrainResult result = train_mappo(run.marl, phi ? &*phi : nullptr);

  save_checkpoint((fs::path(out_dir) / "actor.ckpt").string(), actor_to_checkpoint(result.actor));
  atomic_write_file((fs::path(out_dir) / "curves.csv").string(), curves_csv(result.curves));
  write_manifest(out_dir, "train-policy", config_hash(root), run.seed,
                 {"actor.ckpt", "curves.csv"});

  if (!result.curves.empty()) {
    const auto& last = result.curves.back();
    std::cout << "final update: mean_reward=" << last.mean_reward
              << " mean_delivered=" << last.mean_delivered << " mean_ep_len=" << last.mean_ep_len
              << "\n";
  }
  std::cout << "wrote " << out_dir << "\n";
  return kExitOk;
}

int cmd_train_q(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                const std::string& out_flag, std::optional<int> episodes_flag) {
  const json root = load_json_file(config_path);
  QRunConfig run = parse_q_run(root);
  if (seed_flag) {
    run.seed = *seed_flag;
    run.q.seed = *seed_flag;
  }
  if (episodes_flag) run.q.n_train_episodes = *episodes_flag;
  const std::string out_dir = resolve_out_dir(out_flag, run.out_dir, "train-q");

  std::cout << "training Q baseline: episodes=" << run.q.n_train_episodes
            << " seed=" << run.q.seed << "\n";
  const QTable table = q_train(run.q);
  atomic_write_file((fs::path(out_dir) / "qtable.txt").string(), table.export_text());
  write_manifest(out_dir, "train-q", config_hash(root), run.seed, {"qtable.txt"});
  std::cout << "table entries=" << table.size() << "\nwrote " << out_dir << "\n";
  return kExitOk;
}

Solution build_solution(const SweepSolutionRef& ref) {
  if (!ref.table.empty()) {
    return solution_from_qtable(ref.name, QTable::from_text(read_file(ref.table)));
  }
  if (!ref.actor.empty()) {
    SharedActor actor = actor_from_checkpoint(load_checkpoint(ref.actor));
    std::optional<PhiModel> phi;
    if (actor.mode == ObsMode::Abstract) {
      if (ref.phi.empty())
        throw ConfigError("solution '" + ref.name + "': abstract actor requires a 'phi' path");
      phi = phi_from_checkpoint(load_checkpoint(ref.phi));
    }
    return solution_from_actor(ref.name, std::move(actor), std::move(phi),
                               ActionSelection::Sample);
  }
  // Expert or random policies are sampled from their distributions; the
  // experts are deterministic so sampling equals argmax there.
  return solution_from_policy(ref.name, expert_by_name(ref.name), true);
}

int cmd_sweep(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
              const std::string& out_flag) {
  const json root = load_json_file(config_path);
  SweepRunConfig run = parse_sweep_run(root);
  if (seed_flag) {
    run.seed = *seed_flag;
    run.spec.seed = *seed_flag;
  }
  const std::string out_dir = resolve_out_dir(out_flag, run.out_dir, "sweep");

  json inputs = json::object();
  std::vector<Solution> solutions;
  for (const auto& ref : run.solutions) {
    solutions.push_back(build_solution(ref));
    for (const std::string& path : {ref.actor, ref.phi, ref.table}) {
      if (!path.empty()) inputs[ref.name + ":" + fs::path(path).filename().string()] =
          hash_hex(fnv1a_file(path));
    }
  }

  // A pre-existing manifest pins the input artifacts for this output dir.
  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  if (fs::exists(manifest_path)) {
    const json previous = load_json_file(manifest_path.string());
    if (previous.contains("inputs") && previous.at("inputs") != inputs)
      throw IntegrityError("sweep: checkpoint hashes differ from the existing manifest in " +
                           out_dir);
  }

  const SweepResult result = run_sweep(run.spec, solutions);
  atomic_write_file((fs::path(out_dir) / "raw.csv").string(), sweep_raw_csv(result));
  atomic_write_file((fs::path(out_dir) / "aggregate.csv").string(), sweep_aggregate_csv(result));
  write_manifest(out_dir, "sweep", config_hash(root), run.seed, {"raw.csv", "aggregate.csv"},
                 inputs);
  std::cout << sweep_aggregate_csv(result) << "wrote " << out_dir << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& path) {
  const std::string text = read_file(path);
  if (text.rfind("maclearn-qtable", 0) == 0) {
    const QTable table = QTable::from_text(text);
    std::cout << "q table: Q=" << table.buffer_capacity() << " M=" << table.memory_len()
              << " entries=" << table.size() << "\n";
    return kExitOk;
  }
  const Checkpoint ckpt = parse_checkpoint(text);
  std::cout << "kind: " << ckpt.kind << "\n";
  for (const auto& [k, v] : ckpt.meta) std::cout << "meta " << k << " = " << v << "\n";
  for (std::size_t ni = 0; ni < ckpt.nets.size(); ++ni) {
    std::cout << "net " << ni << ":";
    for (const auto& layer : ckpt.nets[ni].layers()) {
      std::cout << " [" << layer.w.cols() << "->" << layer.w.rows() << " "
                << activation_name(layer.act) << "]";
    }
    std::cout << "\n";
  }
  if (ckpt.kind == "phi") {
    const PhiModel phi = phi_from_checkpoint(ckpt);
    const std::vector<int> hist = phi.label_histogram();
    int total = 0, used = 0;
    std::cout << "label histogram:";
    for (std::size_t k = 0; k < hist.size(); ++k) {
      std::cout << " " << k << ":" << hist[k];
      total += hist[k];
      used += hist[k] > 0 ? 1 : 0;
    }
    std::cout << "\nobservations=" << total << " labels_used=" << used << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wireless MAC protocol learning testbed: TDMA environment, observation "
               "abstraction, MAPPO training, and generalization sweeps"};
  app.require_subcommand(1);

  std::string config_path, out_flag, mode = "raw", inspect_path;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> episodes_flag;

  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    if (with_config) sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed_flag, "override the config seed");
    sub->add_option("--out", out_flag, "output directory (default: config out_dir, then $MACLEARN_OUT)");
  };

  auto* train_abs = app.add_subcommand("train-abstraction", "train the observation abstraction");
  add_common(train_abs);
  train_abs->add_option("--episodes", episodes_flag, "override training episodes");

  auto* search_z = app.add_subcommand("search-z", "sweep the abstraction label count");
  add_common(search_z);
  search_z->add_option("--episodes", episodes_flag, "override training episodes per z");

  auto* train_policy = app.add_subcommand("train-policy", "train a MAPPO actor");
  add_common(train_policy);
  train_policy->add_option("--mode", mode, "observation mode: raw | abstract")
      ->check(CLI::IsMember({"raw", "abstract"}));
  train_policy->add_option("--episodes", episodes_flag, "override training episodes");

  auto* train_q = app.add_subcommand("train-q", "train the tabular Q baseline");
  add_common(train_q);
  train_q->add_option("--episodes", episodes_flag, "override training episodes");

  auto* sweep = app.add_subcommand("sweep", "run a generalization sweep");
  add_common(sweep);

  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint or table");
  inspect->add_option("path", inspect_path, "artifact path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_abs->parsed())
      return cmd_train_abstraction(config_path, seed_flag, out_flag, episodes_flag);
    if (search_z->parsed()) return cmd_search_z(config_path, seed_flag, out_flag, episodes_flag);
    if (train_policy->parsed())
      return cmd_train_policy(config_path, mode, seed_flag, out_flag, episodes_flag);
    if (train_q->parsed()) return cmd_train_q(config_path, seed_flag, out_flag, episodes_flag);
    if (sweep->parsed()) return cmd_sweep(config_path, seed_flag, out_flag);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
