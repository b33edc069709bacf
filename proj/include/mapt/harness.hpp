#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mapt/config.hpp"
#include "mapt/csv.hpp"
#include "mapt/envs.hpp"
#include "mapt/matrpo.hpp"
#include "mapt/policy.hpp"
#include "mapt/sampling.hpp"
#include "mapt/trpe.hpp"
#include "mapt/verify.hpp"

namespace mapt {

inline constexpr const char* kArtifactVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitVerify = 3;

// substream tags for the per-seed master streams
inline constexpr std::uint64_t kPolicyInitStream = 0;
inline constexpr std::uint64_t kHeatmapStream = 0x48454154;  // "HEAT"
inline constexpr std::uint64_t kEvalStream = 0x4556414c;     // "EVAL"

struct EnvSetup {
  Env env;
  std::string name;
  int grid_side = 0;  // > 0 for grid games (enables heatmap export)
};

inline Cell parse_cell(const Config& config, const std::string& section, const std::string& key,
                       Cell fallback) {
  if (!config.has(section, key)) {
    config.get_string(section, key, "");  // mark consumed
    return fallback;
  }
  const auto items = config.get_int_list(section, key);
  if (items.size() != 2)
    throw ConfigError("[" + section + "] " + key + ": expected 'x,y'");
  return Cell{static_cast<int>(items[0]), static_cast<int>(items[1])};
}

/// Builds the environment named in [env]; unknown names are config errors.
inline EnvSetup build_env(const Config& config) {
  const std::string name = config.get_string("env", "name", "");
  if (name.empty()) throw ConfigError("[env] name: required (secret_room | open_grid)");
  EnvSetup setup;
  setup.name = name;
  if (name == "secret_room") {
    SecretRoomParams params;
    params.side = static_cast<int>(config.get_int("env", "side", params.side));
    params.wall_col = static_cast<int>(config.get_int("env", "wall_col", params.wall_col));
    params.door_y = static_cast<int>(config.get_int("env", "door_y", params.door_y));
    params.switches[0] = parse_cell(config, "env", "switch1", params.switches[0]);
    params.switches[1] = parse_cell(config, "env", "switch2", params.switches[1]);
    params.starts[0] = parse_cell(config, "env", "start1", params.starts[0]);
    params.starts[1] = parse_cell(config, "env", "start2", params.starts[1]);
    params.switch_radius = config.get_double("env", "switch_radius", params.switch_radius);
    params.horizon = static_cast<int>(config.get_int("env", "horizon", params.horizon));
    try {
      setup.env = secret_room(params);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(std::string("[env] ") + err.what());
    }
    setup.grid_side = params.side;
    return setup;
  }
  if (name == "open_grid") {
    const int side = static_cast<int>(config.get_int("env", "side", 5));
    const int agents = static_cast<int>(config.get_int("env", "agents", 2));
    const int horizon = static_cast<int>(config.get_int("env", "horizon", 25));
    try {
      setup.env = open_grid(side, agents, horizon);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(std::string("[env] ") + err.what());
    }
    setup.grid_side = side;
    return setup;
  }
  throw ConfigError("[env] name: unknown environment '" + name + "'");
}

struct PolicySpec {
  std::string cls = "tabular";  // tabular | mlp
  std::vector<std::int32_t> hidden = {64, 64};
};

inline PolicySpec read_policy_spec(const Config& config) {
  PolicySpec spec;
  spec.cls = config.get_string("policy", "class", spec.cls);
  if (spec.cls != "tabular" && spec.cls != "mlp")
    throw ConfigError("[policy] class: expected 'tabular' or 'mlp', got '" + spec.cls + "'");
  if (config.has("policy", "hidden")) {
    spec.hidden.clear();
    for (auto w : config.get_int_list("policy", "hidden")) {
      if (w < 1) throw ConfigError("[policy] hidden: widths must be >= 1");
      spec.hidden.push_back(static_cast<std::int32_t>(w));
    }
    if (spec.hidden.empty()) throw ConfigError("[policy] hidden: empty width list");
  } else {
    config.get_string("policy", "hidden", "");  // mark consumed
  }
  return spec;
}

inline PolicySet build_initial_policies(const PolicySpec& spec, const Env& env,
                                        std::uint64_t seed) {
  if (spec.cls == "tabular") return uniform_tabular_policies(env.game, env.obs);
  return mlp_policies(env.game, env.obs, spec.hidden, SplitRng(seed).substream(kPolicyInitStream));
}

inline ObjectiveKind parse_kind(const std::string& raw, const std::string& field) {
  if (raw == "joint") return ObjectiveKind::joint();
  if (raw == "mixture") return ObjectiveKind::mixture();
  if (raw == "disjoint") return ObjectiveKind::disjoint(0);
  throw ConfigError(field + ": expected joint | disjoint | mixture, got '" + raw + "'");
}

inline std::vector<std::uint64_t> resolve_seeds(const Config& config,
                                                const std::vector<std::uint64_t>& overrides) {
  if (!overrides.empty()) {
    config.get_string("run", "seeds", "");  // consume
    return overrides;
  }
  std::vector<std::uint64_t> seeds;
  for (auto s : config.get_int_list("run", "seeds")) seeds.push_back(static_cast<std::uint64_t>(s));
  if (seeds.empty())
    throw ConfigError("[run] seeds: nonempty seed list required (or pass --seed)");
  return seeds;
}

inline std::filesystem::path resolve_out_dir(const Config& config, const std::string& cli_out) {
  std::string out = cli_out.empty() ? config.get_string("run", "out", "") : cli_out;
  if (cli_out.empty() && out.empty())
    throw ConfigError("[run] out: output directory required (or pass --out)");
  if (!cli_out.empty()) config.get_string("run", "out", "");  // consume
  return out;
}

/// Deterministic run manifest (config hash, seeds, resolved parameters);
/// wall-clock metadata goes to a sidecar so outputs stay byte-reproducible.
inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const Config& config, const std::vector<std::uint64_t>& seeds,
                           const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string manifest = "MAPT-MANIFEST 1\n";
  manifest += "command " + command + "\n";
  manifest += "artifact_version " + std::string(kArtifactVersion) + "\n";
  manifest += "config_hash " + hex64(fnv1a64({config.text().data(), config.text().size()})) + "\n";
  manifest += "seeds";
  for (auto s : seeds) manifest += ' ' + std::to_string(s);
  manifest += '\n';
  for (const auto& [key, value] : fields) manifest += key + ' ' + value + '\n';
  write_file(out_dir / "manifest.txt", manifest);

  const auto now = std::chrono::system_clock::now();
  const std::time_t stamp = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "walltime_unix %lld\n", static_cast<long long>(stamp));
  write_file(out_dir / "run_info.txt", buf);
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

inline int cmd_pretrain(const Config& config, const std::string& cli_out,
                        const std::vector<std::uint64_t>& seed_overrides, std::ostream& log) {
  EnvSetup setup;
  PolicySpec policy_spec;
  TrpeConfig base;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  int heatmap_batch = 0;
  try {
    setup = build_env(config);
    policy_spec = read_policy_spec(config);
    base.kind = parse_kind(config.get_string("pretrain", "kind", "mixture"), "[pretrain] kind");
    base.batch_size = static_cast<int>(config.get_int("pretrain", "batch", 10));
    base.kl_threshold = config.get_double("pretrain", "kl_threshold", 6.0);
    base.learning_rate = config.get_double("pretrain", "learning_rate", 1e-5);
    base.max_offpolicy_iters =
        static_cast<int>(config.get_int("pretrain", "max_offpolicy_iters", 20));
    base.epochs = static_cast<int>(config.get_int("pretrain", "epochs", 10000));
    base.log_weight_guard = config.get_double("pretrain", "log_weight_guard", 30.0);
    seeds = resolve_seeds(config, seed_overrides);
    out_dir = resolve_out_dir(config, cli_out);
    heatmap_batch = static_cast<int>(config.get_int("run", "heatmap_batch", 50));
    if (heatmap_batch < 1) throw ConfigError("[run] heatmap_batch: must be >= 1");
    validate_trpe_config(base);
    check_kind(setup.env.game, base.kind);
    config.reject_unused();
  } catch (const std::exception& err) {
    log << "config error: " << err.what() << "\n";
    return kExitConfig;
  }

  try {
    std::vector<std::vector<TrpeEpochRow>> logs;
    for (const auto seed : seeds) {
      TrpeConfig trpe_config = base;
      trpe_config.seed = seed;
      PolicySet initial = build_initial_policies(policy_spec, setup.env, seed);
      TrpeRunResult result = run_trpe(setup.env.game, setup.env.obs, std::move(initial),
                                      trpe_config);
      const std::string tag = "seed" + std::to_string(seed);
      write_file(out_dir / ("pretrain_" + tag + ".csv"),
                 trpe_log_csv(result.log, base.kind, setup.env.game.num_agents));
      save_checkpoint(result.policies, (out_dir / ("policy_" + tag + ".ckpt")).string());
      if (setup.grid_side > 0) {
        const auto batch = sample_batch(setup.env.game, setup.env.obs, result.policies,
                                        heatmap_batch, SplitRng(seed).substream(kHeatmapStream));
        for (int i = 0; i < setup.env.game.num_agents; ++i)
          write_file(out_dir / ("heatmap_" + tag + "_agent" + std::to_string(i) + ".csv"),
                     heatmap_csv(setup.env.game, batch, i, setup.grid_side));
      }
      logs.push_back(std::move(result.log));
      log << "pretrain " << tag << ": " << (logs.back().empty() ? 0.0 : logs.back().back().metrics.mean_zeta1)
          << " final mean zeta1 (" << logs.back().size() << " epochs)\n";
    }
    write_file(out_dir / "summary.csv", trpe_summary_csv(logs, setup.env.game.num_agents));
    write_manifest(out_dir, "pretrain", config, seeds,
                   {{"env", setup.name},
                    {"horizon", std::to_string(setup.env.game.horizon)},
                    {"kind", base.kind.variant == ObjectiveKind::Variant::kDisjoint
                                 ? "disjoint"
                                 : base.kind.name()},
                    {"policy_class", policy_spec.cls},
                    {"epochs", std::to_string(base.epochs)},
                    {"batch", std::to_string(base.batch_size)},
                    {"kl_threshold", format_double(base.kl_threshold)},
                    {"learning_rate", format_double(base.learning_rate)},
                    {"max_offpolicy_iters", std::to_string(base.max_offpolicy_iters)},
                    {"log_weight_guard", format_double(base.log_weight_guard)},
                    {"heatmap_batch", std::to_string(heatmap_batch)}});
    return kExitOk;
  } catch (const std::exception& err) {
    log << "runtime failure: " << err.what() << "\n";
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

inline std::string resolve_checkpoint_path(const std::string& init, std::uint64_t seed) {
  namespace fs = std::filesystem;
  const std::string placeholder = "{seed}";
  std::string path = init;
  const auto pos = path.find(placeholder);
  if (pos != std::string::npos) {
    path.replace(pos, placeholder.size(), std::to_string(seed));
    return path;
  }
  if (fs::is_directory(path))
    return (fs::path(path) / ("policy_seed" + std::to_string(seed) + ".ckpt")).string();
  return path;
}

inline int cmd_finetune(const Config& config, const std::string& cli_out,
                        const std::vector<std::uint64_t>& seed_overrides, std::ostream& log) {
  EnvSetup setup;
  PolicySpec policy_spec;
  MatrpoConfig base;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  std::string init;
  Cell goal;
  double goal_radius = 0.0, goal_reward = 0.0, discount = 0.0;
  int eval_episodes = 0;
  try {
    setup = build_env(config);
    policy_spec = read_policy_spec(config);
    init = config.get_string("finetune", "init", "uniform");
    base.batch_size = static_cast<int>(config.get_int("finetune", "batch", 20));
    base.kl_threshold = config.get_double("finetune", "kl_threshold", 1e-4);
    base.policy_learning_rate =
        config.get_double("finetune", "policy_learning_rate", 1e-4);
    base.max_inner_iters = static_cast<int>(config.get_int("finetune", "max_inner_iters", 20));
    base.epochs = static_cast<int>(config.get_int("finetune", "epochs", 100));
    base.critic_learning_rate = config.get_double("finetune", "critic_learning_rate", 1e-4);
    base.critic_fit_steps = static_cast<int>(config.get_int("finetune", "critic_fit_steps", 20));
    if (config.has("finetune", "critic_hidden")) {
      base.critic_hidden.clear();
      for (auto w : config.get_int_list("finetune", "critic_hidden"))
        base.critic_hidden.push_back(static_cast<std::int32_t>(w));
    } else {
      config.get_string("finetune", "critic_hidden", "");
    }
    discount = config.get_double("finetune", "discount", 0.99);
    goal = parse_cell(config, "finetune", "goal", Cell{9, 9});
    goal_radius = config.get_double("finetune", "goal_radius", 1.5);
    goal_reward = config.get_double("finetune", "goal_reward", 100.0);
    eval_episodes = static_cast<int>(config.get_int("finetune", "eval_episodes", base.batch_size));
    seeds = resolve_seeds(config, seed_overrides);
    out_dir = resolve_out_dir(config, cli_out);
    validate_matrpo_config(base);
    if (!(discount > 0.0 && discount <= 1.0))
      throw ConfigError("[finetune] discount: must be in (0, 1]");
    if (eval_episodes < 1) throw ConfigError("[finetune] eval_episodes: must be >= 1");
    if (init != "uniform") {
      for (const auto seed : seeds) {
        const std::string path = resolve_checkpoint_path(init, seed);
        if (!std::filesystem::exists(path))
          throw ConfigError("[finetune] init: checkpoint not found: " + path);
      }
    }
    config.reject_unused();
  } catch (const std::exception& err) {
    log << "config error: " << err.what() << "\n";
    return kExitConfig;
  }

  RewardedTask task;
  try {
    task = sparse_goal_task(setup.env, goal, goal_radius, goal_reward, discount);
  } catch (const std::exception& err) {
    log << "config error: [finetune] goal: " << err.what() << "\n";
    return kExitConfig;
  }

  try {
    std::vector<std::vector<MatrpoEpochRow>> logs;
    for (const auto seed : seeds) {
      MatrpoConfig run_config = base;
      run_config.seed = seed;
      PolicySet initial;
      if (init == "uniform") {
        initial = build_initial_policies(policy_spec, setup.env, seed);
      } else {
        const std::string path = resolve_checkpoint_path(init, seed);
        initial = load_checkpoint(path);
        check_compatible(initial, task.game, task.obs);
      }
      const std::string tag = "seed" + std::to_string(seed);
      if (run_config.epochs == 0) {
        // zero-shot: one evaluation row for the loaded policy
        const auto metrics =
            evaluate_policies(task, initial, eval_episodes, SplitRng(seed).substream(kEvalStream));
        std::vector<MatrpoEpochRow> eval_log{{0, metrics}};
        write_file(out_dir / ("finetune_" + tag + ".csv"),
                   matrpo_log_csv(eval_log, task.game.num_agents));
        logs.push_back(std::move(eval_log));
      } else {
        MatrpoRunResult result = run_finetune(task, std::move(initial), run_config);
        write_file(out_dir / ("finetune_" + tag + ".csv"),
                   matrpo_log_csv(result.log, task.game.num_agents));
        logs.push_back(std::move(result.log));
      }
      double final_return = 0.0;
      if (!logs.back().empty())
        for (double r : logs.back().back().metrics.mean_return)
          final_return += r / task.game.num_agents;
      log << "finetune " << tag << ": final mean return " << final_return << "\n";
    }
    write_file(out_dir / "finetune_summary.csv",
               matrpo_summary_csv(logs, task.game.num_agents));
    write_manifest(out_dir, "finetune", config, seeds,
                   {{"env", setup.name},
                    {"horizon", std::to_string(task.game.horizon)},
                    {"init", init},
                    {"policy_class", policy_spec.cls},
                    {"epochs", std::to_string(base.epochs)},
                    {"batch", std::to_string(base.batch_size)},
                    {"kl_threshold", format_double(base.kl_threshold)},
                    {"policy_learning_rate", format_double(base.policy_learning_rate)},
                    {"discount", format_double(discount)},
                    {"critic_learning_rate", format_double(base.critic_learning_rate)},
                    {"critic_fit_steps", std::to_string(base.critic_fit_steps)},
                    {"goal", std::to_string(goal.x) + "," + std::to_string(goal.y)},
                    {"goal_radius", format_double(goal_radius)},
                    {"goal_reward", format_double(goal_reward)}});
    return kExitOk;
  } catch (const std::exception& err) {
    log << "runtime failure: " << err.what() << "\n";
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// verify / bounds
// ---------------------------------------------------------------------------

inline int cmd_verify(bool inject_fault, std::ostream& log) {
  bool all_pass = true;
  log << "property battery:\n";
  for (const auto& result : run_property_battery(inject_fault)) {
    log << "  [" << (result.pass ? "PASS" : "FAIL") << "] " << result.name << ": "
        << result.detail << "\n";
    all_pass = all_pass && result.pass;
  }
  log << (all_pass ? "all checks passed\n" : "verification failed\n");
  return all_pass ? kExitOk : kExitVerify;
}

struct BoundsArgs {
  double lipschitz = 1.0;
  int horizon = 50;
  std::int64_t joint_support = 100;
  std::int64_t local_support = 100;
  int num_agents = 2;
  double delta = 0.1;
  std::vector<int> trials = {1, 10, 100};
};

/// Tabulates the three finite-trials mismatch bounds across the K list.
inline int cmd_bounds(const BoundsArgs& args, std::ostream& log) {
  try {
    char line[160];
    std::snprintf(line, sizeof(line), "L=%g T=%d |S|=%lld |S~|=%lld N=%d delta=%g\n",
                  args.lipschitz, args.horizon, static_cast<long long>(args.joint_support),
                  static_cast<long long>(args.local_support), args.num_agents, args.delta);
    log << line;
    log << "K,joint,disjoint,mixture\n";
    for (int k : args.trials) {
      const double joint = mismatch_bound(ObjectiveKind::joint(), args.lipschitz, args.horizon,
                                          args.joint_support, k, args.num_agents, args.delta);
      const double disjoint =
          mismatch_bound(ObjectiveKind::disjoint(0), args.lipschitz, args.horizon,
                         args.local_support, k, args.num_agents, args.delta);
      const double mixture =
          mismatch_bound(ObjectiveKind::mixture(), args.lipschitz, args.horizon,
                         args.local_support, k, args.num_agents, args.delta);
      std::snprintf(line, sizeof(line), "%d,%.2f,%.2f,%.2f\n", k, joint, disjoint, mixture);
      log << line;
    }
    return kExitOk;
  } catch (const std::exception& err) {
    log << "config error: " << err.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace mapt
