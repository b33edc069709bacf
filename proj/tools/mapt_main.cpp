// Command-line front end: pretrain | finetune | verify | bounds.
//
// Exit codes: 0 success, 1 config error, 2 runtime failure, 3 verification
// failure.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mapt/config.hpp"
#include "mapt/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised multi-agent pre-training via state entropy maximization"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides [run] out)");
    cmd->add_option("--seed", seeds, "seed overrides (repeatable; overrides [run] seeds)");
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "state-entropy pre-training runs");
  add_run_options(pretrain);

  CLI::App* finetune = app.add_subcommand("finetune", "sparse-reward fine-tuning runs");
  add_run_options(finetune);

  bool inject_fault = false;
  CLI::App* verify = app.add_subcommand("verify", "run the seeded property battery");
  verify->add_flag("--inject-fault", inject_fault,
                   "corrupt one fixture transition row to demonstrate the failure path");

  mapt::BoundsArgs bounds_args;
  std::vector<int> trials;
  CLI::App* bounds = app.add_subcommand("bounds", "tabulate finite-trials mismatch bounds");
  bounds->add_option("--lipschitz", bounds_args.lipschitz, "Lipschitz constant L");
  bounds->add_option("--horizon", bounds_args.horizon, "episode horizon T");
  bounds->add_option("--joint-support", bounds_args.joint_support, "|S| for the joint bound");
  bounds->add_option("--local-support", bounds_args.local_support,
                     "|S~| for disjoint/mixture bounds");
  bounds->add_option("--agents", bounds_args.num_agents, "number of agents N");
  bounds->add_option("--delta", bounds_args.delta, "confidence level in (0, 1]");
  bounds->add_option("--trials", trials, "K values to tabulate (repeatable)");

  CLI11_PARSE(app, argc, argv);

  if (pretrain->parsed() || finetune->parsed()) {
    mapt::Config config;
    try {
      config = mapt::Config::parse_file(config_path);
    } catch (const std::exception& err) {
      std::cerr << "config error: " << err.what() << "\n";
      return mapt::kExitConfig;
    }
    return pretrain->parsed() ? mapt::cmd_pretrain(config, out_dir, seeds, std::cout)
                              : mapt::cmd_finetune(config, out_dir, seeds, std::cout);
  }
  if (verify->parsed()) return mapt::cmd_verify(inject_fault, std::cout);
  if (!trials.empty()) bounds_args.trials = trials;
  return mapt::cmd_bounds(bounds_args, std::cout);
}
