#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <sstream>

#include "mapt/config.hpp"
#include "mapt/harness.hpp"

using namespace mapt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const char* kTinyPretrain = R"(
[env]
name = open_grid
side = 3
agents = 2
horizon = 6

[policy]
class = tabular

[pretrain]
kind = mixture
epochs = 4
batch = 3
learning_rate = 0.001

[run]
seeds = 1,2
heatmap_batch = 5
)";

std::map<std::string, std::string> read_dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> contents;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      contents[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  return contents;
}

}  // namespace

TEST_CASE("config parsing: sections, defaults, lists, unknown keys") {
  const Config config = Config::parse_string(R"(
# comment
[env]
name = open_grid  # trailing comment
side = 4

[run]
seeds = 3, 5, 8
)");
  REQUIRE(config.get_string("env", "name", "") == "open_grid");
  REQUIRE(config.get_int("env", "side", 0) == 4);
  REQUIRE(config.get_int("env", "missing", 7) == 7);
  REQUIRE(config.get_int_list("run", "seeds") == std::vector<std::int64_t>{3, 5, 8});
  config.reject_unused();

  REQUIRE_THROWS_AS(Config::parse_string("[env\nname = x\n"), ConfigError);
  REQUIRE_THROWS_AS(Config::parse_string("[env]\nno_equals_here\n"), ConfigError);
  const Config bad_number = Config::parse_string("[env]\nside = abc\n");
  REQUIRE_THROWS_WITH(bad_number.get_int("env", "side", 0),
                      Catch::Matchers::ContainsSubstring("side"));

  const Config unknown = Config::parse_string("[env]\nname = open_grid\nsidee = 4\n");
  unknown.get_string("env", "name", "");
  REQUIRE_THROWS_WITH(unknown.reject_unused(), Catch::Matchers::ContainsSubstring("env.sidee"));
}

TEST_CASE("cmd_pretrain writes the documented artifact set") {
  TempDir dir("mapt_pretrain_out");
  std::ostringstream log;
  const int status = cmd_pretrain(Config::parse_string(kTinyPretrain), dir.path.string(), {}, log);
  CAPTURE(log.str());
  REQUIRE(status == kExitOk);
  for (const char* name :
       {"pretrain_seed1.csv", "pretrain_seed2.csv", "policy_seed1.ckpt", "policy_seed2.ckpt",
        "heatmap_seed1_agent0.csv", "heatmap_seed1_agent1.csv", "summary.csv", "manifest.txt",
        "run_info.txt"})
    REQUIRE(fs::exists(dir.path / name));
  const std::string csv = read_file(dir.path / "pretrain_seed1.csv");
  REQUIRE(csv.find("epoch,optimized_kind,mean_zeta1,stderr") == 0);
  REQUIRE(csv.find("mixture") != std::string::npos);
  const std::string manifest = read_file(dir.path / "manifest.txt");
  REQUIRE(manifest.find("config_hash") != std::string::npos);
  REQUIRE(manifest.find("seeds 1 2") != std::string::npos);
}

TEST_CASE("identical pretrain configs reproduce outputs byte-for-byte") {
  TempDir a("mapt_repro_a"), b("mapt_repro_b");
  std::ostringstream log;
  REQUIRE(cmd_pretrain(Config::parse_string(kTinyPretrain), a.path.string(), {}, log) == kExitOk);
  REQUIRE(cmd_pretrain(Config::parse_string(kTinyPretrain), b.path.string(), {}, log) == kExitOk);
  auto left = read_dir_bytes(a.path);
  auto right = read_dir_bytes(b.path);
  left.erase("run_info.txt");  // wall-clock sidecar is exempt
  right.erase("run_info.txt");
  REQUIRE(left == right);
}

TEST_CASE("cmd_pretrain with zero epochs emits heatmaps of the initial policy") {
  TempDir dir("mapt_pretrain_zero");
  Config config = Config::parse_string(R"(
[env]
name = open_grid
side = 3
agents = 2
horizon = 5

[pretrain]
kind = joint
epochs = 0

[run]
seeds = 9
heatmap_batch = 4
)");
  std::ostringstream log;
  REQUIRE(cmd_pretrain(config, dir.path.string(), {}, log) == kExitOk);
  REQUIRE(fs::exists(dir.path / "heatmap_seed9_agent0.csv"));
  const std::string csv = read_file(dir.path / "pretrain_seed9.csv");
  // header only
  REQUIRE(csv.find('\n') == csv.size() - 1);
}

TEST_CASE("config errors name the offending field and exit nonzero") {
  std::ostringstream log;
  // bad kind
  Config bad_kind = Config::parse_string("[env]\nname = open_grid\n[pretrain]\nkind = wat\n"
                                         "[run]\nseeds = 1\n");
  REQUIRE(cmd_pretrain(bad_kind, "/tmp/mapt_never", {}, log) == kExitConfig);
  REQUIRE(log.str().find("kind") != std::string::npos);

  // no seeds
  std::ostringstream log2;
  Config no_seeds = Config::parse_string("[env]\nname = open_grid\n");
  REQUIRE(cmd_pretrain(no_seeds, "/tmp/mapt_never", {}, log2) == kExitConfig);
  REQUIRE(log2.str().find("seeds") != std::string::npos);

  // unknown env
  std::ostringstream log3;
  Config bad_env = Config::parse_string("[env]\nname = lava_world\n[run]\nseeds = 1\n");
  REQUIRE(cmd_pretrain(bad_env, "/tmp/mapt_never", {}, log3) == kExitConfig);
  REQUIRE(log3.str().find("lava_world") != std::string::npos);

  // missing checkpoint for finetune
  std::ostringstream log4;
  Config missing_ckpt = Config::parse_string(
      "[env]\nname = open_grid\nside = 3\n[finetune]\ninit = /nonexistent/path.ckpt\n"
      "goal = 3,3\n[run]\nseeds = 1\n");
  REQUIRE(cmd_finetune(missing_ckpt, "/tmp/mapt_never", {}, log4) == kExitConfig);
  REQUIRE(log4.str().find("init") != std::string::npos);
}

TEST_CASE("cmd_finetune runs from uniform init and reproduces byte-identically") {
  const char* finetune_config = R"(
[env]
name = open_grid
side = 3
agents = 2
horizon = 6

[policy]
class = tabular

[finetune]
init = uniform
epochs = 3
batch = 3
goal = 3,3
goal_radius = 1.5
goal_reward = 10
critic_fit_steps = 5

[run]
seeds = 4,5
)";
  TempDir a("mapt_ft_a"), b("mapt_ft_b");
  std::ostringstream log;
  REQUIRE(cmd_finetune(Config::parse_string(finetune_config), a.path.string(), {}, log) ==
          kExitOk);
  REQUIRE(cmd_finetune(Config::parse_string(finetune_config), b.path.string(), {}, log) ==
          kExitOk);
  for (const char* name : {"finetune_seed4.csv", "finetune_seed5.csv", "finetune_summary.csv",
                           "manifest.txt"})
    REQUIRE(fs::exists(a.path / name));
  auto left = read_dir_bytes(a.path);
  auto right = read_dir_bytes(b.path);
  left.erase("run_info.txt");
  right.erase("run_info.txt");
  REQUIRE(left == right);
}

TEST_CASE("cmd_finetune zero-epoch zero-shot evaluation emits one row") {
  TempDir pretrain_dir("mapt_zs_pre");
  std::ostringstream log;
  REQUIRE(cmd_pretrain(Config::parse_string(kTinyPretrain), pretrain_dir.path.string(), {}, log) ==
          kExitOk);

  TempDir eval_dir("mapt_zs_eval");
  const std::string config_text = std::string(R"(
[env]
name = open_grid
side = 3
agents = 2
horizon = 6

[policy]
class = tabular

[finetune]
init = )") + pretrain_dir.path.string() + R"(
epochs = 0
goal = 3,3
eval_episodes = 6

[run]
seeds = 1
)";
  REQUIRE(cmd_finetune(Config::parse_string(config_text), eval_dir.path.string(), {}, log) ==
          kExitOk);
  const std::string csv = read_file(eval_dir.path / "finetune_seed1.csv");
  // header plus exactly one epoch-0 row
  REQUIRE(csv.find("\n0,") != std::string::npos);
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  REQUIRE(lines == 2);
}

TEST_CASE("checkpoint architecture mismatches are reported") {
  TempDir pretrain_dir("mapt_mismatch_pre");
  std::ostringstream log;
  REQUIRE(cmd_pretrain(Config::parse_string(kTinyPretrain), pretrain_dir.path.string(), {}, log) ==
          kExitOk);
  // 4x4 grid game cannot load a 3x3 checkpoint
  TempDir out("mapt_mismatch_out");
  const std::string config_text = std::string(R"(
[env]
name = open_grid
side = 4
agents = 2
horizon = 6

[finetune]
init = )") + pretrain_dir.path.string() + R"(
epochs = 1
goal = 4,4

[run]
seeds = 1
)";
  std::ostringstream log2;
  const int status = cmd_finetune(Config::parse_string(config_text), out.path.string(), {}, log2);
  REQUIRE(status == kExitRuntime);
  REQUIRE(log2.str().find("architecture mismatch") != std::string::npos);
}

TEST_CASE("seed overrides replace the config seed list") {
  TempDir dir("mapt_seed_override");
  std::ostringstream log;
  REQUIRE(cmd_pretrain(Config::parse_string(kTinyPretrain), dir.path.string(), {7}, log) ==
          kExitOk);
  REQUIRE(fs::exists(dir.path / "pretrain_seed7.csv"));
  REQUIRE_FALSE(fs::exists(dir.path / "pretrain_seed1.csv"));
}

TEST_CASE("cmd_bounds prints the documented table") {
  std::ostringstream out;
  BoundsArgs args;
  args.lipschitz = 1.0;
  args.horizon = 50;
  args.joint_support = 100;
  args.local_support = 100;
  args.num_agents = 4;
  args.delta = 0.1;
  args.trials = {10};
  REQUIRE(cmd_bounds(args, out) == kExitOk);
  const std::string text = out.str();
  REQUIRE(text.find("K,joint,disjoint,mixture") != std::string::npos);
  REQUIRE(text.find("10,587.70,587.70,293.85") != std::string::npos);
}

TEST_CASE("mean_ci95 uses the t-interval over seeds") {
  const double values[4] = {1.0, 2.0, 3.0, 4.0};
  const MeanCi mc = mean_ci95(values);
  REQUIRE(mc.mean == Catch::Approx(2.5));
  // sample sd = sqrt(5/3), stderr = sd/2, t_{0.975, df=3} = 3.182
  const double expected = 3.182 * std::sqrt(5.0 / 3.0) / 2.0;
  REQUIRE(mc.ci95 == Catch::Approx(expected).margin(1e-9));
}
