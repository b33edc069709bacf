#include <catch2/catch_amalgamated.hpp>
#include <queue>
#include <set>
#include <sstream>

#include "mapt/distribution.hpp"
#include "mapt/envs.hpp"
#include "mapt/oracle.hpp"
#include "mapt/sampling.hpp"

using namespace mapt;

namespace {

std::int64_t room_state(const Env& env, Cell a0, Cell a1, int side = 10) {
  return cell_index(a0, side) +
         static_cast<std::int64_t>(side) * side * cell_index(a1, side);
}

std::int64_t apply_joint(const Env& env, std::int64_t state, int action0, int action1) {
  const auto& det = std::get<DeterministicTransitions>(env.game.transition);
  return det.next[state * env.game.num_actions() + (action0 + kNumGridActions * action1)];
}

// reachable cells for agent 0 while agent 1 holds still at its position
std::set<int> flood_fill_agent0(const Env& env, Cell start0, Cell parked1, int side = 10) {
  std::set<int> seen;
  std::queue<std::int64_t> frontier;
  const std::int64_t root = room_state(env, start0, parked1);
  frontier.push(root);
  seen.insert(static_cast<int>(root % (side * side)));
  std::set<std::int64_t> visited{root};
  while (!frontier.empty()) {
    const std::int64_t state = frontier.front();
    frontier.pop();
    for (int a = 0; a < kNumGridActions; ++a) {
      const std::int64_t next = apply_joint(env, state, a, 4 /* agent 1 stays */);
      if (visited.insert(next).second) {
        seen.insert(static_cast<int>(next % (side * side)));
        frontier.push(next);
      }
    }
  }
  return seen;
}

}  // namespace

TEST_CASE("crossing the wall is blocked while the door is closed") {
  Env env = secret_room();
  // both agents far from switches; agent 0 at the door row next to the wall
  const std::int64_t s = room_state(env, Cell{5, 5}, Cell{2, 2});
  const std::int64_t next = apply_joint(env, s, 3 /* right */, 4 /* stay */);
  REQUIRE(next == s);  // no-op move
}

TEST_CASE("an agent on a switch opens the door for everyone") {
  Env env = secret_room();
  // agent 1 parked on switch (1,9); agent 0 crosses (5,5) -> (6,5)
  const std::int64_t s = room_state(env, Cell{5, 5}, Cell{1, 9});
  const std::int64_t next = apply_joint(env, s, 3, 4);
  REQUIRE(next == room_state(env, Cell{6, 5}, Cell{1, 9}));

  // door bit is set in both observations
  REQUIRE(env.obs.features(0, s)[1] == 1);
  REQUIRE(env.obs.features(1, s)[1] == 1);
  // ... and cleared when nobody is near a switch
  const std::int64_t closed = room_state(env, Cell{5, 5}, Cell{2, 2});
  REQUIRE(env.obs.features(0, closed)[1] == 0);
  REQUIRE(env.obs.features(1, closed)[1] == 0);
}

TEST_CASE("adjacency to a switch counts as occupied (distance < 1.5)") {
  Env env = secret_room();
  const std::int64_t s = room_state(env, Cell{2, 9}, Cell{2, 2});  // distance 1 from (1,9)
  REQUIRE(env.obs.features(0, s)[1] == 1);
  const std::int64_t far = room_state(env, Cell{3, 9}, Cell{2, 2});  // distance 2
  REQUIRE(env.obs.features(0, far)[1] == 0);
}

TEST_CASE("flood fill: two rooms of 50 cells, one passage") {
  Env env = secret_room();
  // door closed: agent 1 parked away from both switches
  const auto closed = flood_fill_agent0(env, Cell{1, 1}, Cell{3, 3});
  REQUIRE(closed.size() == 50);
  // door held open: agent 1 parked on the first room's switch
  const auto open = flood_fill_agent0(env, Cell{1, 1}, Cell{1, 9});
  REQUIRE(open.size() == 100);
}

TEST_CASE("secret-room dynamics are deterministic and valid") {
  Env env = secret_room();
  REQUIRE(validate_game(env.game).empty());
  REQUIRE(env.game.horizon == 50);
  REQUIRE(env.game.num_states() == 10000);
  REQUIRE(env.game.num_actions() == 25);
  // start state is the deterministic pair (1,1), (2,2)
  const std::int64_t start = room_state(env, Cell{1, 1}, Cell{2, 2});
  for (std::int64_t s = 0; s < env.game.num_states(); ++s)
    REQUIRE(env.game.initial_dist[s] == (s == start ? 1.0 : 0.0));
}

TEST_CASE("invalid secret-room parameters are rejected") {
  SecretRoomParams both_switches_left;
  both_switches_left.switches = {{1, 9}, {2, 9}};
  REQUIRE_THROWS_AS(secret_room(both_switches_left), std::invalid_argument);

  SecretRoomParams bad_start;
  bad_start.starts = {{9, 9}, {2, 2}};  // second room
  REQUIRE_THROWS_AS(secret_room(bad_start), std::invalid_argument);

  SecretRoomParams bad_radius;
  bad_radius.switch_radius = 0.0;
  REQUIRE_THROWS_AS(secret_room(bad_radius), std::invalid_argument);
}

TEST_CASE("sparse goal task fires within the radius for every agent") {
  Env env = secret_room();
  const RewardedTask task = sparse_goal_task(env, Cell{9, 9}, 1.5, 100.0);
  // distance 1 from the goal: reward fires
  const std::int64_t near = room_state(env, Cell{9, 8}, Cell{2, 2});
  REQUIRE(task.is_terminal(near));
  REQUIRE(task.reward(near, 0) == 100.0);
  REQUIRE(task.reward(near, 1) == 100.0);  // both agents simultaneously
  // distance 2: nothing
  const std::int64_t far = room_state(env, Cell{9, 7}, Cell{2, 2});
  REQUIRE_FALSE(task.is_terminal(far));
  REQUIRE(task.reward(far, 0) == 0.0);

  REQUIRE_THROWS_AS(sparse_goal_task(env, Cell{11, 9}, 1.5, 100.0), std::invalid_argument);
}

TEST_CASE("open grid shapes") {
  Env point = open_grid(1, 2, 3);
  REQUIRE(point.game.num_states() == 1);

  Env grid = open_grid(5, 2, 25);
  REQUIRE(grid.game.local_state_sizes == std::vector<std::int32_t>{25, 25});
  REQUIRE(grid.game.num_states() == 625);
  REQUIRE(validate_game(grid.game).empty());
}

TEST_CASE("uniform policy on the open grid approaches the uniform marginal") {
  // the five-action walk with reflecting edges is doubly stochastic, so the
  // exact marginal tends to uniform; a long horizon washes out the start
  Env env = open_grid(5, 1, 400);
  auto policies = uniform_tabular_policies(env.game, env.obs);
  const auto dists = exact_distributions(env.game, env.obs, policies);
  const double entropy = plugin_entropy(dists.marginals[0]);
  REQUIRE(entropy >= 0.95 * std::log(25.0));
}

TEST_CASE("tiny game caps and validity") {
  REQUIRE_THROWS_AS(tiny_random_mg(TinySpec{{5, 4}, {2, 2}, 3}, SplitRng(1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(tiny_random_mg(TinySpec{{2, 2}, {2, 2}, 9}, SplitRng(1)),
                    std::invalid_argument);
  Env env = tiny_random_mg(TinySpec{{2, 2}, {2, 2}, 3}, SplitRng(2));
  REQUIRE(validate_game(env.game).empty());
  // 2 agents x 2 states x 2 actions at T = 3: the full trajectory tree
  auto policies = uniform_tabular_policies(env.game, env.obs);
  const auto ensemble = enumerate_trajectories(env.game, env.obs, policies);
  REQUIRE(ensemble.trajectories.size() == 4096);
}

TEST_CASE("independent chains factorize under product policies") {
  const std::vector<double> mu0 = {0.7, 0.3};
  const std::vector<double> mu1 = {0.4, 0.6};
  // per-agent chains with action-dependent rows
  const std::vector<double> chain0 = {0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7};
  const std::vector<double> chain1 = {0.6, 0.4, 0.25, 0.75, 0.1, 0.9, 0.5, 0.5};
  Env env = independent_chains_mg(TinySpec{{2, 2}, {2, 2}, 3}, {mu0, mu1}, {chain0, chain1}, 3);
  PolicySet policies = uniform_tabular_policies(env.game, env.obs);
  SplitRng rng(3);
  for (auto& p : policies)
    for (auto& v : p.params()) v = rng.uniform(-1.0, 1.0);
  const auto dists = exact_distributions(env.game, env.obs, policies);
  // cross-check each marginal against a single-agent DP on the same local
  // chain; under product structure they must agree exactly
  for (int agent = 0; agent < 2; ++agent) {
    Env solo = tiny_table_mg(TinySpec{{2}, {2}, 3}, agent == 0 ? mu0 : mu1,
                             agent == 0 ? chain0 : chain1);
    PolicySet solo_policy;
    solo_policy.push_back(policies[agent]);
    const auto solo_dists = exact_distributions(solo.game, solo.obs, solo_policy);
    for (int k = 0; k < 2; ++k)
      REQUIRE(dists.marginals[agent][k] ==
              Catch::Approx(solo_dists.marginals[0][k]).margin(1e-12));
  }
}

TEST_CASE("heatmap export counts visits per cell") {
  Env env = open_grid(3, 2, 4);
  auto policies = uniform_tabular_policies(env.game, env.obs);
  const auto batch = sample_batch(env.game, env.obs, policies, 5, SplitRng(4));
  const std::string csv = heatmap_csv(env.game, batch, 0, 3);
  // 3 rows, comma-separated, total count equals 5 * 4 visits
  std::uint64_t total = 0;
  std::istringstream in(csv);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream cells(line);
    std::string cell;
    int cols = 0;
    while (std::getline(cells, cell, ',')) {
      ++cols;
      total += std::stoull(cell);
    }
    REQUIRE(cols == 3);
  }
  REQUIRE(rows == 3);
  REQUIRE(total == 20);
}
