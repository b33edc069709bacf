#include <catch2/catch_amalgamated.hpp>

#include "mapt/distribution.hpp"
#include "mapt/envs.hpp"
#include "mapt/oracle.hpp"
#include "mapt/sampling.hpp"

using namespace mapt;

namespace {

Trajectory make_trajectory(const MarkovGame& game, const std::vector<std::int64_t>& flat_states) {
  Trajectory traj;
  for (auto s : flat_states) {
    traj.states.push_back(unflatten_state(game, s));
    JointAction a;
    a.locals.assign(game.num_agents, 0);
    traj.actions.push_back(a);
  }
  return traj;
}

Env two_agent_env(int horizon = 2) {
  return tiny_random_mg(TinySpec{{2, 2}, {2, 2}, horizon}, SplitRng(9));
}

}  // namespace

TEST_CASE("empirical_joint counts states across the batch") {
  Env env = two_agent_env(3);
  const std::int64_t g = 2;
  const auto traj = make_trajectory(env.game, {g, g, g});
  const auto dist = empirical_joint(env.game, {traj});
  REQUIRE(dist.total == 3);
  REQUIRE(dist.counts.at(g) == 3);

  Env env2 = two_agent_env(2);
  const std::int64_t h = 1;
  const auto t1 = make_trajectory(env2.game, {g, h});
  const auto t2 = make_trajectory(env2.game, {h, h});
  const auto pooled = empirical_joint(env2.game, {t1, t2});
  REQUIRE(pooled.total == 4);
  REQUIRE(pooled.counts.at(g) == 1);
  REQUIRE(pooled.counts.at(h) == 3);
}

TEST_CASE("empirical totals are K*T") {
  Env env = secret_room();
  auto policies = uniform_tabular_policies(env.game, env.obs);
  const auto batch = sample_batch(env.game, env.obs, policies, 10, SplitRng(2));
  REQUIRE(empirical_joint(env.game, batch).total == 500);
  REQUIRE(empirical_marginal(env.game, batch, 0).total == 500);
  REQUIRE(empirical_mixture(env.game, batch).total == 1000);
}

TEST_CASE("empirical_marginal projects one agent") {
  Env env = two_agent_env(2);
  // joint flat = s0 + 2*s1; agent 0 at 1 then 0, agent 1 pinned at 1
  const auto traj = make_trajectory(env.game, {1 + 2 * 1, 0 + 2 * 1});
  const auto m0 = empirical_marginal(env.game, {traj}, 0);
  REQUIRE(m0.counts.at(0) == 1);
  REQUIRE(m0.counts.at(1) == 1);
  const auto m1 = empirical_marginal(env.game, {traj}, 1);
  REQUIRE(m1.counts.at(1) == 2);
  REQUIRE_THROWS_AS(empirical_marginal(env.game, {traj}, 2), std::out_of_range);
}

TEST_CASE("swapping agents preserves marginals in symmetric trajectories") {
  Env env = two_agent_env(2);
  // step 1: (0,1); step 2: (1,0) -- the agents exchange local states
  const auto traj = make_trajectory(env.game, {0 + 2 * 1, 1 + 2 * 0});
  const auto m0 = empirical_marginal(env.game, {traj}, 0);
  const auto m1 = empirical_marginal(env.game, {traj}, 1);
  REQUIRE(m0.counts == m1.counts);
}

TEST_CASE("empirical_mixture pools per-agent counts") {
  Env env = two_agent_env(4);
  // agent 0 fixed at local 0, agent 1 fixed at local 1
  const std::int64_t s = 0 + 2 * 1;
  const auto traj = make_trajectory(env.game, {s, s, s, s});
  const auto mix = empirical_mixture(env.game, {traj});
  REQUIRE(mix.total == 8);
  REQUIRE(mix.probability(0) == Catch::Approx(0.5));
  REQUIRE(mix.probability(1) == Catch::Approx(0.5));
}

TEST_CASE("mixture equals the sum of marginal count maps") {
  Env env = tiny_random_mg(TinySpec{{2, 2, 2}, {2, 2, 2}, 3}, SplitRng(12));
  auto policies = uniform_tabular_policies(env.game, env.obs);
  const auto batch = sample_batch(env.game, env.obs, policies, 5, SplitRng(3));
  const auto mix = empirical_mixture(env.game, batch);
  EmpiricalDistribution pooled;
  for (int i = 0; i < 3; ++i)
    for (const auto& [element, count] : empirical_marginal(env.game, batch, i).counts)
      pooled.add(element, count);
  REQUIRE(mix.counts == pooled.counts);
  REQUIRE(mix.total == pooled.total);
}

TEST_CASE("mixture rejects heterogeneous local spaces") {
  Env env = tiny_random_mg(TinySpec{{3, 2}, {2, 2}, 2}, SplitRng(13));
  auto policies = uniform_tabular_policies(env.game, env.obs);
  const auto batch = sample_batch(env.game, env.obs, policies, 2, SplitRng(4));
  REQUIRE_THROWS_AS(empirical_mixture(env.game, batch), std::invalid_argument);
}

TEST_CASE("plugin entropy on frozen examples") {
  EmpiricalDistribution uniform4;
  for (int k = 0; k < 4; ++k) uniform4.add(k);
  REQUIRE(plugin_entropy(uniform4) == Catch::Approx(std::log(4.0)).margin(1e-12));

  EmpiricalDistribution point;
  point.add(7, 5);
  REQUIRE(plugin_entropy(point) == 0.0);

  EmpiricalDistribution skew;
  skew.add(0, 3);
  skew.add(1, 1);
  REQUIRE(plugin_entropy(skew) == Catch::Approx(0.562335).margin(5e-7));

  EmpiricalDistribution empty;
  REQUIRE_THROWS_AS(plugin_entropy(empty), std::invalid_argument);
}

TEST_CASE("plugin entropy stays within [0, log support]") {
  SplitRng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    EmpiricalDistribution dist;
    const int support = 1 + static_cast<int>(rng.next_u64() % 6);
    for (int k = 0; k < support; ++k) dist.add(k, 1 + rng.next_u64() % 9);
    const double h = plugin_entropy(dist);
    REQUIRE(h >= 0.0);
    REQUIRE(h <= std::log(static_cast<double>(support)) + 1e-12);
  }
  EmpiricalDistribution uniform;
  for (int k = 0; k < 5; ++k) uniform.add(k, 3);
  REQUIRE(plugin_entropy(uniform) == Catch::Approx(std::log(5.0)).margin(1e-12));
}

TEST_CASE("kl divergence on frozen examples") {
  const double p[2] = {1.0, 0.0};
  const double q[2] = {0.5, 0.5};
  REQUIRE(kl_divergence(p, q) == Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(kl_divergence(q, q) == 0.0);
  REQUIRE_THROWS_AS(kl_divergence(q, p), std::domain_error);
}

TEST_CASE("exact distributions: degenerate and symmetric cases") {
  // one-state game
  Env point = tiny_table_mg(TinySpec{{1}, {2}, 3}, {1.0}, {1.0, 1.0});
  auto point_policies = uniform_tabular_policies(point.game, point.obs);
  const auto point_dists = exact_distributions(point.game, point.obs, point_policies);
  REQUIRE(point_dists.joint[0] == Catch::Approx(1.0));
  REQUIRE(plugin_entropy(point_dists.joint) == 0.0);

  // symmetric two-state random walk approaches (0.5, 0.5) within 1/T
  const int T = 64;
  Env walk = tiny_table_mg(TinySpec{{2}, {2}, 4}, {1.0, 0.0},
                           {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  walk.game.horizon = T;
  auto walk_policies = uniform_tabular_policies(walk.game, walk.obs);
  const auto walk_dists = exact_distributions(walk.game, walk.obs, walk_policies);
  REQUIRE(std::abs(walk_dists.joint[0] - 0.5) <= 1.0 / T);
  REQUIRE(std::abs(walk_dists.joint[1] - 0.5) <= 1.0 / T);
}

TEST_CASE("exact distributions match full trajectory enumeration") {
  Env env = two_agent_env(3);
  PolicySet policies = uniform_tabular_policies(env.game, env.obs);
  SplitRng rng(31);
  for (auto& p : policies)
    for (auto& v : p.params()) v = rng.uniform(-1.5, 1.5);
  const auto dists = exact_distributions(env.game, env.obs, policies);
  const auto ensemble = enumerate_trajectories(env.game, env.obs, policies);
  std::vector<double> from_ensemble(env.game.num_states(), 0.0);
  for (std::size_t k = 0; k < ensemble.trajectories.size(); ++k)
    for (const auto& s : ensemble.trajectories[k].states)
      from_ensemble[flat_state(env.game, s)] +=
          ensemble.probabilities[k] / env.game.horizon;
  for (std::int64_t s = 0; s < env.game.num_states(); ++s)
    REQUIRE(dists.joint[s] == Catch::Approx(from_ensemble[s]).margin(1e-12));
}

TEST_CASE("exact joint marginalizes to exact marginals") {
  Env env = tiny_random_mg(TinySpec{{2, 2, 2}, {2, 2, 2}, 4}, SplitRng(14));
  PolicySet policies = uniform_tabular_policies(env.game, env.obs);
  SplitRng rng(15);
  for (auto& p : policies)
    for (auto& v : p.params()) v = rng.uniform(-1.0, 1.0);
  const auto dists = exact_distributions(env.game, env.obs, policies);
  for (int agent = 0; agent < 3; ++agent) {
    std::vector<double> manual(2, 0.0);
    for (std::int64_t s = 0; s < env.game.num_states(); ++s)
      manual[unflatten_state(env.game, s).locals[agent]] += dists.joint[s];
    for (int k = 0; k < 2; ++k)
      REQUIRE(dists.marginals[agent][k] == Catch::Approx(manual[k]).margin(1e-12));
  }
  // mixture is the entrywise mean of marginals
  for (int k = 0; k < 2; ++k) {
    double mean = 0.0;
    for (int agent = 0; agent < 3; ++agent) mean += dists.marginals[agent][k] / 3.0;
    REQUIRE((*dists.mixture)[k] == Catch::Approx(mean).margin(1e-12));
  }
}

TEST_CASE("the DP guard rejects oversized games") {
  Env env = two_agent_env(2);
  auto policies = uniform_tabular_policies(env.game, env.obs);
  REQUIRE_THROWS_WITH(exact_distributions(env.game, env.obs, policies, 8),
                      Catch::Matchers::ContainsSubstring("exact ops unavailable"));
}

TEST_CASE("monte-carlo joint converges to the exact joint") {
  Env env = two_agent_env(3);
  PolicySet policies = uniform_tabular_policies(env.game, env.obs);
  SplitRng rng(41);
  for (auto& p : policies)
    for (auto& v : p.params()) v = rng.uniform(-1.0, 1.0);
  const auto exact = exact_distributions(env.game, env.obs, policies);
  const int K = 10000;
  const auto batch = sample_batch(env.game, env.obs, policies, K, SplitRng(42));
  const auto empirical = empirical_joint(env.game, batch);
  double l1 = 0.0;
  for (std::int64_t s = 0; s < env.game.num_states(); ++s)
    l1 += std::abs(empirical.probability(s) - exact.joint[s]);
  const double bound = 2.0 * std::sqrt(2.0 * env.game.num_states() *
                                       std::log(2.0 * env.game.horizon) / K);
  REQUIRE(l1 < bound);
}
