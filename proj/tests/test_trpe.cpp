#include <catch2/catch_amalgamated.hpp>

#include "mapt/envs.hpp"
#include "mapt/oracle.hpp"
#include "mapt/trpe.hpp"

using namespace mapt;

namespace {

Env fixture(int horizon = 3) {
  return tiny_random_mg(TinySpec{{2, 2}, {2, 2}, horizon}, SplitRng(30));
}

PolicySet randomized(const Env& env, std::uint64_t seed, double range = 1.0) {
  PolicySet policies = uniform_tabular_policies(env.game, env.obs);
  SplitRng rng(seed);
  for (auto& p : policies)
    for (auto& v : p.params()) v = rng.uniform(-range, range);
  return policies;
}

}  // namespace

TEST_CASE("joint datasets carry identical scalars for both agents") {
  Env env = fixture();
  auto policies = randomized(env, 1);
  const auto batch = sample_batch(env.game, env.obs, policies, 4, SplitRng(2));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  REQUIRE(datasets.size() == 2);
  REQUIRE(datasets[0].objective_values == datasets[1].objective_values);
  for (int n = 0; n < 4; ++n)
    REQUIRE(datasets[0].objective_values[n] ==
            Catch::Approx(single_trial_value(env.game, batch[n], ObjectiveKind::joint()))
                .margin(1e-12));
}

TEST_CASE("disjoint(0) datasets give every agent agent-0's marginal entropy") {
  Env env = fixture();
  auto policies = randomized(env, 3);
  const auto batch = sample_batch(env.game, env.obs, policies, 3, SplitRng(4));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::disjoint(0));
  for (int n = 0; n < 3; ++n) {
    const double expected = single_trial_value(env.game, batch[n], ObjectiveKind::disjoint(0));
    REQUIRE(datasets[0].objective_values[n] == Catch::Approx(expected).margin(1e-12));
    REQUIRE(datasets[1].objective_values[n] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("dataset local views match a hand-built batch") {
  Env env = fixture(2);
  auto policies = randomized(env, 5);
  const auto batch = sample_batch(env.game, env.obs, policies, 2, SplitRng(6));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::mixture());
  for (int i = 0; i < 2; ++i) {
    REQUIRE(datasets[i].num_trajectories == 2);
    REQUIRE(datasets[i].horizon == 2);
    for (int n = 0; n < 2; ++n)
      for (int t = 0; t < 2; ++t) {
        REQUIRE(datasets[i].obs_at(n, t)[0] ==
                static_cast<std::uint32_t>(batch[n].states[t].locals[i]));
        REQUIRE(datasets[i].actions[n * 2 + t] == batch[n].actions[t].locals[i]);
      }
  }
}

TEST_CASE("surrogate at the behavior policy equals the batch mean objective") {
  Env env = fixture();
  auto policies = randomized(env, 7);
  const auto batch = sample_batch(env.game, env.obs, policies, 8, SplitRng(8));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  const auto result = surrogate_and_grad(datasets[0], policies[0], policies[0]);
  double mean = 0.0;
  for (double v : datasets[0].objective_values) mean += v / 8;
  REQUIRE(result.value == Catch::Approx(mean).margin(1e-12));
  REQUIRE(result.excluded == 0);
}

TEST_CASE("zero objectives give zero surrogate and zero gradient") {
  Env env = fixture();
  auto policies = randomized(env, 9);
  const auto batch = sample_batch(env.game, env.obs, policies, 4, SplitRng(10));
  auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  for (auto& v : datasets[0].objective_values) v = 0.0;
  AgentPolicy candidate = policies[0];
  SplitRng rng(11);
  for (auto& v : candidate.params()) v += rng.uniform(-0.2, 0.2);
  const auto result = surrogate_and_grad(datasets[0], candidate, policies[0]);
  REQUIRE(result.value == 0.0);
  for (double g : result.gradient) REQUIRE(g == 0.0);
}

TEST_CASE("monte-carlo surrogate expectation matches the exact surrogate") {
  Env env = fixture();
  auto behavior = randomized(env, 12);
  AgentPolicy candidate = behavior[0];
  SplitRng rng(13);
  for (auto& v : candidate.params()) v += rng.uniform(-0.3, 0.3);

  const double exact =
      exact_surrogate(env.game, env.obs, behavior, 0, candidate, ObjectiveKind::joint());
  const int n = 20000;
  const auto batch = sample_batch(env.game, env.obs, behavior, n, SplitRng(14));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  const auto mc = surrogate_and_grad(datasets[0], candidate, behavior[0]);
  // loose 3-sigma-style band: per-trajectory terms are bounded by e^guard
  REQUIRE(mc.value == Catch::Approx(exact).margin(0.02));
  REQUIRE(mc.excluded == 0);
}

TEST_CASE("the log-weight guard excludes extreme trajectories and reports them") {
  Env env = fixture();
  auto policies = randomized(env, 15);
  const auto batch = sample_batch(env.game, env.obs, policies, 4, SplitRng(16));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  AgentPolicy candidate = policies[0];
  // push all mass onto action 0 (a uniform shift would cancel in the softmax)
  for (std::size_t p = 0; p < candidate.params().size(); p += 2) candidate.params()[p] += 30.0;
  const auto result = surrogate_and_grad(datasets[0], candidate, policies[0], 5.0);
  REQUIRE(result.excluded > 0);
}

TEST_CASE("a zero KL threshold commits the behavior policy unchanged") {
  Env env = fixture();
  auto policies = randomized(env, 17);
  TrpeConfig config;
  config.kind = ObjectiveKind::joint();
  config.batch_size = 4;
  config.kl_threshold = 0.0;
  config.learning_rate = 0.5;  // large on purpose; the ball still pins theta_0
  auto [updated, metrics] = trpe_epoch(env.game, env.obs, policies, config, SplitRng(18));
  for (int i = 0; i < 2; ++i) REQUIRE(updated[i].params() == policies[i].params());
  REQUIRE(metrics.inner_iters == 0.0);
  REQUIRE(metrics.kl_at_stop == 0.0);
}

TEST_CASE("one tiny step stays within one gradient step of the behavior policy") {
  Env env = fixture();
  auto policies = randomized(env, 19);
  TrpeConfig config;
  config.kind = ObjectiveKind::joint();
  config.batch_size = 4;
  config.max_offpolicy_iters = 1;
  config.learning_rate = 1e-7;
  auto [updated, metrics] = trpe_epoch(env.game, env.obs, policies, config, SplitRng(20));
  REQUIRE(metrics.inner_iters == 1.0);
  // recompute the expected single step for agent 0
  const auto batch = sample_batch(env.game, env.obs, policies, 4, SplitRng(20));
  const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  const auto sg = surrogate_and_grad(datasets[0], policies[0], policies[0]);
  for (std::size_t p = 0; p < policies[0].params().size(); ++p)
    REQUIRE(updated[0].params()[p] ==
            Catch::Approx(policies[0].params()[p] + 1e-7 * sg.gradient[p]).margin(1e-15));
}

TEST_CASE("committed policies respect the trust region") {
  Env env = fixture();
  auto policies = randomized(env, 21);
  TrpeConfig config;
  config.kind = ObjectiveKind::mixture();
  config.batch_size = 6;
  config.kl_threshold = 1e-3;
  config.learning_rate = 0.05;  // aggressive; forces boundary exits
  config.max_offpolicy_iters = 50;
  PolicySet current = policies;
  const SplitRng master(22);
  for (int epoch = 0; epoch < 5; ++epoch) {
    const auto before = current;
    auto [updated, metrics] = trpe_epoch(env.game, env.obs, current, config,
                                         master.substream(epoch));
    const auto batch = sample_batch(env.game, env.obs, before, 6, master.substream(epoch));
    const auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::mixture());
    for (int i = 0; i < 2; ++i)
      REQUIRE(policy_kl(updated[i], before[i], datasets[i].obs) <= config.kl_threshold);
    current = std::move(updated);
  }
}

TEST_CASE("agent updates are independent of evaluation order") {
  // run one epoch twice from the same state; updates only read the shared
  // batch and each agent's own parameters, so results must agree exactly
  Env env = fixture();
  auto policies = randomized(env, 23);
  TrpeConfig config;
  config.kind = ObjectiveKind::joint();
  config.batch_size = 5;
  config.learning_rate = 1e-3;
  auto [first, m1] = trpe_epoch(env.game, env.obs, policies, config, SplitRng(24));
  auto [second, m2] = trpe_epoch(env.game, env.obs, policies, config, SplitRng(24));
  for (int i = 0; i < 2; ++i) REQUIRE(first[i].params() == second[i].params());

  // manual sequential replay in reversed agent order
  const auto batch = sample_batch(env.game, env.obs, policies, 5, SplitRng(24));
  auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::joint());
  PolicySet reversed = policies;
  for (int i = 1; i >= 0; --i) {
    auto result = detail::trust_region_ascent(datasets[i], policies[i], config.kl_threshold,
                                              config.learning_rate, config.max_offpolicy_iters,
                                              config.log_weight_guard);
    reversed[i] = std::move(result.committed);
  }
  for (int i = 0; i < 2; ++i) REQUIRE(first[i].params() == reversed[i].params());
}

TEST_CASE("run_trpe with zero epochs returns the initial policies") {
  Env env = fixture();
  auto policies = randomized(env, 25);
  TrpeConfig config;
  config.kind = ObjectiveKind::joint();
  config.epochs = 0;
  const auto result = run_trpe(env.game, env.obs, policies, config);
  REQUIRE(result.log.empty());
  for (int i = 0; i < 2; ++i) REQUIRE(result.policies[i].params() == policies[i].params());
}

TEST_CASE("run_trpe logs zeros on a single-state game") {
  Env env = tiny_table_mg(TinySpec{{1, 1}, {2, 2}, 3}, {1.0}, std::vector<double>(4, 1.0));
  auto policies = uniform_tabular_policies(env.game, env.obs);
  TrpeConfig config;
  config.kind = ObjectiveKind::joint();
  config.epochs = 3;
  config.batch_size = 2;
  const auto result = run_trpe(env.game, env.obs, policies, config);
  REQUIRE(result.log.size() == 3);
  for (const auto& row : result.log) {
    REQUIRE(row.metrics.mean_zeta1 == 0.0);
    REQUIRE(row.metrics.joint_entropy == 0.0);
    REQUIRE(row.metrics.mixture_entropy == 0.0);
    for (double h : row.metrics.disjoint_entropy) REQUIRE(h == 0.0);
  }
}

TEST_CASE("disjoint training hands each agent its own marginal scalars") {
  Env env = fixture();
  auto policies = randomized(env, 26);
  TrpeConfig config;
  config.kind = ObjectiveKind::disjoint(0);
  config.batch_size = 4;
  config.learning_rate = 1e-3;
  config.max_offpolicy_iters = 1;
  auto [updated, metrics] = trpe_epoch(env.game, env.obs, policies, config, SplitRng(27));

  const auto batch = sample_batch(env.game, env.obs, policies, 4, SplitRng(27));
  auto datasets = build_datasets(env.game, env.obs, batch, ObjectiveKind::disjoint(1));
  const auto sg1 = surrogate_and_grad(datasets[1], policies[1], policies[1]);
  for (std::size_t p = 0; p < policies[1].params().size(); ++p)
    REQUIRE(updated[1].params()[p] ==
            Catch::Approx(policies[1].params()[p] + 1e-3 * sg1.gradient[p]).margin(1e-12));
}
