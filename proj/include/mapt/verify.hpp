#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mapt/csv.hpp"
#include "mapt/envs.hpp"
#include "mapt/objectives.hpp"
#include "mapt/oracle.hpp"
#include "mapt/policy.hpp"
#include "mapt/sampling.hpp"
#include "mapt/trpe.hpp"

namespace mapt {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace verify_detail {

inline std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

inline PolicySet random_tabular_policies(const MarkovGame& game, const ObservationMap& obs,
                                         SplitRng rng, double logit_range = 2.0) {
  PolicySet set = uniform_tabular_policies(game, obs);
  for (auto& policy : set)
    for (auto& v : policy.params()) v = rng.uniform(-logit_range, logit_range);
  return set;
}

inline Env chain_fixture(int num_agents, SplitRng rng) {
  TinySpec spec;
  spec.state_sizes.assign(num_agents, 2);
  spec.action_sizes.assign(num_agents, 2);
  spec.horizon = 3;
  return tiny_random_mg(spec, rng);
}

}  // namespace verify_detail

/// Lemma-style ordering of the infinite-trials objectives over random
/// (game, policy) pairs with 2 and 3 agents.
inline CheckResult check_entropy_chain(int pairs = 100) {
  using namespace verify_detail;
  const SplitRng root(20240601);
  double worst = 1e9;
  for (int j = 0; j < pairs; ++j) {
    const int agents = 2 + (j % 2);
    Env env = chain_fixture(agents, root.substream(2 * j));
    const auto policies = random_tabular_policies(env.game, env.obs, root.substream(2 * j + 1));
    const EntropyChain chain = entropy_chain(env.game, env.obs, policies);
    for (double s : chain.slack) worst = std::min(worst, s);
    if (!chain.holds())
      return {"entropy_chain", false,
              fmt("violated at pair %g, min slack %.3e", j, worst)};
  }
  return {"entropy_chain", true, fmt("%g pairs, min slack %.3e >= -1e-9", pairs, worst)};
}

/// H(mixture) = avg entropy + avg KL on the same corpus.
inline CheckResult check_mixture_decomposition(int pairs = 100) {
  using namespace verify_detail;
  const SplitRng root(20240602);
  double worst = 0.0;
  for (int j = 0; j < pairs; ++j) {
    const int agents = 2 + (j % 2);
    Env env = chain_fixture(agents, root.substream(2 * j));
    const auto policies = random_tabular_policies(env.game, env.obs, root.substream(2 * j + 1));
    const MixtureDecomposition mix = mixture_decomposition(env.game, env.obs, policies);
    worst = std::max(worst, std::abs(mix.residual()));
  }
  const bool pass = worst <= 1e-9;
  return {"mixture_decomposition", pass, fmt("%g pairs, max |residual| %.3e", pairs, worst)};
}

/// Importance-sampling identity: the exact surrogate of a perturbed candidate
/// equals the exact objective of the candidate joined with the behavior
/// co-players, and the Monte-Carlo surrogate at N = 1e4 agrees within 3
/// standard errors.
inline CheckResult check_is_unbiasedness(int perturbations = 50) {
  using namespace verify_detail;
  const SplitRng root(20240603);
  Env env = chain_fixture(2, root.substream(0));
  const ObjectiveKind kinds[3] = {ObjectiveKind::joint(), ObjectiveKind::disjoint(0),
                                  ObjectiveKind::mixture()};
  double worst = 0.0;
  for (int j = 0; j < perturbations; ++j) {
    const auto behavior = random_tabular_policies(env.game, env.obs, root.substream(10 + 2 * j));
    SplitRng perturb = root.substream(11 + 2 * j);
    const int agent = j % 2;
    AgentPolicy candidate = behavior[agent];
    for (auto& v : candidate.params()) v += perturb.uniform(-0.5, 0.5);
    const ObjectiveKind kind = kinds[j % 3];
    const double surrogate = exact_surrogate(env.game, env.obs, behavior, agent, candidate, kind);
    PolicySet joined = behavior;
    joined[agent] = candidate;
    const double direct = exact_single_trial_objective(env.game, env.obs, joined, kind);
    worst = std::max(worst, std::abs(surrogate - direct));
    if (worst > 1e-9)
      return {"is_unbiasedness", false, fmt("exact identity off by %.3e", worst)};
  }

  // Monte-Carlo corroboration on one fixed perturbation
  const auto behavior = random_tabular_policies(env.game, env.obs, root.substream(1));
  AgentPolicy candidate = behavior[0];
  {
    SplitRng perturb = root.substream(2);
    for (auto& v : candidate.params()) v += perturb.uniform(-0.5, 0.5);
  }
  const ObjectiveKind kind = ObjectiveKind::joint();
  const double exact = exact_surrogate(env.game, env.obs, behavior, 0, candidate, kind);
  const int n = 10000;
  const auto batch = sample_batch(env.game, env.obs, behavior, n, root.substream(3));
  const auto datasets = build_datasets(env.game, env.obs, batch, kind);
  const auto behavior_logp = detail::dataset_log_probs(datasets[0], behavior[0]);
  std::vector<double> terms(n);
  for (int k = 0; k < n; ++k) {
    double log_ratio = 0.0;
    for (int t = 0; t < datasets[0].horizon; ++t) {
      const std::size_t idx = static_cast<std::size_t>(k) * datasets[0].horizon + t;
      log_ratio +=
          candidate.log_prob(datasets[0].obs_at(k, t), datasets[0].actions[idx]) -
          behavior_logp[idx];
    }
    terms[k] = std::exp(log_ratio) * datasets[0].objective_values[k];
  }
  const MeanCi mc = mean_ci95(terms);
  double stderr_mean = 0.0;
  {
    double ss = 0.0;
    for (double v : terms) ss += (v - mc.mean) * (v - mc.mean);
    stderr_mean = std::sqrt(ss / (n - 1) / n);
  }
  const double gap = std::abs(mc.mean - exact);
  const bool pass = gap <= 3.0 * stderr_mean;
  return {"is_unbiasedness", pass,
          fmt("exact identity max %.3e; MC gap %.3e vs 3*stderr %.3e", worst, gap,
              3.0 * stderr_mean)};
}

namespace verify_detail {

inline SurrogateDataset random_dataset(const AgentPolicy& policy, int trajectories, int horizon,
                                       SplitRng rng) {
  SurrogateDataset data;
  data.num_trajectories = trajectories;
  data.horizon = horizon;
  data.num_features = static_cast<int>(policy.feature_sizes().size());
  data.obs.resize(static_cast<std::size_t>(trajectories) * horizon * data.num_features);
  data.actions.resize(static_cast<std::size_t>(trajectories) * horizon);
  data.objective_values.resize(trajectories);
  for (auto& v : data.objective_values) v = rng.uniform(0.0, 2.0);
  std::size_t o = 0;
  for (int n = 0; n < trajectories; ++n)
    for (int t = 0; t < horizon; ++t) {
      for (int f = 0; f < data.num_features; ++f)
        data.obs[o++] = static_cast<std::uint32_t>(rng.next_u64() % policy.feature_sizes()[f]);
      data.actions[static_cast<std::size_t>(n) * horizon + t] =
          static_cast<std::int32_t>(rng.next_u64() % policy.num_actions());
    }
  return data;
}

inline double surrogate_grad_max_rel_error(const AgentPolicy& prototype, SplitRng case_rng) {
  AgentPolicy behavior = prototype;
  for (auto& v : behavior.params()) v += case_rng.uniform(-0.4, 0.4);
  AgentPolicy candidate = behavior;
  for (auto& v : candidate.params()) v += case_rng.uniform(-0.2, 0.2);
  const SurrogateDataset data = random_dataset(prototype, 4, 3, case_rng.substream(1));

  const auto analytic = surrogate_and_grad(data, candidate, behavior);
  auto value_of = [&](std::span<const double> theta) {
    AgentPolicy probe = candidate;
    probe.params().assign(theta.begin(), theta.end());
    return surrogate_and_grad(data, probe, behavior).value;
  };
  const auto fd = finite_difference_gradient(value_of, candidate.params(), 1e-5);
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < fd.size(); ++p) {
    num += (analytic.gradient[p] - fd[p]) * (analytic.gradient[p] - fd[p]);
    den += fd[p] * fd[p];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace verify_detail

/// Analytic surrogate gradients against central finite differences for both
/// policy classes.
inline CheckResult check_gradients(int cases_per_class = 100) {
  using namespace verify_detail;
  const SplitRng root(20240604);
  double worst = 0.0;
  for (int j = 0; j < cases_per_class; ++j) {
    const AgentPolicy tab = AgentPolicy::tabular({3, 2}, 3);
    worst = std::max(worst, surrogate_grad_max_rel_error(tab, root.substream(j)));
  }
  for (int j = 0; j < cases_per_class; ++j) {
    SplitRng init = root.substream(1000 + j);
    const AgentPolicy net = AgentPolicy::mlp({3, 2}, 3, {6, 5}, init);
    worst = std::max(worst, surrogate_grad_max_rel_error(net, root.substream(2000 + j)));
  }
  const bool pass = worst <= 1e-5;
  return {"gradient_check", pass,
          fmt("%g cases per class, max rel error %.3e", cases_per_class, worst)};
}

/// Finite-trial concentration: the mean mismatch |F(d_K) - zeta_inf| over 20
/// reps shrinks along K in {1,4,16,64} (at most one inversion within one
/// stderr), K=64 beats K=1 for every kind, and the mixture mismatch sits
/// below the joint mismatch for most K (the 1/sqrt(N) effect).
inline CheckResult check_concentration_trend() {
  using namespace verify_detail;
  const SplitRng root(20240605);
  Env env = chain_fixture(2, root.substream(0));
  const auto policies = random_tabular_policies(env.game, env.obs, root.substream(1), 1.0);
  const int ks[4] = {1, 4, 16, 64};
  const int reps = 20;
  const ObjectiveKind kinds[3] = {ObjectiveKind::joint(), ObjectiveKind::disjoint(0),
                                  ObjectiveKind::mixture()};
  double mean_mismatch[3][4];
  double stderr_mismatch[3][4];
  for (int kind_i = 0; kind_i < 3; ++kind_i) {
    const double exact = infinite_trial_value(env.game, env.obs, policies, kinds[kind_i]);
    for (int k_i = 0; k_i < 4; ++k_i) {
      std::vector<double> mismatch(reps);
      for (int r = 0; r < reps; ++r) {
        const auto group = sample_batch(env.game, env.obs, policies, ks[k_i],
                                        root.substream(100 + kind_i * 1000 + k_i * 100 + r));
        mismatch[r] =
            std::abs(plugin_entropy(group_distribution(env.game, group, kinds[kind_i])) - exact);
      }
      double mean = 0.0;
      for (double v : mismatch) mean += v / reps;
      double ss = 0.0;
      for (double v : mismatch) ss += (v - mean) * (v - mean);
      mean_mismatch[kind_i][k_i] = mean;
      stderr_mismatch[kind_i][k_i] = std::sqrt(ss / (reps - 1) / reps);
    }
  }
  for (int kind_i = 0; kind_i < 3; ++kind_i) {
    int inversions = 0;
    for (int k_i = 0; k_i + 1 < 4; ++k_i) {
      const double rise = mean_mismatch[kind_i][k_i + 1] - mean_mismatch[kind_i][k_i];
      if (rise > 0.0) {
        const double allowance = std::sqrt(stderr_mismatch[kind_i][k_i] * stderr_mismatch[kind_i][k_i] +
                                           stderr_mismatch[kind_i][k_i + 1] * stderr_mismatch[kind_i][k_i + 1]);
        if (rise > allowance || ++inversions > 1)
          return {"concentration_trend", false,
                  fmt("kind %g not non-increasing: rise %.3e", kind_i, rise)};
      }
    }
    if (!(mean_mismatch[kind_i][3] < mean_mismatch[kind_i][0]))
      return {"concentration_trend", false, fmt("kind %g: K=64 not below K=1", kind_i)};
  }
  int mixture_wins = 0;
  for (int k_i = 0; k_i < 4; ++k_i)
    if (mean_mismatch[2][k_i] < mean_mismatch[0][k_i]) mixture_wins++;
  const bool pass = mixture_wins >= 3;
  return {"concentration_trend", pass,
          fmt("monotone per kind; mixture < joint at %g of 4 K values", mixture_wins)};
}

/// zeta_1 <= zeta_inf for the entropy functional on enumerable fixtures.
inline CheckResult check_finite_trial_pessimism(int games = 50) {
  using namespace verify_detail;
  const SplitRng root(20240606);
  double worst = -1e9;
  for (int j = 0; j < games; ++j) {
    Env env = chain_fixture(2, root.substream(2 * j));
    const auto policies = random_tabular_policies(env.game, env.obs, root.substream(2 * j + 1));
    const auto ensemble = enumerate_trajectories(env.game, env.obs, policies);
    const ObjectiveKind kinds[3] = {ObjectiveKind::joint(), ObjectiveKind::disjoint(j % 2),
                                    ObjectiveKind::mixture()};
    for (const auto& kind : kinds) {
      double zeta1 = 0.0;
      for (std::size_t k = 0; k < ensemble.trajectories.size(); ++k)
        zeta1 += ensemble.probabilities[k] *
                 single_trial_value(env.game, ensemble.trajectories[k], kind);
      const double zeta_inf = infinite_trial_value(env.game, env.obs, policies, kind);
      worst = std::max(worst, zeta1 - zeta_inf);
    }
  }
  const bool pass = worst <= 1e-9;
  return {"finite_trial_pessimism", pass,
          fmt("%g games x 3 kinds, max (zeta1 - zeta_inf) = %.3e", games, worst)};
}

/// Exact-gradient independent ascent is monotone on a tiny game with
/// centralized tabular policies.
inline CheckResult check_pga_monotonicity(int steps = 200, double learning_rate = 0.05) {
  using namespace verify_detail;
  const SplitRng root(20240607);
  Env env = chain_fixture(2, root.substream(0));
  const ObservationMap joint_obs = joint_state_observation(env.game);
  auto policies = random_tabular_policies(env.game, joint_obs, root.substream(1), 0.5);
  const auto curve = independent_pga(env.game, joint_obs, policies, ObjectiveKind::joint(),
                                     learning_rate, steps);
  double worst_drop = 0.0;
  for (std::size_t s = 0; s + 1 < curve.size(); ++s)
    worst_drop = std::min(worst_drop, curve[s + 1] - curve[s]);
  const bool pass = worst_drop >= -1e-8;
  return {"pga_monotonicity", pass,
          fmt("%g steps, worst per-step change %.3e, final value %.6f", steps, worst_drop,
              curve.back())};
}

/// The documented bound-calculator row: L=1, T=50, |S|=100, delta=0.1, K=10.
inline CheckResult check_bound_value() {
  const double bound =
      mismatch_bound(ObjectiveKind::joint(), 1.0, 50, 100, 10, 2, 0.1);
  const double reference = 50.0 * std::sqrt(20.0 * std::log(1000.0));
  const bool pass = std::abs(bound - reference) <= 1e-9 && std::abs(bound - 587.72) <= 0.05;
  return {"bound_value", pass, verify_detail::fmt("bound(L=1,T=50,|S|=100,d=0.1,K=10) = %.2f", bound)};
}

/// Stochasticity/shape validation over the standard fixtures. With
/// inject_fault set, one dense transition row is deliberately broken to
/// demonstrate the failure path.
inline CheckResult check_fixture_validation(bool inject_fault = false) {
  using namespace verify_detail;
  const SplitRng root(20240608);
  std::vector<std::string> problems;
  for (int j = 0; j < 5; ++j) {
    Env env = chain_fixture(2 + (j % 2), root.substream(j));
    if (inject_fault && j == 2) {
      auto& dense = std::get<DenseTransitions>(env.game.transition);
      dense.table[0] *= 0.9;
    }
    const auto report = validate_game(env.game);
    for (const auto& msg : report) problems.push_back(msg);
  }
  {
    Env env = secret_room();
    const auto report = validate_game(env.game);
    for (const auto& msg : report) problems.push_back(msg);
  }
  {
    Env env = open_grid(5, 2, 25);
    const auto report = validate_game(env.game);
    for (const auto& msg : report) problems.push_back(msg);
  }
  if (!problems.empty()) return {"fixture_validation", false, problems.front()};
  return {"fixture_validation", true, "all fixtures valid"};
}

/// The full property battery driven by `verify`; every check is seeded and
/// deterministic.
inline std::vector<CheckResult> run_property_battery(bool inject_fault = false) {
  std::vector<CheckResult> results;
  results.push_back(check_entropy_chain());
  results.push_back(check_mixture_decomposition());
  results.push_back(check_is_unbiasedness());
  results.push_back(check_gradients());
  results.push_back(check_concentration_trend());
  results.push_back(check_finite_trial_pessimism());
  results.push_back(check_pga_monotonicity());
  results.push_back(check_bound_value());
  results.push_back(check_fixture_validation(inject_fault));
  return results;
}

}  // namespace mapt
