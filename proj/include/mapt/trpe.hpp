#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mapt/markov_game.hpp"
#include "mapt/objectives.hpp"
#include "mapt/policy.hpp"
#include "mapt/rng.hpp"
#include "mapt/sampling.hpp"

namespace mapt {

/// One agent's view of a trajectory batch: its local observation features and
/// actions per step, plus one objective scalar zeta_1^n per trajectory. For
/// joint and mixture objectives the scalars are shared across agents.
struct SurrogateDataset {
  int num_trajectories = 0;
  int horizon = 0;
  int num_features = 0;                 // observation features per step
  std::vector<std::uint32_t> obs;       // [n * T * F + t * F + f]
  std::vector<std::int32_t> actions;    // [n * T + t]
  std::vector<double> objective_values; // zeta_1^n, one per trajectory

  std::span<const std::uint32_t> obs_at(int n, int t) const {
    return {obs.data() + (static_cast<std::size_t>(n) * horizon + t) * num_features,
            static_cast<std::size_t>(num_features)};
  }
};

struct TrpeConfig {
  ObjectiveKind kind;
  int batch_size = 10;           // trajectories per epoch (N)
  double kl_threshold = 6.0;     // trust-region delta
  double learning_rate = 1e-5;   // eta
  int max_offpolicy_iters = 20;
  int epochs = 10000;
  double log_weight_guard = 30.0;  // |log rho| above this excludes the trajectory
  std::uint64_t seed = 1;
};

inline void validate_trpe_config(const TrpeConfig& config) {
  if (config.batch_size < 1) throw std::invalid_argument("trpe: batch size must be >= 1");
  if (config.kl_threshold < 0.0) throw std::invalid_argument("trpe: kl threshold must be >= 0");
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("trpe: learning rate must be > 0");
  if (config.max_offpolicy_iters < 1)
    throw std::invalid_argument("trpe: max off-policy iters must be >= 1");
  if (config.epochs < 0) throw std::invalid_argument("trpe: epochs must be >= 0");
  if (!(config.log_weight_guard > 0.0))
    throw std::invalid_argument("trpe: log weight guard must be > 0");
}

/// Per-agent datasets for one collected batch. Each agent receives its own
/// local sequences; every agent's scalars are the given kind's single-trial
/// values (so a Disjoint(i) kind hands agent i's marginal entropy to all).
inline std::vector<SurrogateDataset> build_datasets(const MarkovGame& game,
                                                    const ObservationMap& obs,
                                                    const std::vector<Trajectory>& batch,
                                                    const ObjectiveKind& kind) {
  check_batch(batch);
  check_kind(game, kind);
  const int T = static_cast<int>(batch.front().states.size());
  const int N = static_cast<int>(batch.size());

  std::vector<double> values(N);
  for (int n = 0; n < N; ++n) values[n] = single_trial_value(game, batch[n], kind);

  std::vector<SurrogateDataset> datasets(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    auto& d = datasets[i];
    d.num_trajectories = N;
    d.horizon = T;
    d.num_features = obs.num_features(i);
    d.obs.resize(static_cast<std::size_t>(N) * T * d.num_features);
    d.actions.resize(static_cast<std::size_t>(N) * T);
    d.objective_values = values;
    for (int n = 0; n < N; ++n) {
      for (int t = 0; t < T; ++t) {
        const std::int64_t s = flat_state(game, batch[n].states[t]);
        const auto features = obs.features(i, s);
        std::copy(features.begin(), features.end(),
                  d.obs.begin() + (static_cast<std::size_t>(n) * T + t) * d.num_features);
        d.actions[static_cast<std::size_t>(n) * T + t] = batch[n].actions[t].locals[i];
      }
    }
  }
  return datasets;
}

struct SurrogateResult {
  double value = 0.0;
  std::vector<double> gradient;
  int excluded = 0;  // trajectories dropped by the log-weight guard
};

namespace detail {

/// Log-probabilities of the dataset's actions under a policy, per step.
inline std::vector<double> dataset_log_probs(const SurrogateDataset& data,
                                             const AgentPolicy& policy) {
  std::vector<double> logp(static_cast<std::size_t>(data.num_trajectories) * data.horizon);
  for (int n = 0; n < data.num_trajectories; ++n)
    for (int t = 0; t < data.horizon; ++t) {
      const std::size_t idx = static_cast<std::size_t>(n) * data.horizon + t;
      logp[idx] = policy.log_prob(data.obs_at(n, t), data.actions[idx]);
    }
  return logp;
}

/// Monte-Carlo surrogate and its gradient given precomputed behavior
/// log-probabilities. Importance weights are taken in log space; a
/// trajectory whose |log rho| exceeds the guard contributes nothing and is
/// counted in `excluded` (the 1/N normalization keeps all N trajectories).
inline SurrogateResult surrogate_with_behavior_logp(const SurrogateDataset& data,
                                                    const AgentPolicy& candidate,
                                                    std::span<const double> behavior_logp,
                                                    double log_weight_guard) {
  SurrogateResult result;
  result.gradient.assign(candidate.params().size(), 0.0);
  const int N = data.num_trajectories;
  const int T = data.horizon;
  std::vector<double> cand_logp(T);
  for (int n = 0; n < N; ++n) {
    double log_ratio = 0.0;
    for (int t = 0; t < T; ++t) {
      const std::size_t idx = static_cast<std::size_t>(n) * T + t;
      cand_logp[t] = candidate.log_prob(data.obs_at(n, t), data.actions[idx]);
      log_ratio += cand_logp[t] - behavior_logp[idx];
    }
    if (std::abs(log_ratio) > log_weight_guard) {
      result.excluded++;
      continue;
    }
    const double weight = std::exp(log_ratio);
    const double coeff = weight * data.objective_values[n] / N;
    result.value += coeff;
    if (coeff != 0.0) {
      for (int t = 0; t < T; ++t) {
        const std::size_t idx = static_cast<std::size_t>(n) * T + t;
        candidate.add_grad_log_prob(data.obs_at(n, t), data.actions[idx], coeff,
                                    result.gradient);
      }
    }
  }
  return result;
}

}  // namespace detail

/// Monte-Carlo surrogate L^i(theta_h / theta_0) = (1/N) sum_n rho^n zeta_1^n
/// and its gradient with respect to the candidate parameters.
inline SurrogateResult surrogate_and_grad(const SurrogateDataset& data,
                                          const AgentPolicy& candidate,
                                          const AgentPolicy& behavior,
                                          double log_weight_guard = 30.0) {
  if (!candidate.same_architecture(behavior))
    throw std::invalid_argument("surrogate_and_grad: architecture mismatch");
  const auto behavior_logp = detail::dataset_log_probs(data, behavior);
  return detail::surrogate_with_behavior_logp(data, candidate, behavior_logp, log_weight_guard);
}

struct TrpeEpochMetrics {
  double mean_zeta1 = 0.0;    // batch mean of the optimized scalar
  double stderr_zeta1 = 0.0;
  double joint_entropy = 0.0;    // batch means of all three kinds, always logged
  double mixture_entropy = 0.0;  // nan when local spaces are heterogeneous
  std::vector<double> disjoint_entropy;  // per agent
  double kl_at_stop = 0.0;       // mean over agents of the committed KL
  double inner_iters = 0.0;      // mean over agents
  int excluded_weights = 0;      // total over agents and iterations
};

namespace detail {

struct InnerAscentResult {
  AgentPolicy committed;
  double kl_at_stop = 0.0;
  int iters = 0;
  int excluded = 0;
};

/// Gradient ascent inside the KL ball: iterates theta_{h+1} = theta_h + eta g
/// and commits the last iterate whose KL against theta_0 stays within the
/// threshold; the iterate that crosses the boundary is discarded.
inline InnerAscentResult trust_region_ascent(const SurrogateDataset& data,
                                             const AgentPolicy& behavior,
                                             double kl_threshold, double learning_rate,
                                             int max_iters, double log_weight_guard) {
  InnerAscentResult result{behavior, 0.0, 0, 0};
  const auto behavior_logp = dataset_log_probs(data, behavior);
  AgentPolicy candidate = behavior;
  for (int h = 0; h < max_iters; ++h) {
    auto sg = surrogate_with_behavior_logp(data, candidate, behavior_logp, log_weight_guard);
    result.excluded += sg.excluded;
    auto& params = candidate.params();
    for (std::size_t p = 0; p < params.size(); ++p)
      params[p] += learning_rate * sg.gradient[p];
    for (double v : params)
      if (!std::isfinite(v))
        throw std::runtime_error("trpe: non-finite policy parameters during inner ascent");
    const double kl = policy_kl(candidate, behavior, data.obs);
    if (kl > kl_threshold) break;
    result.committed = candidate;
    result.kl_at_stop = kl;
    result.iters = h + 1;
  }
  return result;
}

}  // namespace detail

/// One TRPE epoch: collect a batch under the current joint policy, build the
/// per-agent datasets and run every agent's trust-region ascent on its own
/// parameters. With a Disjoint kind each agent ascends the entropy of its own
/// marginal; Joint/Mixture hand every agent the same shared scalar.
inline std::pair<PolicySet, TrpeEpochMetrics> trpe_epoch(const MarkovGame& game,
                                                         const ObservationMap& obs,
                                                         PolicySet policies,
                                                         const TrpeConfig& config,
                                                         const SplitRng& rng) {
  validate_trpe_config(config);
  check_kind(game, config.kind);
  const auto batch = sample_batch(game, obs, policies, config.batch_size, rng);

  TrpeEpochMetrics metrics;
  const int N = static_cast<int>(batch.size());
  metrics.disjoint_entropy.assign(game.num_agents, 0.0);
  bool uniform_spaces = true;
  for (auto s : game.local_state_sizes)
    if (s != game.local_state_sizes.front()) uniform_spaces = false;

  // per-trajectory single-trial values, computed once
  std::vector<double> joint_values(N), mixture_values(N, std::nan(""));
  std::vector<std::vector<double>> disjoint_values(game.num_agents, std::vector<double>(N));
  for (int n = 0; n < N; ++n) {
    joint_values[n] = single_trial_value(game, batch[n], ObjectiveKind::joint());
    if (uniform_spaces)
      mixture_values[n] = single_trial_value(game, batch[n], ObjectiveKind::mixture());
    for (int i = 0; i < game.num_agents; ++i)
      disjoint_values[i][n] = single_trial_value(game, batch[n], ObjectiveKind::disjoint(i));
  }
  {
    std::vector<double> optimized(N, 0.0);
    for (int n = 0; n < N; ++n) {
      metrics.joint_entropy += joint_values[n] / N;
      if (uniform_spaces) metrics.mixture_entropy += mixture_values[n] / N;
      for (int i = 0; i < game.num_agents; ++i)
        metrics.disjoint_entropy[i] += disjoint_values[i][n] / N;
      switch (config.kind.variant) {
        case ObjectiveKind::Variant::kJoint: optimized[n] = joint_values[n]; break;
        case ObjectiveKind::Variant::kMixture: optimized[n] = mixture_values[n]; break;
        case ObjectiveKind::Variant::kDisjoint: {
          // simultaneous own-marginal ascent; report the cross-agent mean
          double mean = 0.0;
          for (int i = 0; i < game.num_agents; ++i)
            mean += disjoint_values[i][n] / game.num_agents;
          optimized[n] = mean;
          break;
        }
      }
    }
    if (!uniform_spaces) metrics.mixture_entropy = std::nan("");
    for (double v : optimized) metrics.mean_zeta1 += v / N;
    if (N > 1) {
      double ss = 0.0;
      for (double v : optimized) ss += (v - metrics.mean_zeta1) * (v - metrics.mean_zeta1);
      metrics.stderr_zeta1 = std::sqrt(ss / (N - 1) / N);
    }
  }

  std::vector<SurrogateDataset> datasets = build_datasets(game, obs, batch, config.kind);
  for (int i = 0; i < game.num_agents; ++i) {
    switch (config.kind.variant) {
      case ObjectiveKind::Variant::kJoint: datasets[i].objective_values = joint_values; break;
      case ObjectiveKind::Variant::kMixture:
        datasets[i].objective_values = mixture_values;
        break;
      case ObjectiveKind::Variant::kDisjoint:
        datasets[i].objective_values = disjoint_values[i];
        break;
    }
  }

  for (int i = 0; i < game.num_agents; ++i) {
    auto result = detail::trust_region_ascent(datasets[i], policies[i], config.kl_threshold,
                                              config.learning_rate, config.max_offpolicy_iters,
                                              config.log_weight_guard);
    policies[i] = std::move(result.committed);
    metrics.kl_at_stop += result.kl_at_stop / game.num_agents;
    metrics.inner_iters += static_cast<double>(result.iters) / game.num_agents;
    metrics.excluded_weights += result.excluded;
  }
  return {std::move(policies), std::move(metrics)};
}

struct TrpeEpochRow {
  int epoch = 0;
  TrpeEpochMetrics metrics;
};

struct TrpeRunResult {
  PolicySet policies;
  std::vector<TrpeEpochRow> log;
};

/// Full TRPE run: config.epochs epochs, epoch e drawing its batch from
/// SplitRng(seed).substream(1 + e). Single-trial values of all three
/// objective kinds are logged every epoch regardless of the optimized kind.
inline TrpeRunResult run_trpe(const MarkovGame& game, const ObservationMap& obs,
                              PolicySet initial_policies, const TrpeConfig& config) {
  validate_trpe_config(config);
  check_compatible(initial_policies, game, obs);
  TrpeRunResult result;
  result.policies = std::move(initial_policies);
  result.log.reserve(config.epochs);
  const SplitRng master(config.seed);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    try {
      auto [updated, metrics] =
          trpe_epoch(game, obs, std::move(result.policies), config, master.substream(epoch));
      result.policies = std::move(updated);
      result.log.push_back({epoch, std::move(metrics)});
    } catch (const std::runtime_error& err) {
      throw std::runtime_error("trpe: aborted at epoch " + std::to_string(epoch) + ": " +
                               err.what());
    }
  }
  return result;
}

}  // namespace mapt
