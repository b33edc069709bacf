#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mapt/envs.hpp"
#include "mapt/markov_game.hpp"
#include "mapt/mlp.hpp"
#include "mapt/policy.hpp"
#include "mapt/rng.hpp"
#include "mapt/sampling.hpp"

namespace mapt {

struct MatrpoConfig {
  int batch_size = 20;               // episodes per epoch (N)
  double kl_threshold = 1e-4;        // trust-region delta
  double policy_learning_rate = 1e-4;
  int max_inner_iters = 20;
  int epochs = 100;
  std::vector<std::int32_t> critic_hidden = {64, 64};
  double critic_learning_rate = 1e-4;
  int critic_fit_steps = 20;
  std::uint64_t seed = 1;
};

inline void validate_matrpo_config(const MatrpoConfig& config) {
  if (config.batch_size < 1) throw std::invalid_argument("matrpo: batch size must be >= 1");
  if (config.kl_threshold < 0.0) throw std::invalid_argument("matrpo: kl threshold must be >= 0");
  if (!(config.policy_learning_rate > 0.0))
    throw std::invalid_argument("matrpo: policy learning rate must be > 0");
  if (config.max_inner_iters < 1)
    throw std::invalid_argument("matrpo: max inner iters must be >= 1");
  if (config.epochs < 0) throw std::invalid_argument("matrpo: epochs must be >= 0");
  if (!(config.critic_learning_rate > 0.0))
    throw std::invalid_argument("matrpo: critic learning rate must be > 0");
  if (config.critic_fit_steps < 0)
    throw std::invalid_argument("matrpo: critic fit steps must be >= 0");
}

/// Return-to-go sequence: G_t = r_t + gamma * G_{t+1}, G_last = r_last.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> returns(rewards.size());
  double tail = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    tail = rewards[t] + gamma * tail;
    returns[t] = tail;
  }
  return returns;
}

/// State-value baseline: tanh network over the agent's observation features
/// with a linear scalar head.
struct Critic {
  std::vector<std::int32_t> feature_sizes;
  std::vector<std::int32_t> hidden;
  std::vector<double> params;

  static Critic make(std::vector<std::int32_t> feature_sizes, std::vector<std::int32_t> hidden,
                     SplitRng& rng) {
    Critic c;
    c.feature_sizes = std::move(feature_sizes);
    c.hidden = std::move(hidden);
    const MlpSpec spec = c.spec();
    c.params.resize(spec.param_count());
    xavier_uniform_init(spec, rng, c.params);
    return c;
  }

  MlpSpec spec() const { return MlpSpec{feature_sizes, hidden, 1}; }

  double value(std::span<const std::uint32_t> obs) const {
    thread_local MlpWorkspace ws;
    return mlp_forward(spec(), params, obs, ws)[0];
  }

  void add_value_grad(std::span<const std::uint32_t> obs, double coeff,
                      std::span<double> grad) const {
    thread_local MlpWorkspace ws;
    mlp_forward(spec(), params, obs, ws);
    const double one = 1.0;
    mlp_backward(spec(), params, obs, {&one, 1}, coeff, ws, grad);
  }
};

using CriticSet = std::vector<Critic>;

/// Full-batch gradient descent on the mean squared error between critic
/// values and return targets; returns the MSE after the last step.
inline double critic_fit(Critic& critic, std::span<const std::uint32_t> obs_flat,
                         std::span<const double> targets, double learning_rate, int steps) {
  const int f = static_cast<int>(critic.feature_sizes.size());
  if (obs_flat.size() != targets.size() * f)
    throw std::invalid_argument("critic_fit: observation/target length mismatch");
  for (double t : targets)
    if (!std::isfinite(t)) throw std::invalid_argument("critic_fit: non-finite target");
  const std::size_t count = targets.size();
  if (count == 0) return 0.0;

  std::vector<double> grad(critic.params.size());
  for (int step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      auto obs = obs_flat.subspan(i * f, f);
      const double err = critic.value(obs) - targets[i];
      critic.add_value_grad(obs, 2.0 * err / count, grad);
    }
    for (std::size_t p = 0; p < critic.params.size(); ++p)
      critic.params[p] -= learning_rate * grad[p];
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double err = critic.value(obs_flat.subspan(i * f, f)) - targets[i];
    mse += err * err / count;
  }
  return mse;
}

/// One collected episode. Rewards are earned on entering the next state; the
/// episode stops at the first terminal state, so nothing is recorded past it
/// and the return at the final step equals the terminal reward.
struct Episode {
  std::vector<std::int64_t> states;  // flat joint states where actions were taken
  std::vector<JointAction> actions;
  std::vector<double> rewards;  // [step * num_agents + agent]
  bool reached_terminal = false;
};

inline Episode sample_episode(const RewardedTask& task, const PolicySet& policies, SplitRng rng) {
  const MarkovGame& game = task.game;
  check_compatible(policies, game, task.obs);
  Episode ep;
  std::int64_t state = rng.categorical(game.initial_dist);
  if (task.is_terminal(state)) {
    ep.reached_terminal = true;
    return ep;
  }
  std::vector<double> probs;
  for (int t = 0; t < game.horizon; ++t) {
    JointAction action;
    action.locals.resize(game.num_agents);
    for (int i = 0; i < game.num_agents; ++i) {
      probs.resize(game.local_action_sizes[i]);
      policies[i].action_distribution(task.obs.features(i, state), probs);
      action.locals[i] = rng.categorical(probs);
    }
    const std::int64_t next = sample_transition(game, state, flat_action(game, action), rng);
    ep.states.push_back(state);
    ep.actions.push_back(std::move(action));
    for (int i = 0; i < game.num_agents; ++i) ep.rewards.push_back(task.reward(next, i));
    if (task.is_terminal(next)) {
      ep.reached_terminal = true;
      break;
    }
    state = next;
  }
  return ep;
}

struct MatrpoEpochMetrics {
  std::vector<double> mean_return;  // undiscounted, per agent
  double goal_fraction = 0.0;       // episodes that hit a terminal state
  double kl_at_stop = 0.0;          // mean over agents
  double inner_iters = 0.0;         // mean over agents
  double critic_mse = 0.0;          // mean over agents, after fitting
};

namespace detail {

struct StepData {
  std::vector<std::uint32_t> obs;      // [step * F + f]
  std::vector<std::int32_t> actions;   // per step
  std::vector<double> advantages;      // per step
  std::vector<double> returns;         // per step (critic targets)
};

/// Trust-region ascent on the per-step importance-weighted advantage
/// surrogate (1/|D|) sum_t rho_t A_t; same commit rule as the exploration
/// ascent (last iterate inside the KL ball wins).
inline std::tuple<AgentPolicy, double, int> advantage_ascent(const StepData& data,
                                                             const AgentPolicy& behavior,
                                                             double kl_threshold,
                                                             double learning_rate,
                                                             int max_iters) {
  const int f = static_cast<int>(behavior.feature_sizes().size());
  const std::size_t count = data.actions.size();
  AgentPolicy committed = behavior;
  double committed_kl = 0.0;
  int iters = 0;
  if (count == 0) return {committed, committed_kl, iters};

  std::vector<double> behavior_logp(count);
  for (std::size_t t = 0; t < count; ++t)
    behavior_logp[t] = behavior.log_prob({data.obs.data() + t * f, static_cast<std::size_t>(f)},
                                         data.actions[t]);

  AgentPolicy candidate = behavior;
  std::vector<double> grad(behavior.params().size());
  for (int h = 0; h < max_iters; ++h) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t t = 0; t < count; ++t) {
      std::span<const std::uint32_t> obs{data.obs.data() + t * f, static_cast<std::size_t>(f)};
      const double ratio = std::exp(candidate.log_prob(obs, data.actions[t]) - behavior_logp[t]);
      candidate.add_grad_log_prob(obs, data.actions[t], ratio * data.advantages[t] / count,
                                  grad);
    }
    auto& params = candidate.params();
    for (std::size_t p = 0; p < params.size(); ++p)
      params[p] += learning_rate * grad[p];
    for (double v : params)
      if (!std::isfinite(v))
        throw std::runtime_error("matrpo: non-finite policy parameters during inner ascent");
    const double kl = policy_kl(candidate, behavior, data.obs);
    if (kl > kl_threshold) break;
    committed = candidate;
    committed_kl = kl;
    iters = h + 1;
  }
  return {committed, committed_kl, iters};
}

}  // namespace detail

/// One MA-TRPO epoch: collect episodes, compute per-agent return-to-go and
/// critic-baselined advantages, run each agent's trust-region ascent, then
/// refit each critic to the fresh returns.
inline std::pair<PolicySet, MatrpoEpochMetrics> matrpo_epoch(const RewardedTask& task,
                                                             PolicySet policies,
                                                             CriticSet& critics,
                                                             const MatrpoConfig& config,
                                                             const SplitRng& rng) {
  validate_matrpo_config(config);
  const MarkovGame& game = task.game;
  if (static_cast<int>(critics.size()) != game.num_agents)
    throw std::invalid_argument("matrpo: critic count != num_agents");

  std::vector<Episode> episodes(config.batch_size);
  for (int k = 0; k < config.batch_size; ++k)
    episodes[k] = sample_episode(task, policies, rng.substream(k));

  MatrpoEpochMetrics metrics;
  metrics.mean_return.assign(game.num_agents, 0.0);
  for (const auto& ep : episodes) {
    if (ep.reached_terminal) metrics.goal_fraction += 1.0 / config.batch_size;
    for (std::size_t t = 0; t < ep.actions.size(); ++t)
      for (int i = 0; i < game.num_agents; ++i)
        metrics.mean_return[i] += ep.rewards[t * game.num_agents + i] / config.batch_size;
  }

  for (int i = 0; i < game.num_agents; ++i) {
    const int f = task.obs.num_features(i);
    detail::StepData data;
    std::vector<double> agent_rewards;
    for (const auto& ep : episodes) {
      agent_rewards.resize(ep.actions.size());
      for (std::size_t t = 0; t < ep.actions.size(); ++t)
        agent_rewards[t] = ep.rewards[t * game.num_agents + i];
      const auto returns = discounted_returns(agent_rewards, task.discount);
      for (std::size_t t = 0; t < ep.actions.size(); ++t) {
        const auto features = task.obs.features(i, ep.states[t]);
        data.obs.insert(data.obs.end(), features.begin(), features.end());
        data.actions.push_back(ep.actions[t].locals[i]);
        data.returns.push_back(returns[t]);
      }
    }
    data.advantages.resize(data.returns.size());
    for (std::size_t t = 0; t < data.returns.size(); ++t) {
      std::span<const std::uint32_t> obs{data.obs.data() + t * f, static_cast<std::size_t>(f)};
      data.advantages[t] = data.returns[t] - critics[i].value(obs);
    }

    auto [committed, kl, iters] =
        detail::advantage_ascent(data, policies[i], config.kl_threshold,
                                 config.policy_learning_rate, config.max_inner_iters);
    policies[i] = std::move(committed);
    metrics.kl_at_stop += kl / game.num_agents;
    metrics.inner_iters += static_cast<double>(iters) / game.num_agents;
    metrics.critic_mse += critic_fit(critics[i], data.obs, data.returns,
                                     config.critic_learning_rate, config.critic_fit_steps) /
                          game.num_agents;
  }
  return {std::move(policies), std::move(metrics)};
}

struct MatrpoEpochRow {
  int epoch = 0;
  MatrpoEpochMetrics metrics;
};

struct MatrpoRunResult {
  PolicySet policies;
  CriticSet critics;
  std::vector<MatrpoEpochRow> log;
};

inline CriticSet make_critics(const RewardedTask& task, const MatrpoConfig& config) {
  CriticSet critics;
  critics.reserve(task.game.num_agents);
  SplitRng init = SplitRng(config.seed).substream(0);
  for (int i = 0; i < task.game.num_agents; ++i) {
    SplitRng agent_rng = init.substream(917 + i);
    critics.push_back(Critic::make(task.obs.feature_sizes[i], config.critic_hidden, agent_rng));
  }
  return critics;
}

/// Fine-tuning run: config.epochs MA-TRPO epochs from the given initial
/// policies (pre-trained checkpoint or uniform). Epoch e draws episodes from
/// SplitRng(seed).substream(1 + e).
inline MatrpoRunResult run_finetune(const RewardedTask& task, PolicySet initial_policies,
                                    const MatrpoConfig& config) {
  validate_matrpo_config(config);
  check_compatible(initial_policies, task.game, task.obs);
  MatrpoRunResult result;
  result.policies = std::move(initial_policies);
  result.critics = make_critics(task, config);
  const SplitRng master(config.seed);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    try {
      auto [updated, metrics] = matrpo_epoch(task, std::move(result.policies), result.critics,
                                             config, master.substream(epoch));
      result.policies = std::move(updated);
      result.log.push_back({epoch, std::move(metrics)});
    } catch (const std::runtime_error& err) {
      throw std::runtime_error("matrpo: aborted at epoch " + std::to_string(epoch) + ": " +
                               err.what());
    }
  }
  return result;
}

/// Pure evaluation pass (no updates): mean undiscounted return per agent and
/// the goal fraction over `episodes` rollouts.
inline MatrpoEpochMetrics evaluate_policies(const RewardedTask& task, const PolicySet& policies,
                                            int episodes, const SplitRng& rng) {
  if (episodes < 1) throw std::invalid_argument("evaluate_policies: episodes must be >= 1");
  MatrpoEpochMetrics metrics;
  metrics.mean_return.assign(task.game.num_agents, 0.0);
  for (int k = 0; k < episodes; ++k) {
    const Episode ep = sample_episode(task, policies, rng.substream(k));
    if (ep.reached_terminal) metrics.goal_fraction += 1.0 / episodes;
    for (std::size_t t = 0; t < ep.actions.size(); ++t)
      for (int i = 0; i < task.game.num_agents; ++i)
        metrics.mean_return[i] += ep.rewards[t * task.game.num_agents + i] / episodes;
  }
  return metrics;
}

}  // namespace mapt
