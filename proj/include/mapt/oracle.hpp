#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapt/markov_game.hpp"
#include "mapt/objectives.hpp"
#include "mapt/policy.hpp"

namespace mapt {

/// Every realizable trajectory of a tiny game with its exact probability
/// under a policy set. Ground truth for estimators and gradients.
struct TrajectoryEnsemble {
  std::vector<Trajectory> trajectories;
  std::vector<double> probabilities;

  double total_probability() const {
    double t = 0.0;
    for (double p : probabilities) t += p;
    return t;
  }
};

inline constexpr std::int64_t kDefaultEnumerationCap = 10'000'000;

namespace detail {

inline void check_enumerable(const MarkovGame& game, std::int64_t cap) {
  const double per_step = static_cast<double>(game.num_states()) * game.num_actions();
  double total = 1.0;
  for (int t = 0; t < game.horizon; ++t) {
    total *= per_step;
    if (total > static_cast<double>(cap))
      throw std::invalid_argument("enumerate_trajectories: (|S||A|)^T exceeds cap " +
                                  std::to_string(cap));
  }
}

}  // namespace detail

/// Depth-first enumeration of all positive-probability trajectories.
/// Zero-probability branches of mu and P are pruned; softmax policies keep
/// every action branch alive.
inline TrajectoryEnsemble enumerate_trajectories(const MarkovGame& game,
                                                 const ObservationMap& obs,
                                                 const PolicySet& policies,
                                                 std::int64_t cap = kDefaultEnumerationCap) {
  check_compatible(policies, game, obs);
  detail::check_enumerable(game, cap);
  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();
  const int T = game.horizon;

  // per-state joint action probabilities
  std::vector<double> action_probs(static_cast<std::size_t>(num_s) * num_a);
  {
    std::vector<std::vector<double>> per_agent(game.num_agents);
    std::vector<std::int32_t> a_locals(game.num_agents);
    for (std::int64_t s = 0; s < num_s; ++s) {
      for (int i = 0; i < game.num_agents; ++i) {
        per_agent[i].resize(game.local_action_sizes[i]);
        policies[i].action_distribution(obs.features(i, s), per_agent[i]);
      }
      for (std::int64_t a = 0; a < num_a; ++a) {
        unflatten_mixed_radix(a, game.local_action_sizes, a_locals);
        double p = 1.0;
        for (int i = 0; i < game.num_agents; ++i) p *= per_agent[i][a_locals[i]];
        action_probs[s * num_a + a] = p;
      }
    }
  }

  TrajectoryEnsemble ensemble;
  std::vector<std::int64_t> states(T), actions(T);

  std::function<void(int, std::int64_t, double)> expand = [&](int t, std::int64_t state,
                                                              double prob) {
    states[t] = state;
    for (std::int64_t a = 0; a < num_a; ++a) {
      const double pa = action_probs[state * num_a + a];
      if (pa == 0.0) continue;
      actions[t] = a;
      const double p = prob * pa;
      if (t + 1 == T) {
        Trajectory traj;
        traj.states.reserve(T);
        traj.actions.reserve(T);
        for (int u = 0; u < T; ++u) {
          traj.states.push_back(unflatten_state(game, states[u]));
          traj.actions.push_back(unflatten_action(game, actions[u]));
        }
        ensemble.trajectories.push_back(std::move(traj));
        ensemble.probabilities.push_back(p);
        continue;
      }
      for (std::int64_t next = 0; next < num_s; ++next) {
        const double pt = transition_prob(game, state, a, next);
        if (pt == 0.0) continue;
        expand(t + 1, next, p * pt);
      }
    }
  };

  for (std::int64_t s = 0; s < num_s; ++s)
    if (game.initial_dist[s] > 0.0) expand(0, s, game.initial_dist[s]);
  return ensemble;
}

/// Exact single-trial objective: E_tau[F(d_1)] summed over the full ensemble.
inline double exact_single_trial_objective(const MarkovGame& game, const ObservationMap& obs,
                                           const PolicySet& policies, const ObjectiveKind& kind,
                                           std::int64_t cap = kDefaultEnumerationCap) {
  const auto ensemble = enumerate_trajectories(game, obs, policies, cap);
  double total = 0.0;
  for (std::size_t k = 0; k < ensemble.trajectories.size(); ++k)
    total += ensemble.probabilities[k] *
             single_trial_value(game, ensemble.trajectories[k], kind);
  return total;
}

/// Exact per-agent surrogate: E_{tau ~ behavior}[rho^i(tau) F(d_1)], where
/// rho^i is the product over steps of candidate/behavior action-probability
/// ratios for agent i only. Equals the exact single-trial objective of
/// (candidate_i, behavior_-i) whenever importance sampling is unbiased.
inline double exact_surrogate(const MarkovGame& game, const ObservationMap& obs,
                              const PolicySet& behavior, int agent,
                              const AgentPolicy& candidate, const ObjectiveKind& kind,
                              std::int64_t cap = kDefaultEnumerationCap) {
  if (agent < 0 || agent >= game.num_agents)
    throw std::out_of_range("exact_surrogate: agent index out of range");
  if (!candidate.same_architecture(behavior[agent]))
    throw std::invalid_argument("exact_surrogate: candidate architecture mismatch");
  const auto ensemble = enumerate_trajectories(game, obs, behavior, cap);
  double total = 0.0;
  for (std::size_t k = 0; k < ensemble.trajectories.size(); ++k) {
    const Trajectory& tr = ensemble.trajectories[k];
    double log_ratio = 0.0;
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      const std::int64_t s = flat_state(game, tr.states[t]);
      const auto features = obs.features(agent, s);
      const std::int32_t a = tr.actions[t].locals[agent];
      log_ratio += candidate.log_prob(features, a) - behavior[agent].log_prob(features, a);
    }
    total += ensemble.probabilities[k] * std::exp(log_ratio) *
             single_trial_value(game, tr, kind);
  }
  return total;
}

/// Central finite differences of an arbitrary scalar function of a parameter
/// vector. Deliberately independent of the analytic gradient paths it checks.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> params,
    double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
  std::vector<double> point(params.begin(), params.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("finite_difference_gradient: non-finite evaluation");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Simultaneous independent gradient ascent on the exact infinite-trials
/// objective, with per-agent gradients taken by finite differences of the DP
/// value. Intended for centralized-information tabular policies on tiny
/// games; returns the objective value before each update and after the last.
inline std::vector<double> independent_pga(const MarkovGame& game, const ObservationMap& obs,
                                           PolicySet policies, const ObjectiveKind& kind,
                                           double learning_rate, int steps, double fd_step = 1e-5) {
  if (kind.variant == ObjectiveKind::Variant::kDisjoint)
    throw std::invalid_argument("independent_pga: non-disjoint objectives only");
  if (steps < 0) throw std::invalid_argument("independent_pga: steps must be >= 0");
  check_compatible(policies, game, obs);

  std::vector<double> curve;
  curve.reserve(steps + 1);
  curve.push_back(infinite_trial_value(game, obs, policies, kind));
  for (int step = 0; step < steps; ++step) {
    std::vector<std::vector<double>> grads(policies.size());
    for (std::size_t i = 0; i < policies.size(); ++i) {
      auto value_of = [&](std::span<const double> theta) {
        PolicySet probe = policies;
        probe[i].params().assign(theta.begin(), theta.end());
        return infinite_trial_value(game, obs, probe, kind);
      };
      grads[i] = finite_difference_gradient(value_of, policies[i].params(), fd_step);
    }
    for (std::size_t i = 0; i < policies.size(); ++i)
      for (std::size_t p = 0; p < grads[i].size(); ++p)
        policies[i].params()[p] += learning_rate * grads[i][p];
    curve.push_back(infinite_trial_value(game, obs, policies, kind));
  }
  return curve;
}

}  // namespace mapt
