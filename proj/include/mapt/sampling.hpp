#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mapt/markov_game.hpp"
#include "mapt/policy.hpp"
#include "mapt/rng.hpp"

namespace mapt {

/// Draws s' ~ P(.|s, a). Exposed for transition-level statistical tests.
inline std::int64_t sample_transition(const MarkovGame& game, std::int64_t state,
                                      std::int64_t action, SplitRng& rng) {
  if (const auto* dense = std::get_if<DenseTransitions>(&game.transition)) {
    const std::int64_t num_s = game.num_states();
    std::span<const double> row{dense->table.data() + (state * game.num_actions() + action) * num_s,
                                static_cast<std::size_t>(num_s)};
    return rng.categorical(row);
  }
  return std::get<DeterministicTransitions>(game.transition).next[state * game.num_actions() +
                                                                  action];
}

/// One episode under the joint policy: s1 ~ mu, then T rounds of simultaneous
/// per-agent action draws and a transition draw. Records exactly T
/// (state, action) pairs; the state reached by the last action is discarded.
inline Trajectory sample_trajectory(const MarkovGame& game, const ObservationMap& obs,
                                    const PolicySet& policies, SplitRng rng) {
  check_compatible(policies, game, obs);
  const int T = game.horizon;
  Trajectory traj;
  traj.states.reserve(T);
  traj.actions.reserve(T);

  std::int64_t state = rng.categorical(game.initial_dist);
  std::vector<double> probs;
  for (int t = 0; t < T; ++t) {
    traj.states.push_back(unflatten_state(game, state));
    JointAction action;
    action.locals.resize(game.num_agents);
    for (int i = 0; i < game.num_agents; ++i) {
      probs.resize(game.local_action_sizes[i]);
      policies[i].action_distribution(obs.features(i, state), probs);
      action.locals[i] = rng.categorical(probs);
    }
    const std::int64_t flat_a = flat_action(game, action);
    traj.actions.push_back(std::move(action));
    state = sample_transition(game, state, flat_a, rng);
  }
  return traj;
}

/// n independent trajectories; trajectory k draws from rng.substream(k), so
/// the batch is reproducible under any evaluation order or schedule.
inline std::vector<Trajectory> sample_batch(const MarkovGame& game, const ObservationMap& obs,
                                            const PolicySet& policies, int n, const SplitRng& rng) {
  if (n < 1) throw std::invalid_argument("sample_batch: n must be >= 1");
  check_compatible(policies, game, obs);
  std::vector<Trajectory> batch(n);
  for (int k = 0; k < n; ++k)
    batch[k] = sample_trajectory(game, obs, policies, rng.substream(k));
  return batch;
}

}  // namespace mapt
