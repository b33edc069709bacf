#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapt/markov_game.hpp"
#include "mapt/policy.hpp"

namespace mapt {

/// Counts over a discrete support. Integer counts keep the normalized
/// probabilities exact in rational arithmetic; the ordered map keeps every
/// reduction deterministic.
struct EmpiricalDistribution {
  std::map<std::int64_t, std::uint64_t> counts;
  std::uint64_t total = 0;

  void add(std::int64_t element, std::uint64_t n = 1) {
    counts[element] += n;
    total += n;
  }

  double probability(std::int64_t element) const {
    auto it = counts.find(element);
    return it == counts.end() ? 0.0 : static_cast<double>(it->second) / total;
  }
};

/// Plug-in Shannon entropy in nats: H = log(total) - sum c_k log(c_k) / total.
inline double plugin_entropy(const EmpiricalDistribution& dist) {
  if (dist.total == 0) throw std::invalid_argument("plugin_entropy: empty distribution");
  double weighted = 0.0;
  for (const auto& [_, c] : dist.counts)
    if (c > 0) weighted += static_cast<double>(c) * std::log(static_cast<double>(c));
  const double h = std::log(static_cast<double>(dist.total)) - weighted / dist.total;
  return h < 0.0 ? 0.0 : h;  // clamp -0 and sub-epsilon negatives
}

inline double plugin_entropy(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("plugin_entropy: empty distribution");
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h < 0.0 ? 0.0 : h;
}

/// KL(p || q) in nats. Throws std::domain_error where p has mass outside
/// q's support (non-absolute-continuity, as opposed to numeric trouble).
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0)
      throw std::domain_error("kl_divergence: p has mass where q has none (index " +
                              std::to_string(i) + ")");
    total += p[i] * std::log(p[i] / q[i]);
  }
  return total < 0.0 ? 0.0 : total;
}

inline double kl_divergence(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
  if (p.total == 0 || q.total == 0) throw std::invalid_argument("kl_divergence: empty distribution");
  double total = 0.0;
  for (const auto& [element, c] : p.counts) {
    if (c == 0) continue;
    const double pp = static_cast<double>(c) / p.total;
    const double qq = q.probability(element);
    if (qq <= 0.0)
      throw std::domain_error("kl_divergence: p has mass where q has none (element " +
                              std::to_string(element) + ")");
    total += pp * std::log(pp / qq);
  }
  return total < 0.0 ? 0.0 : total;
}

// ---------------------------------------------------------------------------
// Empirical distributions induced by trajectory batches.
// ---------------------------------------------------------------------------

inline void check_batch(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("empty trajectory batch");
  const std::size_t T = trajectories.front().states.size();
  for (const auto& tr : trajectories) {
    if (tr.states.size() != T || tr.actions.size() != T)
      throw std::invalid_argument("trajectory batch has mixed horizons");
  }
}

/// d_K over joint states: pooled counts across all K trajectories and T
/// steps; total = K*T.
inline EmpiricalDistribution empirical_joint(const MarkovGame& game,
                                             const std::vector<Trajectory>& trajectories) {
  check_batch(trajectories);
  EmpiricalDistribution dist;
  for (const auto& tr : trajectories)
    for (const auto& s : tr.states) dist.add(flat_state(game, s));
  return dist;
}

/// d_{K,i} over agent i's local states; total = K*T.
inline EmpiricalDistribution empirical_marginal(const MarkovGame& game,
                                                const std::vector<Trajectory>& trajectories,
                                                int agent) {
  check_batch(trajectories);
  if (agent < 0 || agent >= game.num_agents)
    throw std::out_of_range("empirical_marginal: agent index out of range");
  EmpiricalDistribution dist;
  for (const auto& tr : trajectories)
    for (const auto& s : tr.states) dist.add(s.locals[agent]);
  return dist;
}

/// Pooled per-agent counts over the common local state space; total =
/// N*K*T. Normalizing recovers the arithmetic mean of the normalized
/// marginals exactly. Requires uniform local state spaces.
inline EmpiricalDistribution empirical_mixture(const MarkovGame& game,
                                               const std::vector<Trajectory>& trajectories) {
  check_batch(trajectories);
  for (auto s : game.local_state_sizes)
    if (s != game.local_state_sizes.front())
      throw std::invalid_argument("empirical_mixture: heterogeneous local state spaces");
  EmpiricalDistribution dist;
  for (const auto& tr : trajectories)
    for (const auto& s : tr.states)
      for (int i = 0; i < game.num_agents; ++i) dist.add(s.locals[i]);
  return dist;
}

// ---------------------------------------------------------------------------
// Exact distributions by forward dynamic programming.
// ---------------------------------------------------------------------------

/// d^pi, per-agent marginals d_i^pi, and (under uniform local spaces) the
/// mixture average, all as dense probability vectors.
struct ExactDistributionSet {
  std::vector<double> joint;                  // over joint states
  std::vector<std::vector<double>> marginals; // per agent, over local states
  std::optional<std::vector<double>> mixture; // over the common local space
};

inline constexpr std::int64_t kDefaultDpCap = 10'000'000;

/// Time-averaged joint state occupancy over t = 1..T under the product
/// policy, plus marginals and mixture. Guarded by |S|*|A| <= cap.
inline ExactDistributionSet exact_distributions(const MarkovGame& game, const ObservationMap& obs,
                                                const PolicySet& policies,
                                                std::int64_t cap = kDefaultDpCap) {
  check_compatible(policies, game, obs);
  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();
  if (num_s * num_a > cap)
    throw std::invalid_argument("exact ops unavailable at this scale: |S|*|A| = " +
                                std::to_string(num_s * num_a) + " exceeds cap " +
                                std::to_string(cap));

  // per-state joint action probabilities under the product policy
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

  std::vector<double> occ = game.initial_dist;
  std::vector<double> avg(num_s, 0.0), next(num_s);
  const double inv_t = 1.0 / game.horizon;
  for (int t = 0; t < game.horizon; ++t) {
    for (std::int64_t s = 0; s < num_s; ++s) avg[s] += occ[s] * inv_t;
    if (t + 1 == game.horizon) break;
    std::fill(next.begin(), next.end(), 0.0);
    if (const auto* dense = std::get_if<DenseTransitions>(&game.transition)) {
      for (std::int64_t s = 0; s < num_s; ++s) {
        if (occ[s] == 0.0) continue;
        for (std::int64_t a = 0; a < num_a; ++a) {
          const double w = occ[s] * action_probs[s * num_a + a];
          if (w == 0.0) continue;
          const double* row = dense->table.data() + (s * num_a + a) * num_s;
          for (std::int64_t n = 0; n < num_s; ++n) next[n] += w * row[n];
        }
      }
    } else {
      const auto& det = std::get<DeterministicTransitions>(game.transition);
      for (std::int64_t s = 0; s < num_s; ++s) {
        if (occ[s] == 0.0) continue;
        for (std::int64_t a = 0; a < num_a; ++a)
          next[det.next[s * num_a + a]] += occ[s] * action_probs[s * num_a + a];
      }
    }
    occ.swap(next);
  }

  ExactDistributionSet result;
  result.joint = std::move(avg);
  result.marginals.assign(game.num_agents, {});
  for (int i = 0; i < game.num_agents; ++i)
    result.marginals[i].assign(game.local_state_sizes[i], 0.0);
  std::vector<std::int32_t> locals(game.num_agents);
  for (std::int64_t s = 0; s < num_s; ++s) {
    if (result.joint[s] == 0.0) continue;
    unflatten_mixed_radix(s, game.local_state_sizes, locals);
    for (int i = 0; i < game.num_agents; ++i)
      result.marginals[i][locals[i]] += result.joint[s];
  }

  bool uniform_spaces = true;
  for (auto sz : game.local_state_sizes)
    if (sz != game.local_state_sizes.front()) uniform_spaces = false;
  if (uniform_spaces) {
    std::vector<double> mixture(game.local_state_sizes.front(), 0.0);
    for (int i = 0; i < game.num_agents; ++i)
      for (std::size_t s = 0; s < mixture.size(); ++s)
        mixture[s] += result.marginals[i][s] / game.num_agents;
    result.mixture = std::move(mixture);
  }
  return result;
}

/// Two-column CSV (index, probability) for heatmaps and plotting.
inline std::string distribution_csv(std::span<const double> probs) {
  std::string out = "state,probability\n";
  char line[64];
  for (std::size_t i = 0; i < probs.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.12g\n", i, probs[i]);
    out += line;
  }
  return out;
}

}  // namespace mapt
