#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapt/distribution.hpp"
#include "mapt/markov_game.hpp"
#include "mapt/policy.hpp"
#include "mapt/rng.hpp"
#include "mapt/sampling.hpp"

namespace mapt {

/// Which induced state distribution the entropy functional is applied to:
/// the joint distribution, one agent's marginal, or the uniform mixture of
/// the marginals (which requires uniform local state spaces).
struct ObjectiveKind {
  enum class Variant { kJoint, kDisjoint, kMixture };
  Variant variant = Variant::kJoint;
  int agent = 0;  // used by kDisjoint

  static ObjectiveKind joint() { return {Variant::kJoint, 0}; }
  static ObjectiveKind disjoint(int agent) { return {Variant::kDisjoint, agent}; }
  static ObjectiveKind mixture() { return {Variant::kMixture, 0}; }

  std::string name() const {
    switch (variant) {
      case Variant::kJoint: return "joint";
      case Variant::kDisjoint: return "disjoint" + std::to_string(agent);
      case Variant::kMixture: return "mixture";
    }
    return "?";
  }
};

inline void check_kind(const MarkovGame& game, const ObjectiveKind& kind) {
  if (kind.variant == ObjectiveKind::Variant::kDisjoint &&
      (kind.agent < 0 || kind.agent >= game.num_agents))
    throw std::out_of_range("objective: disjoint agent index out of range");
  if (kind.variant == ObjectiveKind::Variant::kMixture) {
    for (auto s : game.local_state_sizes)
      if (s != game.local_state_sizes.front())
        throw std::invalid_argument("objective: mixture requires uniform local state spaces");
  }
}

/// Plug-in entropy of one trajectory's empirical state distribution
/// (the K = 1 objective value; Joint pools T joint states, Disjoint the
/// agent's T local states, Mixture all N*T local states).
inline double single_trial_value(const MarkovGame& game, const Trajectory& trajectory,
                                 const ObjectiveKind& kind) {
  check_kind(game, kind);
  if (trajectory.states.empty())
    throw std::invalid_argument("single_trial_value: empty trajectory");
  EmpiricalDistribution dist;
  switch (kind.variant) {
    case ObjectiveKind::Variant::kJoint:
      for (const auto& s : trajectory.states) dist.add(flat_state(game, s));
      break;
    case ObjectiveKind::Variant::kDisjoint:
      for (const auto& s : trajectory.states) dist.add(s.locals[kind.agent]);
      break;
    case ObjectiveKind::Variant::kMixture:
      for (const auto& s : trajectory.states)
        for (int i = 0; i < game.num_agents; ++i) dist.add(s.locals[i]);
      break;
  }
  return plugin_entropy(dist);
}

/// Pooled empirical distribution of a K-trajectory group, per kind.
inline EmpiricalDistribution group_distribution(const MarkovGame& game,
                                                const std::vector<Trajectory>& group,
                                                const ObjectiveKind& kind) {
  switch (kind.variant) {
    case ObjectiveKind::Variant::kJoint: return empirical_joint(game, group);
    case ObjectiveKind::Variant::kDisjoint: return empirical_marginal(game, group, kind.agent);
    case ObjectiveKind::Variant::kMixture: return empirical_mixture(game, group);
  }
  throw std::logic_error("unreachable");
}

struct ObjectiveEstimate {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  int reps = 0;
  int trials = 0;  // K
};

/// Monte-Carlo estimate of the finite-trials objective: each rep samples a
/// fresh group of K trajectories, pools them into one empirical distribution
/// and applies the entropy functional to it (F(d_K), not a per-trajectory
/// average). Rep r draws from rng.substream(r).
inline ObjectiveEstimate finite_trial_estimate(const MarkovGame& game, const ObservationMap& obs,
                                               const PolicySet& policies,
                                               const ObjectiveKind& kind, int trials, int reps,
                                               const SplitRng& rng) {
  if (trials < 1 || reps < 1)
    throw std::invalid_argument("finite_trial_estimate: trials and reps must be >= 1");
  check_kind(game, kind);
  std::vector<double> values(reps);
  for (int r = 0; r < reps; ++r) {
    auto group = sample_batch(game, obs, policies, trials, rng.substream(r));
    values[r] = plugin_entropy(group_distribution(game, group, kind));
  }
  ObjectiveEstimate est;
  est.reps = reps;
  est.trials = trials;
  for (double v : values) est.mean += v;
  est.mean /= reps;
  if (reps > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    est.stderr_of_mean = std::sqrt(ss / (reps - 1) / reps);
  }
  return est;
}

/// Infinite-trials objective: entropy of the exact induced distribution.
inline double infinite_trial_value(const MarkovGame& game, const ObservationMap& obs,
                                   const PolicySet& policies, const ObjectiveKind& kind,
                                   std::int64_t cap = kDefaultDpCap) {
  check_kind(game, kind);
  const ExactDistributionSet dists = exact_distributions(game, obs, policies, cap);
  switch (kind.variant) {
    case ObjectiveKind::Variant::kJoint: return plugin_entropy(dists.joint);
    case ObjectiveKind::Variant::kDisjoint: return plugin_entropy(dists.marginals[kind.agent]);
    case ObjectiveKind::Variant::kMixture: return plugin_entropy(*dists.mixture);
  }
  throw std::logic_error("unreachable");
}

/// The ordered chain linking the infinite-trials objectives:
///   H(d)/N <= avg_i H(d_i) <= H(d~) <= sup_i H(d_i) + log N <= H(d) + log N.
struct EntropyChain {
  double joint_over_n = 0.0;
  double avg_marginal = 0.0;
  double mixture = 0.0;
  double sup_marginal_plus_log_n = 0.0;
  double joint_plus_log_n = 0.0;
  double slack[4] = {0, 0, 0, 0};  // consecutive differences

  bool holds(double tol = 1e-9) const {
    return slack[0] >= -tol && slack[1] >= -tol && slack[2] >= -tol && slack[3] >= -tol;
  }
};

inline EntropyChain entropy_chain(const MarkovGame& game, const ObservationMap& obs,
                                  const PolicySet& policies, std::int64_t cap = kDefaultDpCap) {
  check_kind(game, ObjectiveKind::mixture());  // uniform local spaces required
  const ExactDistributionSet dists = exact_distributions(game, obs, policies, cap);
  const double log_n = std::log(static_cast<double>(game.num_agents));
  EntropyChain chain;
  const double joint_entropy = plugin_entropy(dists.joint);
  chain.joint_over_n = joint_entropy / game.num_agents;
  double sup = 0.0;
  for (int i = 0; i < game.num_agents; ++i) {
    const double h = plugin_entropy(dists.marginals[i]);
    chain.avg_marginal += h / game.num_agents;
    sup = std::max(sup, h);
  }
  chain.mixture = plugin_entropy(*dists.mixture);
  chain.sup_marginal_plus_log_n = sup + log_n;
  chain.joint_plus_log_n = joint_entropy + log_n;
  chain.slack[0] = chain.avg_marginal - chain.joint_over_n;
  chain.slack[1] = chain.mixture - chain.avg_marginal;
  chain.slack[2] = chain.sup_marginal_plus_log_n - chain.mixture;
  chain.slack[3] = chain.joint_plus_log_n - chain.sup_marginal_plus_log_n;
  return chain;
}

/// H(d~) = avg_i H(d_i) + avg_i KL(d_i || d~), returned as
/// (avg_entropy, avg_kl, mixture_entropy).
struct MixtureDecomposition {
  double avg_entropy = 0.0;
  double avg_kl = 0.0;
  double mixture_entropy = 0.0;

  double residual() const { return avg_entropy + avg_kl - mixture_entropy; }
};

inline MixtureDecomposition mixture_decomposition(const MarkovGame& game,
                                                  const ObservationMap& obs,
                                                  const PolicySet& policies,
                                                  std::int64_t cap = kDefaultDpCap) {
  check_kind(game, ObjectiveKind::mixture());
  const ExactDistributionSet dists = exact_distributions(game, obs, policies, cap);
  MixtureDecomposition out;
  out.mixture_entropy = plugin_entropy(*dists.mixture);
  for (int i = 0; i < game.num_agents; ++i) {
    out.avg_entropy += plugin_entropy(dists.marginals[i]) / game.num_agents;
    out.avg_kl += kl_divergence(dists.marginals[i], *dists.mixture) / game.num_agents;
  }
  return out;
}

/// Finite-trials mismatch bound |zeta_K - zeta_inf| for an L-Lipschitz
/// functional at confidence delta:
///   Joint:    L T sqrt(2 |S|  log(2T/delta) / K)
///   Disjoint: L T sqrt(2 |S~| log(2T/delta) / K)
///   Mixture:  L T sqrt(2 |S~| log(2T/delta) / (N K))
/// L is a caller-supplied constant: entropy is not globally Lipschitz in L1
/// near the simplex boundary, so no value is derived here.
inline double mismatch_bound(const ObjectiveKind& kind, double lipschitz, int horizon,
                             std::int64_t support_size, int trials, int num_agents, double delta) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw std::invalid_argument("mismatch_bound: delta must be in (0, 1]");
  if (trials < 1) throw std::invalid_argument("mismatch_bound: K must be >= 1");
  if (!(lipschitz > 0.0)) throw std::invalid_argument("mismatch_bound: L must be > 0");
  if (horizon < 1) throw std::invalid_argument("mismatch_bound: T must be >= 1");
  if (support_size < 1) throw std::invalid_argument("mismatch_bound: support must be >= 1");
  if (num_agents < 1) throw std::invalid_argument("mismatch_bound: N must be >= 1");
  double radicand = 2.0 * static_cast<double>(support_size) *
                    std::log(2.0 * horizon / delta) / trials;
  if (kind.variant == ObjectiveKind::Variant::kMixture) radicand /= num_agents;
  return lipschitz * horizon * std::sqrt(radicand);
}

}  // namespace mapt
