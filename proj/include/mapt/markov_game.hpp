#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mapt {

// Per-agent local indices of one joint state. locals[i] < |S_i|.
struct JointState {
  std::vector<std::int32_t> locals;

  bool operator==(const JointState&) const = default;
};

// Per-agent local action indices. locals[i] < |A_i|.
struct JointAction {
  std::vector<std::int32_t> locals;

  bool operator==(const JointAction&) const = default;
};

/// T (state, action) pairs; the state following the last action is dropped,
/// so empirical state distributions average over exactly T states and
/// trajectory likelihoods are products of exactly T policy factors.
struct Trajectory {
  std::vector<JointState> states;
  std::vector<JointAction> actions;

  bool operator==(const Trajectory&) const = default;
};

/// Dense stochastic transition table: row (s, a) holds a distribution over
/// next joint states. Size |S|*|A|*|S|, guarded at construction.
struct DenseTransitions {
  std::vector<double> table;  // [(s * num_actions + a) * num_states + s']
};

/// Deterministic dynamics: next joint state per (s, a). Keeps grid games with
/// ~1e4 joint states representable where a dense table would not be.
struct DeterministicTransitions {
  std::vector<std::uint32_t> next;  // [s * num_actions + a]
};

using TransitionModel = std::variant<DenseTransitions, DeterministicTransitions>;

/// Reward-free finite-horizon Markov game over factored discrete states and
/// actions. Joint states/actions are flattened with agent 0 as the
/// fastest-varying digit; flat_state/unflatten_state define the bijection.
struct MarkovGame {
  int num_agents = 0;
  std::vector<std::int32_t> local_state_sizes;   // |S_i|
  std::vector<std::int32_t> local_action_sizes;  // |A_i|
  TransitionModel transition;
  std::vector<double> initial_dist;  // mu over joint states
  int horizon = 0;                   // T

  std::int64_t num_states() const {
    std::int64_t n = 1;
    for (auto s : local_state_sizes) n *= s;
    return n;
  }
  std::int64_t num_actions() const {
    std::int64_t n = 1;
    for (auto a : local_action_sizes) n *= a;
    return n;
  }
};

inline std::int64_t flatten_mixed_radix(std::span<const std::int32_t> digits,
                                        std::span<const std::int32_t> sizes) {
  std::int64_t idx = 0;
  for (std::size_t i = sizes.size(); i-- > 0;) idx = idx * sizes[i] + digits[i];
  return idx;
}

inline void unflatten_mixed_radix(std::int64_t idx, std::span<const std::int32_t> sizes,
                                  std::span<std::int32_t> out) {
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out[i] = static_cast<std::int32_t>(idx % sizes[i]);
    idx /= sizes[i];
  }
}

inline std::int64_t flat_state(const MarkovGame& game, const JointState& s) {
  return flatten_mixed_radix(s.locals, game.local_state_sizes);
}

inline std::int64_t flat_action(const MarkovGame& game, const JointAction& a) {
  return flatten_mixed_radix(a.locals, game.local_action_sizes);
}

inline JointState unflatten_state(const MarkovGame& game, std::int64_t idx) {
  JointState s;
  s.locals.resize(game.num_agents);
  unflatten_mixed_radix(idx, game.local_state_sizes, s.locals);
  return s;
}

inline JointAction unflatten_action(const MarkovGame& game, std::int64_t idx) {
  JointAction a;
  a.locals.resize(game.num_agents);
  unflatten_mixed_radix(idx, game.local_action_sizes, a.locals);
  return a;
}

/// Probability of s' given (s, a) under either transition representation.
inline double transition_prob(const MarkovGame& game, std::int64_t s, std::int64_t a,
                              std::int64_t next) {
  const std::int64_t num_s = game.num_states();
  if (const auto* dense = std::get_if<DenseTransitions>(&game.transition)) {
    return dense->table[(s * game.num_actions() + a) * num_s + next];
  }
  const auto& det = std::get<DeterministicTransitions>(game.transition);
  return det.next[s * game.num_actions() + a] == static_cast<std::uint32_t>(next) ? 1.0 : 0.0;
}

/// Shape and stochasticity checks; returns one message per violated
/// invariant, empty when the game is valid.
inline std::vector<std::string> validate_game(const MarkovGame& game) {
  std::vector<std::string> report;
  auto complain = [&report](const std::string& msg) { report.push_back(msg); };

  if (game.num_agents < 1) complain("num_agents must be >= 1");
  if (static_cast<int>(game.local_state_sizes.size()) != game.num_agents)
    complain("local_state_sizes length != num_agents");
  if (static_cast<int>(game.local_action_sizes.size()) != game.num_agents)
    complain("local_action_sizes length != num_agents");
  for (std::size_t i = 0; i < game.local_state_sizes.size(); ++i)
    if (game.local_state_sizes[i] < 1)
      complain("local_state_sizes[" + std::to_string(i) + "] < 1");
  for (std::size_t i = 0; i < game.local_action_sizes.size(); ++i)
    if (game.local_action_sizes[i] < 1)
      complain("local_action_sizes[" + std::to_string(i) + "] < 1");
  if (game.horizon < 1) complain("horizon must be >= 1");
  if (!report.empty()) return report;  // shape is broken; element checks would misindex

  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();
  constexpr double kTol = 1e-12;

  if (static_cast<std::int64_t>(game.initial_dist.size()) != num_s) {
    complain("initial_dist size != number of joint states");
  } else {
    double total = 0.0;
    for (std::int64_t s = 0; s < num_s; ++s) {
      const double p = game.initial_dist[s];
      if (p < 0.0) complain("initial_dist entry < 0 at state " + std::to_string(s));
      if (p > 1.0 + kTol) complain("initial_dist entry > 1 at state " + std::to_string(s));
      total += p;
    }
    if (std::abs(total - 1.0) > kTol)
      complain("initial_dist sums to " + std::to_string(total) + ", expected 1");
  }

  if (const auto* dense = std::get_if<DenseTransitions>(&game.transition)) {
    if (static_cast<std::int64_t>(dense->table.size()) != num_s * num_a * num_s) {
      complain("transition table size != |S|*|A|*|S|");
      return report;
    }
    for (std::int64_t s = 0; s < num_s; ++s) {
      for (std::int64_t a = 0; a < num_a; ++a) {
        const double* row = dense->table.data() + (s * num_a + a) * num_s;
        double total = 0.0;
        bool in_range = true;
        for (std::int64_t n = 0; n < num_s; ++n) {
          if (row[n] < 0.0 || row[n] > 1.0 + kTol) in_range = false;
          total += row[n];
        }
        if (!in_range)
          complain("transition row (state " + std::to_string(s) + ", action " +
                   std::to_string(a) + ") has entries outside [0,1]");
        if (std::abs(total - 1.0) > kTol)
          complain("transition row (state " + std::to_string(s) + ", action " +
                   std::to_string(a) + ") sums to " + std::to_string(total));
      }
    }
  } else {
    const auto& det = std::get<DeterministicTransitions>(game.transition);
    if (static_cast<std::int64_t>(det.next.size()) != num_s * num_a) {
      complain("deterministic transition size != |S|*|A|");
      return report;
    }
    for (std::size_t i = 0; i < det.next.size(); ++i)
      if (det.next[i] >= static_cast<std::uint32_t>(num_s))
        complain("deterministic next state out of range at row " + std::to_string(i));
  }
  return report;
}

inline void require_valid(const MarkovGame& game) {
  auto report = validate_game(game);
  if (!report.empty()) throw std::invalid_argument("invalid game: " + report.front());
}

/// Per-agent observation features as a function of the joint state.
/// feature_sizes[i] lists the discrete feature alphabet sizes for agent i
/// (e.g. {cells, 2} for a grid cell plus a door bit); obs_features[i] holds
/// the feature tuple per flat joint state, row-major. The default map exposes
/// the agent's own local state as a single feature.
struct ObservationMap {
  std::vector<std::vector<std::int32_t>> feature_sizes;
  std::vector<std::vector<std::uint32_t>> obs_features;  // [agent][state * F + f]

  int num_features(int agent) const { return static_cast<int>(feature_sizes[agent].size()); }

  std::span<const std::uint32_t> features(int agent, std::int64_t flat_state) const {
    const int f = num_features(agent);
    return {obs_features[agent].data() + flat_state * f, static_cast<std::size_t>(f)};
  }
};

inline ObservationMap local_state_observation(const MarkovGame& game) {
  ObservationMap map;
  map.feature_sizes.resize(game.num_agents);
  map.obs_features.resize(game.num_agents);
  const std::int64_t num_s = game.num_states();
  for (int i = 0; i < game.num_agents; ++i) {
    map.feature_sizes[i] = {game.local_state_sizes[i]};
    map.obs_features[i].resize(num_s);
  }
  std::vector<std::int32_t> locals(game.num_agents);
  for (std::int64_t s = 0; s < num_s; ++s) {
    unflatten_mixed_radix(s, game.local_state_sizes, locals);
    for (int i = 0; i < game.num_agents; ++i)
      map.obs_features[i][s] = static_cast<std::uint32_t>(locals[i]);
  }
  return map;
}

/// Centralized-information map: every agent observes the flat joint state.
inline ObservationMap joint_state_observation(const MarkovGame& game) {
  ObservationMap map;
  map.feature_sizes.resize(game.num_agents);
  map.obs_features.resize(game.num_agents);
  const std::int64_t num_s = game.num_states();
  for (int i = 0; i < game.num_agents; ++i) {
    map.feature_sizes[i] = {static_cast<std::int32_t>(num_s)};
    map.obs_features[i].resize(num_s);
    for (std::int64_t s = 0; s < num_s; ++s)
      map.obs_features[i][s] = static_cast<std::uint32_t>(s);
  }
  return map;
}

// ---------------------------------------------------------------------------
// Text fixture format (dense games only).
// ---------------------------------------------------------------------------

inline void save_game(const MarkovGame& game, const std::string& path) {
  const auto* dense = std::get_if<DenseTransitions>(&game.transition);
  if (!dense) throw std::invalid_argument("save_game: only dense games are serializable");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_game: cannot open " + path);
  out.precision(17);
  out << "MAPTGAME 1\n";
  out << "agents " << game.num_agents << "\n";
  out << "state_sizes";
  for (auto s : game.local_state_sizes) out << ' ' << s;
  out << "\naction_sizes";
  for (auto a : game.local_action_sizes) out << ' ' << a;
  out << "\nhorizon " << game.horizon << "\n";
  out << "mu";
  for (double p : game.initial_dist) out << ' ' << p;
  out << "\ntransition\n";
  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();
  for (std::int64_t row = 0; row < num_s * num_a; ++row) {
    for (std::int64_t n = 0; n < num_s; ++n) {
      if (n) out << ' ';
      out << dense->table[row * num_s + n];
    }
    out << '\n';
  }
}

inline MarkovGame load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_game: cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "MAPTGAME") throw std::runtime_error("load_game: bad magic in " + path);
  if (version != 1) throw std::runtime_error("load_game: unsupported version");

  auto expect = [&in, &path](const std::string& token) {
    std::string word;
    in >> word;
    if (word != token)
      throw std::runtime_error("load_game: expected '" + token + "' in " + path);
  };

  MarkovGame game;
  expect("agents");
  in >> game.num_agents;
  if (!in || game.num_agents < 1) throw std::runtime_error("load_game: bad agent count");
  expect("state_sizes");
  game.local_state_sizes.resize(game.num_agents);
  for (auto& s : game.local_state_sizes) in >> s;
  expect("action_sizes");
  game.local_action_sizes.resize(game.num_agents);
  for (auto& a : game.local_action_sizes) in >> a;
  expect("horizon");
  in >> game.horizon;
  expect("mu");
  const std::int64_t num_s = game.num_states();
  game.initial_dist.resize(num_s);
  for (auto& p : game.initial_dist) in >> p;
  expect("transition");
  DenseTransitions dense;
  dense.table.resize(num_s * game.num_actions() * num_s);
  for (auto& p : dense.table) in >> p;
  if (!in) throw std::runtime_error("load_game: truncated file " + path);
  game.transition = std::move(dense);
  return game;
}

}  // namespace mapt
