#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapt/markov_game.hpp"
#include "mapt/rng.hpp"

namespace mapt {

/// A game bundled with the observation encoding its policies condition on.
struct Env {
  MarkovGame game;
  ObservationMap obs;
};

/// Sparse-reward wrapper over a reward-free game. Rewards and termination
/// are tabulated per joint state; episodes stop when the terminal predicate
/// fires (the goal state is absorbing for data collection purposes).
struct RewardedTask {
  MarkovGame game;
  ObservationMap obs;
  std::vector<double> rewards;    // [state * num_agents + agent]
  std::vector<std::uint8_t> terminal;  // per joint state
  double discount = 0.99;

  double reward(std::int64_t state, int agent) const {
    return rewards[state * game.num_agents + agent];
  }
  bool is_terminal(std::int64_t state) const { return terminal[state] != 0; }
};

// ---------------------------------------------------------------------------
// Grid-world helpers. Cells are 1-indexed (x, y) in [1, side]^2 and flattened
// as (x-1) + side*(y-1). The five actions are up, down, left, right, stay,
// moving y+1, y-1, x-1, x+1 respectively; blocked moves are no-ops.
// ---------------------------------------------------------------------------

struct Cell {
  int x = 1;
  int y = 1;

  bool operator==(const Cell&) const = default;
};

inline int cell_index(const Cell& c, int side) { return (c.x - 1) + side * (c.y - 1); }
inline Cell cell_at(int index, int side) { return Cell{index % side + 1, index / side + 1}; }
inline int manhattan(const Cell& a, const Cell& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

inline constexpr int kNumGridActions = 5;  // up, down, left, right, stay

inline Cell apply_move(const Cell& c, int action, int side) {
  Cell n = c;
  switch (action) {
    case 0: n.y += 1; break;
    case 1: n.y -= 1; break;
    case 2: n.x -= 1; break;
    case 3: n.x += 1; break;
    case 4: break;
    default: throw std::out_of_range("grid action out of range");
  }
  if (n.x < 1 || n.x > side || n.y < 1 || n.y > side) return c;
  return n;
}

// ---------------------------------------------------------------------------
// Secret room: two agents on a 10x10 grid split into two rooms by a vertical
// wall between columns wall_col and wall_col+1. The single passage connects
// (wall_col, door_y) and (wall_col+1, door_y) and is open exactly while some
// agent stands within Manhattan distance < switch_radius of some switch.
// ---------------------------------------------------------------------------

struct SecretRoomParams {
  int side = 10;
  int wall_col = 5;          // wall between x = wall_col and x = wall_col + 1
  int door_y = 5;
  std::vector<Cell> switches = {{1, 9}, {9, 1}};
  std::vector<Cell> starts = {{1, 1}, {2, 2}};
  double switch_radius = 1.5;
  Cell goal = {9, 9};
  double goal_reward = 100.0;
  int horizon = 50;
};

inline void validate_secret_room_params(const SecretRoomParams& p) {
  auto inside = [&p](const Cell& c) {
    return c.x >= 1 && c.x <= p.side && c.y >= 1 && c.y <= p.side;
  };
  if (p.side < 2) throw std::invalid_argument("secret_room: side must be >= 2");
  if (p.wall_col < 1 || p.wall_col >= p.side)
    throw std::invalid_argument("secret_room: wall column outside grid");
  if (p.door_y < 1 || p.door_y > p.side)
    throw std::invalid_argument("secret_room: door row outside grid");
  if (p.switch_radius <= 0.0) throw std::invalid_argument("secret_room: radius must be > 0");
  if (p.switches.size() != 2) throw std::invalid_argument("secret_room: expected two switches");
  if (p.starts.size() != 2) throw std::invalid_argument("secret_room: expected two starts");
  for (const auto& c : p.switches)
    if (!inside(c)) throw std::invalid_argument("secret_room: switch outside grid");
  for (const auto& c : p.starts)
    if (!inside(c)) throw std::invalid_argument("secret_room: start outside grid");
  if (!inside(p.goal)) throw std::invalid_argument("secret_room: goal outside grid");
  const bool s0_left = p.switches[0].x <= p.wall_col;
  const bool s1_left = p.switches[1].x <= p.wall_col;
  if (s0_left == s1_left)
    throw std::invalid_argument("secret_room: switches must sit in distinct rooms");
  for (const auto& c : p.starts)
    if (c.x > p.wall_col) throw std::invalid_argument("secret_room: starts must be in the first room");
  if (p.horizon < 1) throw std::invalid_argument("secret_room: horizon must be >= 1");
}

inline bool secret_room_door_open(const SecretRoomParams& p, const Cell& a0, const Cell& a1) {
  for (const auto& sw : p.switches) {
    if (manhattan(a0, sw) < p.switch_radius) return true;
    if (manhattan(a1, sw) < p.switch_radius) return true;
  }
  return false;
}

inline Cell secret_room_move(const SecretRoomParams& p, const Cell& c, int action, bool door_open) {
  Cell n = apply_move(c, action, p.side);
  const bool crosses_wall = (c.x == p.wall_col && n.x == p.wall_col + 1) ||
                            (c.x == p.wall_col + 1 && n.x == p.wall_col);
  if (crosses_wall && !(door_open && c.y == p.door_y)) return c;
  return n;
}

/// Builds the two-agent secret-room game. Local states are grid cells; each
/// agent observes its own cell plus a door-open bit. The door status is
/// recomputed from the current joint state every step, never latched.
inline Env secret_room(const SecretRoomParams& params = {}) {
  validate_secret_room_params(params);
  const int side = params.side;
  const int cells = side * side;

  MarkovGame game;
  game.num_agents = 2;
  game.local_state_sizes = {cells, cells};
  game.local_action_sizes = {kNumGridActions, kNumGridActions};
  game.horizon = params.horizon;

  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();
  DeterministicTransitions det;
  det.next.resize(num_s * num_a);
  for (std::int64_t s = 0; s < num_s; ++s) {
    const Cell c0 = cell_at(static_cast<int>(s % cells), side);
    const Cell c1 = cell_at(static_cast<int>(s / cells), side);
    const bool open = secret_room_door_open(params, c0, c1);
    for (int a1 = 0; a1 < kNumGridActions; ++a1) {
      const Cell n1 = secret_room_move(params, c1, a1, open);
      for (int a0 = 0; a0 < kNumGridActions; ++a0) {
        const Cell n0 = secret_room_move(params, c0, a0, open);
        const std::int64_t a = a0 + kNumGridActions * a1;
        det.next[s * num_a + a] = static_cast<std::uint32_t>(
            cell_index(n0, side) + static_cast<std::int64_t>(cells) * cell_index(n1, side));
      }
    }
  }
  game.transition = std::move(det);

  game.initial_dist.assign(num_s, 0.0);
  game.initial_dist[cell_index(params.starts[0], side) +
                    static_cast<std::int64_t>(cells) * cell_index(params.starts[1], side)] = 1.0;

  ObservationMap obs;
  obs.feature_sizes = {{cells, 2}, {cells, 2}};
  obs.obs_features.assign(2, std::vector<std::uint32_t>(num_s * 2));
  for (std::int64_t s = 0; s < num_s; ++s) {
    const Cell c0 = cell_at(static_cast<int>(s % cells), side);
    const Cell c1 = cell_at(static_cast<int>(s / cells), side);
    const std::uint32_t door = secret_room_door_open(params, c0, c1) ? 1 : 0;
    obs.obs_features[0][s * 2] = static_cast<std::uint32_t>(cell_index(c0, side));
    obs.obs_features[0][s * 2 + 1] = door;
    obs.obs_features[1][s * 2] = static_cast<std::uint32_t>(cell_index(c1, side));
    obs.obs_features[1][s * 2 + 1] = door;
  }
  return Env{std::move(game), std::move(obs)};
}

/// Sparse goal task: every agent receives `reward` at the first step in which
/// any agent is within Manhattan distance < radius of the goal; that state is
/// terminal. Grid geometry is inferred from the local state size.
inline RewardedTask sparse_goal_task(const Env& env, Cell goal, double radius, double reward,
                                     double discount = 0.99) {
  const MarkovGame& game = env.game;
  const int cells = game.local_state_sizes.front();
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (side * side != cells)
    throw std::invalid_argument("sparse_goal_task: local state space is not a square grid");
  if (goal.x < 1 || goal.x > side || goal.y < 1 || goal.y > side)
    throw std::invalid_argument("sparse_goal_task: goal outside grid");
  for (auto sz : game.local_state_sizes)
    if (sz != cells) throw std::invalid_argument("sparse_goal_task: heterogeneous grids");

  RewardedTask task;
  task.game = game;
  task.obs = env.obs;
  task.discount = discount;
  const std::int64_t num_s = game.num_states();
  task.rewards.assign(num_s * game.num_agents, 0.0);
  task.terminal.assign(num_s, 0);
  std::vector<std::int32_t> locals(game.num_agents);
  for (std::int64_t s = 0; s < num_s; ++s) {
    unflatten_mixed_radix(s, game.local_state_sizes, locals);
    bool reached = false;
    for (int i = 0; i < game.num_agents; ++i)
      if (manhattan(cell_at(locals[i], side), goal) < radius) reached = true;
    if (reached) {
      task.terminal[s] = 1;
      for (int i = 0; i < game.num_agents; ++i) task.rewards[s * game.num_agents + i] = reward;
    }
  }
  return task;
}

/// Open grid without interior walls; all agents start at cell (1,1) so that
/// exploration objectives start from a concentrated distribution.
inline Env open_grid(int side, int num_agents, int horizon) {
  if (side < 1) throw std::invalid_argument("open_grid: side must be >= 1");
  if (num_agents < 1) throw std::invalid_argument("open_grid: need at least one agent");
  if (horizon < 1) throw std::invalid_argument("open_grid: horizon must be >= 1");
  const int cells = side * side;

  MarkovGame game;
  game.num_agents = num_agents;
  game.local_state_sizes.assign(num_agents, cells);
  game.local_action_sizes.assign(num_agents, kNumGridActions);
  game.horizon = horizon;

  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();
  DeterministicTransitions det;
  det.next.resize(num_s * num_a);
  std::vector<std::int32_t> s_locals(num_agents), a_locals(num_agents), n_locals(num_agents);
  for (std::int64_t s = 0; s < num_s; ++s) {
    unflatten_mixed_radix(s, game.local_state_sizes, s_locals);
    for (std::int64_t a = 0; a < num_a; ++a) {
      unflatten_mixed_radix(a, game.local_action_sizes, a_locals);
      for (int i = 0; i < num_agents; ++i) {
        const Cell moved = apply_move(cell_at(s_locals[i], side), a_locals[i], side);
        n_locals[i] = cell_index(moved, side);
      }
      det.next[s * num_a + a] =
          static_cast<std::uint32_t>(flatten_mixed_radix(n_locals, game.local_state_sizes));
    }
  }
  game.transition = std::move(det);

  game.initial_dist.assign(num_s, 0.0);
  game.initial_dist[0] = 1.0;  // every agent at (1,1)

  ObservationMap obs = local_state_observation(game);
  return Env{std::move(game), std::move(obs)};
}

// ---------------------------------------------------------------------------
// Oracle-enumerable fixtures.
// ---------------------------------------------------------------------------

struct TinySpec {
  std::vector<std::int32_t> state_sizes;
  std::vector<std::int32_t> action_sizes;
  int horizon = 3;
};

inline void check_tiny_caps(const TinySpec& spec) {
  if (spec.state_sizes.empty() || spec.state_sizes.size() != spec.action_sizes.size())
    throw std::invalid_argument("tiny_mg: bad per-agent size lists");
  std::int64_t s = 1, a = 1;
  for (auto v : spec.state_sizes) s *= v;
  for (auto v : spec.action_sizes) a *= v;
  if (s > 16 || a > 16 || spec.horizon > 4 || spec.horizon < 1)
    throw std::invalid_argument("tiny_mg: caps are prod|S_i| <= 16, prod|A_i| <= 16, T <= 4");
}

/// Fully stochastic tiny game with Dirichlet(1,..,1) transition rows and
/// initial distribution (normalized unit exponentials).
inline Env tiny_random_mg(const TinySpec& spec, SplitRng rng) {
  check_tiny_caps(spec);
  MarkovGame game;
  game.num_agents = static_cast<int>(spec.state_sizes.size());
  game.local_state_sizes = spec.state_sizes;
  game.local_action_sizes = spec.action_sizes;
  game.horizon = spec.horizon;
  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();

  auto dirichlet_row = [&rng](std::span<double> row) {
    double total = 0.0;
    for (auto& v : row) {
      v = rng.exponential();
      total += v;
    }
    for (auto& v : row) v /= total;
    // push residual rounding error into the largest entry
    double sum = 0.0;
    for (double v : row) sum += v;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
      if (row[i] > row[arg]) arg = i;
    row[arg] += 1.0 - sum;
  };

  DenseTransitions dense;
  dense.table.resize(num_s * num_a * num_s);
  for (std::int64_t row = 0; row < num_s * num_a; ++row)
    dirichlet_row({dense.table.data() + row * num_s, static_cast<std::size_t>(num_s)});
  game.transition = std::move(dense);
  game.initial_dist.resize(num_s);
  dirichlet_row(game.initial_dist);

  ObservationMap obs = local_state_observation(game);
  return Env{std::move(game), std::move(obs)};
}

/// Explicit dense fixture.
inline Env tiny_table_mg(const TinySpec& spec, std::vector<double> initial_dist,
                         std::vector<double> transition_table) {
  check_tiny_caps(spec);
  MarkovGame game;
  game.num_agents = static_cast<int>(spec.state_sizes.size());
  game.local_state_sizes = spec.state_sizes;
  game.local_action_sizes = spec.action_sizes;
  game.horizon = spec.horizon;
  game.initial_dist = std::move(initial_dist);
  game.transition = DenseTransitions{std::move(transition_table)};
  require_valid(game);
  ObservationMap obs = local_state_observation(game);
  return Env{std::move(game), std::move(obs)};
}

/// Product-structure game: every agent evolves an independent local chain
/// P_i(s_i'|s_i, a_i), and mu is the product of per-agent initials. Used to
/// cross-check that joint DP factorizes under product policies.
inline Env independent_chains_mg(const TinySpec& spec,
                                 const std::vector<std::vector<double>>& local_initials,
                                 const std::vector<std::vector<double>>& local_transitions,
                                 int horizon) {
  TinySpec checked = spec;
  checked.horizon = horizon;
  check_tiny_caps(checked);
  const int n = static_cast<int>(spec.state_sizes.size());
  MarkovGame game;
  game.num_agents = n;
  game.local_state_sizes = spec.state_sizes;
  game.local_action_sizes = spec.action_sizes;
  game.horizon = horizon;
  const std::int64_t num_s = game.num_states();
  const std::int64_t num_a = game.num_actions();

  game.initial_dist.assign(num_s, 1.0);
  std::vector<std::int32_t> s_locals(n), a_locals(n), n_locals(n);
  for (std::int64_t s = 0; s < num_s; ++s) {
    unflatten_mixed_radix(s, game.local_state_sizes, s_locals);
    for (int i = 0; i < n; ++i) game.initial_dist[s] *= local_initials[i][s_locals[i]];
  }

  DenseTransitions dense;
  dense.table.resize(num_s * num_a * num_s);
  for (std::int64_t s = 0; s < num_s; ++s) {
    unflatten_mixed_radix(s, game.local_state_sizes, s_locals);
    for (std::int64_t a = 0; a < num_a; ++a) {
      unflatten_mixed_radix(a, game.local_action_sizes, a_locals);
      double* row = dense.table.data() + (s * num_a + a) * num_s;
      for (std::int64_t next = 0; next < num_s; ++next) {
        unflatten_mixed_radix(next, game.local_state_sizes, n_locals);
        double p = 1.0;
        for (int i = 0; i < n; ++i) {
          const int si = game.local_state_sizes[i];
          const int ai = game.local_action_sizes[i];
          // local table: [(s_i * ai + a_i) * si + next_i]
          p *= local_transitions[i][(s_locals[i] * ai + a_locals[i]) * si + n_locals[i]];
        }
        row[next] = p;
      }
    }
  }
  game.transition = std::move(dense);
  require_valid(game);
  ObservationMap obs = local_state_observation(game);
  return Env{std::move(game), std::move(obs)};
}

/// Per-agent visit-count heatmap (side x side CSV, rows are y = 1..side).
inline std::string heatmap_csv(const MarkovGame& game, const std::vector<Trajectory>& batch,
                               int agent, int side) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(side) * side, 0);
  for (const auto& tr : batch)
    for (const auto& s : tr.states) {
      const int cell = s.locals[agent];
      if (cell < 0 || cell >= side * side)
        throw std::invalid_argument("heatmap_csv: cell outside grid");
      counts[cell]++;
    }
  std::string out;
  char buf[32];
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      std::snprintf(buf, sizeof(buf), "%llu",
                    static_cast<unsigned long long>(counts[x + side * y]));
      out += buf;
      out += (x + 1 == side) ? '\n' : ',';
    }
  }
  return out;
}

}  // namespace mapt
