#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapt/markov_game.hpp"
#include "mapt/mlp.hpp"
#include "mapt/rng.hpp"

namespace mapt {

enum class PolicyClass : std::uint8_t { kTabular = 0, kMlp = 1 };

/// Differentiable categorical policy over discrete observation features.
/// Tabular keeps one logit row per flattened observation; Mlp feeds
/// concatenated one-hot blocks through a tanh network. Both end in a softmax,
/// so every action keeps strictly positive probability and importance weights
/// stay finite.
class AgentPolicy {
 public:
  static AgentPolicy tabular(std::vector<std::int32_t> feature_sizes, std::int32_t num_actions) {
    AgentPolicy p;
    p.cls_ = PolicyClass::kTabular;
    p.feature_sizes_ = std::move(feature_sizes);
    p.num_actions_ = num_actions;
    std::int64_t rows = 1;
    for (auto f : p.feature_sizes_) rows *= f;
    p.params_.assign(static_cast<std::size_t>(rows) * num_actions, 0.0);  // uniform policy
    return p;
  }

  static AgentPolicy mlp(std::vector<std::int32_t> feature_sizes, std::int32_t num_actions,
                         std::vector<std::int32_t> hidden, SplitRng& rng) {
    AgentPolicy p;
    p.cls_ = PolicyClass::kMlp;
    p.feature_sizes_ = std::move(feature_sizes);
    p.num_actions_ = num_actions;
    p.hidden_ = std::move(hidden);
    const MlpSpec spec = p.mlp_spec();
    p.params_.resize(spec.param_count());
    xavier_uniform_init(spec, rng, p.params_);
    return p;
  }

  PolicyClass policy_class() const { return cls_; }
  const std::vector<std::int32_t>& feature_sizes() const { return feature_sizes_; }
  const std::vector<std::int32_t>& hidden_widths() const { return hidden_; }
  std::int32_t num_actions() const { return num_actions_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  bool same_architecture(const AgentPolicy& other) const {
    return cls_ == other.cls_ && feature_sizes_ == other.feature_sizes_ &&
           hidden_ == other.hidden_ && num_actions_ == other.num_actions_;
  }

  /// Softmax action probabilities at the given observation features.
  void action_distribution(std::span<const std::uint32_t> obs, std::span<double> out) const {
    logits(obs, out);
    softmax_in_place(out);
  }

  std::vector<double> action_distribution(std::span<const std::uint32_t> obs) const {
    std::vector<double> out(num_actions_);
    action_distribution(obs, out);
    return out;
  }

  double log_prob(std::span<const std::uint32_t> obs, std::int32_t action) const {
    check_action(action);
    thread_local std::vector<double> buf;
    buf.resize(num_actions_);
    logits(obs, buf);
    return buf[action] - log_sum_exp(buf);
  }

  /// Accumulates coeff * d(log pi(action|obs))/d(params) into grad.
  void add_grad_log_prob(std::span<const std::uint32_t> obs, std::int32_t action, double coeff,
                         std::span<double> grad) const {
    check_action(action);
    thread_local std::vector<double> probs;
    probs.resize(num_actions_);
    if (cls_ == PolicyClass::kTabular) {
      action_distribution(obs, probs);
      double* row_grad = grad.data() + obs_row(obs) * num_actions_;
      for (std::int32_t a = 0; a < num_actions_; ++a)
        row_grad[a] += coeff * ((a == action ? 1.0 : 0.0) - probs[a]);
      return;
    }
    const MlpSpec spec = mlp_spec();
    thread_local MlpWorkspace ws;
    auto out = mlp_forward(spec, params_, obs, ws);
    std::copy(out.begin(), out.end(), probs.begin());
    softmax_in_place(probs);
    // d(log softmax[a])/d(logits) = onehot(a) - probs
    thread_local std::vector<double> dlogits;
    dlogits.resize(num_actions_);
    for (std::int32_t a = 0; a < num_actions_; ++a)
      dlogits[a] = (a == action ? 1.0 : 0.0) - probs[a];
    mlp_backward(spec, params_, obs, dlogits, coeff, ws, grad);
  }

  std::vector<double> grad_log_prob(std::span<const std::uint32_t> obs,
                                    std::int32_t action) const {
    std::vector<double> grad(params_.size(), 0.0);
    add_grad_log_prob(obs, action, 1.0, grad);
    return grad;
  }

  MlpSpec mlp_spec() const {
    MlpSpec spec;
    spec.input_blocks = feature_sizes_;
    spec.hidden = hidden_;
    spec.outputs = num_actions_;
    return spec;
  }

  std::int64_t obs_row(std::span<const std::uint32_t> obs) const {
    std::int64_t row = 0;
    for (std::size_t f = feature_sizes_.size(); f-- > 0;) {
      if (obs[f] >= static_cast<std::uint32_t>(feature_sizes_[f]))
        throw std::out_of_range("observation feature out of range");
      row = row * feature_sizes_[f] + obs[f];
    }
    return row;
  }

 private:
  void check_action(std::int32_t action) const {
    if (action < 0 || action >= num_actions_) throw std::out_of_range("action out of range");
  }

  void logits(std::span<const std::uint32_t> obs, std::span<double> out) const {
    if (cls_ == PolicyClass::kTabular) {
      const double* row = params_.data() + obs_row(obs) * num_actions_;
      std::copy(row, row + num_actions_, out.begin());
      return;
    }
    for (std::size_t f = 0; f < feature_sizes_.size(); ++f)
      if (obs[f] >= static_cast<std::uint32_t>(feature_sizes_[f]))
        throw std::out_of_range("observation feature out of range");
    const MlpSpec spec = mlp_spec();
    thread_local MlpWorkspace ws;
    auto o = mlp_forward(spec, params_, obs, ws);
    std::copy(o.begin(), o.end(), out.begin());
  }

  static void softmax_in_place(std::span<double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (auto& x : v) {
      x = std::exp(x - mx);
      total += x;
    }
    for (auto& x : v) x /= total;
  }

  static double log_sum_exp(std::span<const double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += std::exp(x - mx);
    return mx + std::log(total);
  }

  PolicyClass cls_ = PolicyClass::kTabular;
  std::vector<std::int32_t> feature_sizes_;
  std::vector<std::int32_t> hidden_;
  std::int32_t num_actions_ = 0;
  std::vector<double> params_;
};

using PolicySet = std::vector<AgentPolicy>;

/// Mean exact categorical KL(new || old) over a flat batch of observations
/// (num_features indices per observation). This is the on-batch trust-region
/// divergence used by the inner ascent loops.
inline double policy_kl(const AgentPolicy& new_policy, const AgentPolicy& old_policy,
                        std::span<const std::uint32_t> obs_flat) {
  if (!new_policy.same_architecture(old_policy))
    throw std::invalid_argument("policy_kl: mismatched architectures");
  const int f = static_cast<int>(new_policy.feature_sizes().size());
  if (obs_flat.empty() || obs_flat.size() % f != 0)
    throw std::invalid_argument("policy_kl: empty or misshaped observation batch");
  const std::size_t count = obs_flat.size() / f;
  const std::int32_t num_a = new_policy.num_actions();
  std::vector<double> p(num_a), q(num_a);
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    auto obs = obs_flat.subspan(i * f, f);
    new_policy.action_distribution(obs, p);
    old_policy.action_distribution(obs, q);
    for (std::int32_t a = 0; a < num_a; ++a)
      if (p[a] > 0.0) total += p[a] * (std::log(p[a]) - std::log(q[a]));
  }
  return total / static_cast<double>(count);
}

/// Uniform tabular policies over the map's observation features.
inline PolicySet uniform_tabular_policies(const MarkovGame& game, const ObservationMap& obs) {
  PolicySet set;
  set.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i)
    set.push_back(AgentPolicy::tabular(obs.feature_sizes[i], game.local_action_sizes[i]));
  return set;
}

inline PolicySet mlp_policies(const MarkovGame& game, const ObservationMap& obs,
                              const std::vector<std::int32_t>& hidden, SplitRng rng) {
  PolicySet set;
  set.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    SplitRng agent_rng = rng.substream(i);
    set.push_back(
        AgentPolicy::mlp(obs.feature_sizes[i], game.local_action_sizes[i], hidden, agent_rng));
  }
  return set;
}

/// Throws when the policy set cannot act in the given game/observation map.
inline void check_compatible(const PolicySet& policies, const MarkovGame& game,
                             const ObservationMap& obs) {
  if (static_cast<int>(policies.size()) != game.num_agents)
    throw std::invalid_argument("policy set size != num_agents");
  for (int i = 0; i < game.num_agents; ++i) {
    if (policies[i].num_actions() != game.local_action_sizes[i])
      throw std::invalid_argument("architecture mismatch: agent " + std::to_string(i) +
                                  " action count " + std::to_string(policies[i].num_actions()) +
                                  " != game " + std::to_string(game.local_action_sizes[i]));
    if (policies[i].feature_sizes() != obs.feature_sizes[i])
      throw std::invalid_argument("architecture mismatch: agent " + std::to_string(i) +
                                  " observation encoding differs from environment");
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "MAPT", version u16, agent count u16; per agent:
// class tag u8, feature sizes (u32 count + entries), layer widths including
// the action head (u32 count + entries), parameter count u64, parameters as
// little-endian IEEE-754 float64. Round-trips are bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::ofstream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

inline void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u64(std::ofstream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint16_t get_u16(std::ifstream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t get_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

inline void save_checkpoint(const PolicySet& policies, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write("MAPT", 4);
  detail::put_u16(out, 1);
  detail::put_u16(out, static_cast<std::uint16_t>(policies.size()));
  for (const auto& p : policies) {
    out.put(static_cast<char>(p.policy_class()));
    detail::put_u32(out, static_cast<std::uint32_t>(p.feature_sizes().size()));
    for (auto f : p.feature_sizes()) detail::put_u32(out, static_cast<std::uint32_t>(f));
    detail::put_u32(out, static_cast<std::uint32_t>(p.hidden_widths().size() + 1));
    for (auto w : p.hidden_widths()) detail::put_u32(out, static_cast<std::uint32_t>(w));
    detail::put_u32(out, static_cast<std::uint32_t>(p.num_actions()));
    detail::put_u64(out, p.params().size());
    for (double v : p.params()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      detail::put_u64(out, bits);
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline PolicySet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MAPT")
    throw std::runtime_error("load_checkpoint: bad magic bytes in " + path);
  const std::uint16_t version = detail::get_u16(in);
  if (version != 1) throw std::runtime_error("load_checkpoint: unsupported format version");
  const std::uint16_t agents = detail::get_u16(in);
  PolicySet set;
  set.reserve(agents);
  for (int i = 0; i < agents; ++i) {
    const int tag = in.get();
    if (tag != 0 && tag != 1) throw std::runtime_error("load_checkpoint: bad class tag");
    const std::uint32_t num_features = detail::get_u32(in);
    std::vector<std::int32_t> features(num_features);
    for (auto& f : features) f = static_cast<std::int32_t>(detail::get_u32(in));
    const std::uint32_t num_widths = detail::get_u32(in);
    if (num_widths == 0) throw std::runtime_error("load_checkpoint: missing action head width");
    std::vector<std::int32_t> widths(num_widths);
    for (auto& w : widths) w = static_cast<std::int32_t>(detail::get_u32(in));
    const std::int32_t num_actions = widths.back();
    widths.pop_back();
    const std::uint64_t count = detail::get_u64(in);

    AgentPolicy p;
    if (tag == 0) {
      p = AgentPolicy::tabular(features, num_actions);
    } else {
      SplitRng dummy(0);
      p = AgentPolicy::mlp(features, num_actions, widths, dummy);
    }
    if (p.params().size() != count)
      throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (auto& v : p.params()) {
      const std::uint64_t bits = detail::get_u64(in);
      std::memcpy(&v, &bits, 8);
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
    set.push_back(std::move(p));
  }
  return set;
}

}  // namespace mapt
