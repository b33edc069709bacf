#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>

namespace mapt {

namespace detail {

// SplitMix64 step; used both as a stream mixer and to expand seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
  std::uint64_t m = splitmix64(s);
  return m ^ b;
}

}  // namespace detail

/// Seeded random stream with deterministic sub-stream derivation.
///
/// substream(k) depends only on (key, k), so batch element k draws the same
/// numbers no matter in which order (or on which thread) it is evaluated.
/// All sampling helpers are written against the fully specified mt19937_64
/// sequence; none rely on implementation-defined <random> distributions.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t key) : key_(key) {
    std::uint64_t s = key;
    // warm the engine from an expanded seed sequence
    std::uint64_t a = detail::splitmix64(s);
    std::uint64_t b = detail::splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t key() const { return key_; }

  /// Derived stream for sub-task k; independent of draws made on *this.
  SplitRng substream(std::uint64_t k) const { return SplitRng(detail::mix_keys(key_, k)); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Index draw from an (approximately normalized) probability vector.
  /// Zero-probability entries are never selected.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty distribution");
    const double u = uniform01();
    double cum = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = static_cast<int>(i);
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    if (last_positive < 0) throw std::invalid_argument("categorical: no positive mass");
    return last_positive;  // u fell into the rounding gap below 1
  }

  /// Unit exponential via inversion (deterministic across platforms).
  double exponential() {
    double u = uniform01();
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    return -std::log(u);
  }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace mapt
