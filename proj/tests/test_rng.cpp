#include <catch2/catch_amalgamated.hpp>

#include "mapt/rng.hpp"

using mapt::SplitRng;

TEST_CASE("identical keys give identical streams") {
  SplitRng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("substreams are independent of derivation order and parent draws") {
  SplitRng parent(7);
  SplitRng early = parent.substream(3);
  parent.next_u64();
  parent.next_u64();
  SplitRng late = parent.substream(3);
  for (int i = 0; i < 20; ++i) REQUIRE(early.next_u64() == late.next_u64());

  // different indices decorrelate
  SplitRng s0 = parent.substream(0);
  SplitRng s1 = parent.substream(1);
  REQUIRE(s0.next_u64() != s1.next_u64());
}

TEST_CASE("uniform01 stays in [0, 1)") {
  SplitRng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("categorical never selects zero-probability entries") {
  SplitRng rng(5);
  const double probs[4] = {0.0, 0.5, 0.0, 0.5};
  for (int i = 0; i < 5000; ++i) {
    const int draw = rng.categorical(probs);
    REQUIRE((draw == 1 || draw == 3));
  }
}

TEST_CASE("categorical frequencies track the distribution") {
  SplitRng rng(11);
  const double probs[3] = {0.2, 0.3, 0.5};
  int counts[3] = {0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[rng.categorical(probs)]++;
  for (int k = 0; k < 3; ++k) {
    const double p = probs[k];
    const double tolerance = 4.0 * std::sqrt(p * (1 - p) / n);
    REQUIRE(std::abs(counts[k] / static_cast<double>(n) - p) < tolerance);
  }
}
