#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "clusterflow/rng.hpp"

namespace {

using clusterflow::Philox4x32;
using clusterflow::RngStream;

static_assert(std::uniform_random_bit_generator<RngStream>);

// Known-answer vectors published with Random123 (kat_vectors, philox4x32 10 rounds).
TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(Philox4x32::block({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, EqualIdsGiveIdenticalSequences) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(RngStream, DistinctIdsDiffer) {
  RngStream a(42, 7), b(42, 8), c(43, 7);
  int same_b = 0, same_c = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a();
    same_b += x == b();
    same_c += x == c();
  }
  EXPECT_EQ(same_b, 0);
  EXPECT_EQ(same_c, 0);
}

TEST(RngStream, ForkIgnoresConsumedState) {
  RngStream a(1, 2);
  const auto child_before = a.fork(5);
  for (int i = 0; i < 17; ++i) a();
  EXPECT_EQ(a.fork(5), child_before);
  EXPECT_NE(a.fork(5).stream_id(), a.fork(6).stream_id());
}

TEST(RngStream, UniformIsInUnitInterval) {
  RngStream rng(3, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = rng.uniform_open();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += u;
  }
  // mean 1/2, sd 1/sqrt(12 n)
  EXPECT_NEAR(sum / n, 0.5, 4.0 / std::sqrt(12.0 * n));
}

TEST(RngStream, BelowIsUniform) {
  RngStream rng(9, 1);
  std::array<int, 7> counts{};
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4.0 * std::sqrt(n * (1.0 / 7) * (6.0 / 7)));
}

TEST(RngStream, GeometricHalfPmf) {
  RngStream rng(11, 0);
  const int n = 400000;
  std::vector<int> counts(8, 0);
  for (int i = 0; i < n; ++i) {
    const auto g = rng.geometric_half();
    ASSERT_GE(g, 1u);
    if (g < counts.size()) ++counts[g];
  }
  for (int g = 1; g < 8; ++g) {
    const double p = std::ldexp(1.0, -g);
    EXPECT_NEAR(counts[g], n * p, 4.0 * std::sqrt(n * p * (1 - p))) << "g=" << g;
  }
}

}  // namespace
