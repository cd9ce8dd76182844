#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tao/rle.hpp"

using namespace tao;

TEST(Rle, EmptyAndFull4x4) {
  MaskPlane empty(4, 4);
  EXPECT_EQ(rle_encode(empty).runs, (std::vector<std::uint32_t>{16}));
  MaskPlane full(4, 4);
  for (std::size_t i = 0; i < full.size(); ++i) full.set_index(i);
  EXPECT_EQ(rle_encode(full).runs, (std::vector<std::uint32_t>{0, 16}));
  EXPECT_EQ(rle_decode(rle_encode(full)), full);
}

TEST(Rle, Alternating) {
  MaskPlane m(3, 1);
  m.set(1, 0);
  EXPECT_EQ(rle_encode(m).runs, (std::vector<std::uint32_t>{1, 1, 1}));
}

TEST(Rle, ZeroSizedPlane) {
  const MaskPlane m(0, 0);
  const auto r = rle_encode(m);
  EXPECT_EQ(r.runs, (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(rle_decode(r), m);
}

TEST(Rle, RejectsMalformedRuns) {
  EXPECT_THROW(rle_decode({2, 2, {3}}), ValidationError);           // sum mismatch
  EXPECT_THROW(rle_decode({2, 2, {1, 0, 3}}), ValidationError);     // zero interior run
  EXPECT_THROW(rle_decode({2, 2, {}}), ValidationError);            // no runs
  EXPECT_THROW(rle_decode({2, 2, {0}}), ValidationError);           // lone zero run
  EXPECT_THROW(rle_decode({-1, 2, {0}}), ValidationError);
  EXPECT_NO_THROW(rle_decode({2, 2, {0, 4}}));
}

TEST(Rle, RandomRoundTrip) {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    const int w = static_cast<int>(rng.integer(1, 24)), h = static_cast<int>(rng.integer(1, 24));
    const auto m = oracle::random_mask(rng, w, h, rng.uniform());
    const auto r = rle_encode(m);
    EXPECT_NO_THROW(rle_validate(r));
    EXPECT_EQ(rle_decode(r), m);
    EXPECT_EQ(rle_encode(rle_decode(r)), r);
  }
}
