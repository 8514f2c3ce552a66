#include <gtest/gtest.h>

#include <array>
#include <set>

#include "icl/data_synth.hpp"
#include "icl/errors.hpp"

using namespace icl;

namespace {

std::array<std::size_t, 256> histogram(const LabelMap& m) {
  std::array<std::size_t, 256> h{};
  for (auto l : m.labels) ++h[l];
  return h;
}

bool same_sample(const SegSample& a, const SegSample& b) {
  return a.height == b.height && a.width == b.width && a.image == b.image && a.mask == b.mask && a.seed == b.seed;
}

}  // namespace

TEST(GenerateSample, DeterministicInSeed) {
  PhantomConfig c;
  EXPECT_TRUE(same_sample(generate_sample(42, c), generate_sample(42, c)));
  EXPECT_FALSE(same_sample(generate_sample(42, c), generate_sample(43, c)));
}

TEST(GenerateSample, EveryClassAppears) {
  for (std::size_t classes : {2u, 4u, 6u}) {
    PhantomConfig c;
    c.classes = classes;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      auto h = histogram(generate_sample(seed, c).mask);
      for (std::size_t z = 0; z < classes; ++z) EXPECT_GT(h[z], 0u) << "class " << z << " seed " << seed;
      for (std::size_t z = classes; z < 256; ++z) EXPECT_EQ(h[z], 0u);
    }
  }
}

TEST(GenerateSample, ImageInUnitRangeAndFloatExact) {
  auto s = generate_sample(7, PhantomConfig{});
  ASSERT_EQ(s.image.size(), 64u * 64u);
  for (double v : s.image) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(static_cast<double>(static_cast<float>(v)), v);
  }
}

TEST(GenerateSample, ForegroundFractionOverThousandSeeds) {
  PhantomConfig c;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto s = generate_sample(seed, c);
    std::size_t fg = 0;
    for (auto l : s.mask.labels) fg += l != 0;
    total += static_cast<double>(fg) / static_cast<double>(s.mask.size());
  }
  const double mean = total / 1000.0;
  EXPECT_GE(mean, 0.05);
  EXPECT_LE(mean, 0.5);
  // Measured once and frozen; a change here means the generator changed.
  EXPECT_NEAR(mean, 0.099241455078125, 1e-12);
}

TEST(GenerateSample, InvalidConfigs) {
  PhantomConfig c;
  c.classes = 1;
  EXPECT_THROW(generate_sample(0, c), ArgumentError);
  c = {};
  c.height = 4;
  EXPECT_THROW(generate_sample(0, c), ArgumentError);
}

TEST(MakeSplit, DefaultPoolSizes) {
  auto split = make_split(SplitConfig{}, PhantomConfig{});
  EXPECT_EQ(split.labeled.size(), 4u);
  EXPECT_EQ(split.unlabeled.size(), 60u);
  EXPECT_EQ(split.val.size(), 20u);
  for (const auto& s : split.labeled) EXPECT_TRUE(s.has_mask());
  for (const auto& s : split.val) EXPECT_TRUE(s.has_mask());
  for (const auto& s : split.unlabeled) EXPECT_FALSE(s.has_mask());
}

TEST(MakeSplit, SameMasterSeedSameSplit) {
  SplitConfig sc{3, 5, 4, 11};
  auto a = make_split(sc, PhantomConfig{}), b = make_split(sc, PhantomConfig{});
  for (std::size_t i = 0; i < a.labeled.size(); ++i) EXPECT_TRUE(same_sample(a.labeled[i], b.labeled[i]));
  for (std::size_t i = 0; i < a.unlabeled.size(); ++i) EXPECT_TRUE(same_sample(a.unlabeled[i], b.unlabeled[i]));
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_TRUE(same_sample(a.val[i], b.val[i]));
  sc.master_seed = 12;
  EXPECT_NE(make_split(sc, PhantomConfig{}).labeled[0].seed, a.labeled[0].seed);
}

TEST(MakeSplit, PoolsUseDisjointSeeds) {
  auto split = make_split(SplitConfig{}, PhantomConfig{});
  std::set<std::uint64_t> seeds;
  for (const auto* pool : {&split.labeled, &split.unlabeled, &split.val}) {
    for (const auto& s : *pool) EXPECT_TRUE(seeds.insert(s.seed).second) << s.seed;
  }
  EXPECT_EQ(seeds.size(), 84u);
}

class ComposeBatch : public ::testing::Test {
 protected:
  DatasetSplit split = make_split(SplitConfig{4, 6, 2, 5}, PhantomConfig{32, 32, 4, 0.05});
};

TEST_F(ComposeBatch, HalfLabeledHalfUnlabeled) {
  auto b = compose_batch(split, BatchPlan{5, 0, 2, 2});
  EXPECT_EQ(b.labeled.size(), 2u);
  EXPECT_EQ(b.unlabeled.size(), 2u);
  for (const auto& s : b.labeled) EXPECT_TRUE(s.has_mask());
  for (const auto& s : b.unlabeled) EXPECT_FALSE(s.has_mask());
}

TEST_F(ComposeBatch, SameStepSameBatch) {
  auto a = compose_batch(split, BatchPlan{5, 17, 2, 2});
  auto b = compose_batch(split, BatchPlan{5, 17, 2, 2});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(same_sample(a.labeled[i], b.labeled[i]));
    EXPECT_TRUE(same_sample(a.unlabeled[i], b.unlabeled[i]));
  }
}

TEST_F(ComposeBatch, UnlabeledDrawnWithoutReplacementWithinAPass) {
  // Six unlabeled items and two per step: three steps cover the pool once.
  std::multiset<std::uint64_t> seen;
  for (std::uint64_t step = 0; step < 3; ++step) {
    for (const auto& s : compose_batch(split, BatchPlan{5, step, 0, 2}).unlabeled) seen.insert(s.seed);
  }
  std::multiset<std::uint64_t> pool;
  for (const auto& s : split.unlabeled) pool.insert(s.seed);
  EXPECT_EQ(seen, pool);
}

TEST_F(ComposeBatch, EmptyPoolIsAConfigError) {
  DatasetSplit empty;
  EXPECT_THROW(compose_batch(empty, BatchPlan{}), ConfigError);
  EXPECT_NO_THROW(compose_batch(split, BatchPlan{5, 0, 2, 0}));
}

TEST(Augment, PreservesClassCountsAndPairsImageWithMask) {
  auto s = generate_sample(3, PhantomConfig{});
  const auto before = histogram(s.mask);
  for (int flips = 0; flips < 4; ++flips) {
    for (unsigned turns = 0; turns < 4; ++turns) {
      auto a = augment(s, flips & 1, flips & 2, turns);
      EXPECT_EQ(histogram(a.mask), before);
      // The same permutation moves image and mask: pixel value multisets per class are kept.
      std::multiset<double> va, vs;
      for (std::size_t i = 0; i < a.image.size(); ++i) {
        if (a.mask.labels[i] == 3) va.insert(a.image[i]);
        if (s.mask.labels[i] == 3) vs.insert(s.image[i]);
      }
      EXPECT_EQ(va, vs);
    }
  }
}

TEST(Augment, FourQuarterTurnsAreIdentity) {
  auto s = generate_sample(4, PhantomConfig{});
  EXPECT_TRUE(same_sample(augment(s, false, false, 4), s));
  auto once = augment(s, false, false, 1);
  EXPECT_TRUE(same_sample(augment(once, false, false, 3), s));
  EXPECT_TRUE(same_sample(augment(augment(s, true, false, 0), true, false, 0), s));
}

TEST(Augment, QuarterTurnMovesPixelsCounterClockwise) {
  SegSample s;
  s.height = s.width = 2;
  s.image = {0.0, 0.25, 0.5, 0.75};  // [[a, b], [c, d]]
  s.mask = LabelMap(2, 2);
  s.mask.labels = {0, 1, 2, 3};
  auto r = augment(s, false, false, 1);
  // Counter-clockwise: [[b, d], [a, c]].
  EXPECT_EQ(r.mask.labels, (std::vector<std::uint8_t>{1, 3, 0, 2}));
  EXPECT_EQ(r.image, (std::vector<double>{0.25, 0.75, 0.0, 0.5}));
}

TEST(SampleFile, RoundTripReproducesBytesAndMasks) {
  auto s = generate_sample(9, PhantomConfig{});
  auto bytes = encode_sample(s, 4);
  EXPECT_EQ(bytes.size(), 4u + 4 * 4 + 64 * 64 * 4 + 64 * 64);
  std::size_t classes = 0;
  auto back = decode_sample(bytes, &classes);
  EXPECT_EQ(classes, 4u);
  EXPECT_EQ(back.mask, s.mask);
  EXPECT_EQ(back.image, s.image);
  EXPECT_EQ(encode_sample(back, 4), bytes);
}

TEST(SampleFile, RejectsCorruption) {
  auto bytes = encode_sample(generate_sample(10, PhantomConfig{}), 4);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_sample(bad), FormatError);
  bad = bytes;
  bad[4] = 9;  // version
  EXPECT_THROW(decode_sample(bad), FormatError);
  bad = bytes;
  bad.back() = 7;  // label outside [0, 4)
  EXPECT_THROW(decode_sample(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(decode_sample(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_sample(bad), FormatError);
}
