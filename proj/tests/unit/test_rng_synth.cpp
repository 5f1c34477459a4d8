#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "urbanvae/error.hpp"
#include "urbanvae/raster.hpp"
#include "urbanvae/rng.hpp"
#include "urbanvae/synth.hpp"

using namespace urbanvae;

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, RangesHold) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
    const auto v = rng.between(-3, 3);
    EXPECT_GE(v, -3);
    EXPECT_LE(v, 3);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  constexpr int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t e = 0; e < 20; ++e)
    for (std::uint64_t i = 0; i < 20; ++i) seen.insert(derive_seed(1, "eps", e, i));
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
  EXPECT_EQ(derive_seed(1, "a", 3), derive_seed(1, "a", 3));
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(1);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Synth, DeterministicAndPrefixStable) {
  const auto a = synth_corpus(12, 7);
  const auto b = synth_corpus(30, 7);
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].city_id, b[i].city_id);
    EXPECT_EQ(a[i].segments, b[i].segments);
  }
  EXPECT_NE(synth_corpus(3, 8)[0].segments, a[0].segments);
}

TEST(Synth, ClassesCycleAndLabel) {
  const auto nets = synth_corpus(6, 1);
  EXPECT_EQ(nets[0].label.value_or(""), "grid");
  EXPECT_EQ(nets[1].label.value_or(""), "radial");
  EXPECT_EQ(nets[2].label.value_or(""), "random");
  EXPECT_EQ(nets[3].city_id, "city_0003_grid");
  const auto radial_only = synth_corpus(4, 1, {SynthClass::radial});
  for (const auto& n : radial_only) EXPECT_EQ(n.label.value_or(""), "radial");
}

TEST(Synth, ProducesNonTrivialFiniteNetworks) {
  for (const auto& net : synth_corpus(30, 3)) {
    EXPECT_FALSE(net.segments.empty());
    for (const auto& s : net.segments) {
      EXPECT_TRUE(std::isfinite(s.a.x) && std::isfinite(s.a.y) && std::isfinite(s.b.x) && std::isfinite(s.b.y));
    }
    const auto img = render_city(net);
    EXPECT_GT(img.count_on(), 10u) << net.city_id;
    EXPECT_LT(img.count_on(), static_cast<std::size_t>(kImagePixels / 2)) << net.city_id;
  }
}

TEST(Synth, ParseClass) {
  EXPECT_EQ(parse_synth_class("grid"), SynthClass::grid);
  EXPECT_EQ(parse_synth_class("random"), SynthClass::random);
  EXPECT_THROW(parse_synth_class("spiral"), ValidationError);
  EXPECT_THROW(synth_corpus(3, 1, {}), ValidationError);
}
