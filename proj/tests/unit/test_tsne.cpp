#include <gtest/gtest.h>

#include <cmath>

#include "urbanvae/error.hpp"
#include "urbanvae/rng.hpp"
#include "urbanvae/tsne.hpp"

using namespace urbanvae;

namespace {

PointSet random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  PointSet pts(n, std::vector<double>(d));
  for (auto& p : pts)
    for (auto& x : p) x = rng.normal();
  return pts;
}

// Entropy in bits of one row of the conditional matrix, recomputed independently.
double row_entropy_bits(const std::vector<double>& p, std::size_t n, std::size_t row) {
  double h = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = p[row * n + j];
    if (v > 0) h -= v * std::log2(v);
  }
  return h;
}

}  // namespace

TEST(Affinities, EntropyMatchesPerplexity) {
  for (double perp : {5.0, 10.0, 30.0}) {
    const auto pts = random_points(120, 32, static_cast<std::uint64_t>(perp));
    const auto cal = calibrate_affinities(pts, perp);
    for (std::size_t i = 0; i < cal.n; ++i) {
      EXPECT_NEAR(row_entropy_bits(cal.conditional, cal.n, i), std::log2(perp), 1e-3) << "row " << i;
      EXPECT_EQ(cal.conditional[i * cal.n + i], 0.0);
      double s = 0;
      for (std::size_t j = 0; j < cal.n; ++j) s += cal.conditional[i * cal.n + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
      EXPECT_LE(cal.search_iterations[i], 50);
    }
  }
}

TEST(Affinities, TwoPointsSymmetrize) {
  const auto p = symmetrize({0.0, 1.0, 1.0, 0.0}, 2);
  EXPECT_EQ(p, (std::vector<double>{0.0, 0.5, 0.5, 0.0}));
}

TEST(Affinities, SymmetricNonNegativeSumsToOne) {
  const auto pts = random_points(80, 32, 3);
  const auto cal = calibrate_affinities(pts, 15.0);
  const auto p = symmetrize(cal.conditional, cal.n);
  double sum = 0;
  for (std::size_t i = 0; i < cal.n; ++i)
    for (std::size_t j = 0; j < cal.n; ++j) {
      EXPECT_EQ(p[i * cal.n + j], p[j * cal.n + i]);
      EXPECT_GE(p[i * cal.n + j], 0.0);
      sum += p[i * cal.n + j];
    }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Affinities, RejectsLargePerplexity) {
  const auto pts = random_points(30, 4, 1);
  EXPECT_THROW(calibrate_affinities(pts, 10.0), ValidationError);
  EXPECT_THROW(tsne(pts, 1, {.perplexity = 12.0}), ValidationError);
  EXPECT_NO_THROW(calibrate_affinities(pts, 9.9));
}

TEST(Tsne, DeterministicFiniteAndNonNegativeKl) {
  const auto pts = random_points(50, 32, 4);
  const TsneOptions opts{.perplexity = 10.0, .iterations = 400};
  const auto a = tsne(pts, 7, opts), b = tsne(pts, 7, opts);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.kl, b.kl);
  ASSERT_EQ(a.points.size(), 50u);
  for (const auto& p : a.points) EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_GE(a.kl, 0.0);
  EXPECT_EQ(a.kl_trace.size(), 400u);
  EXPECT_NE(tsne(pts, 8, opts).points, a.points);
}

TEST(Tsne, ThreadsDoNotChangeResult) {
  const auto pts = random_points(40, 8, 5);
  const auto a = tsne(pts, 3, {.perplexity = 8.0, .iterations = 300, .threads = 1});
  const auto b = tsne(pts, 3, {.perplexity = 8.0, .iterations = 300, .threads = 3});
  EXPECT_EQ(a.points, b.points);
}

// The KL is sampled every 50 iterations, the cadence at which the standard
// exact optimizer reports it. Per iteration, momentum and adaptive gains give
// occasional small rises; that rate is guarded separately.
TEST(Tsne, KlSettlesAfterExaggeration) {
  int monotone_runs = 0, per_iteration_runs = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    const auto pts = random_points(60, 32, 1000 + run);
    const auto emb = tsne(pts, run, {.perplexity = 10.0});
    const auto& tr = emb.kl_trace;
    ASSERT_EQ(tr.size(), 1000u);
    bool ok = true;
    for (std::size_t i = tr.size() - 51; i < tr.size(); i += 50)
      if (tr[i] > tr[i - 50] * (1.0 + 1e-12)) ok = false;
    monotone_runs += ok;
    bool strict = true;
    for (std::size_t i = tr.size() - 100; i < tr.size(); ++i)
      if (tr[i] > tr[i - 1] * (1.0 + 1e-12)) strict = false;
    per_iteration_runs += strict;
    EXPECT_NEAR(emb.kl, tsne_kl(symmetrize(calibrate_affinities(pts, 10.0).conditional, 60), emb.points), 1e-9);
  }
  EXPECT_GE(monotone_runs, 95);
  EXPECT_GE(per_iteration_runs, 75);
}
