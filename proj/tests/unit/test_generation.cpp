#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "urbanvae/error.hpp"
#include "urbanvae/generation.hpp"
#include "urbanvae/pgm.hpp"
#include "urbanvae/rng.hpp"

using namespace urbanvae;
using urbanvae::testing::TempDir;

namespace {

Vae<float> small_model() {
  Architecture a;
  a.channels = {4, 8, 8, 8};
  Vae<float> m(a);
  m.initialize(3);
  return m;
}

RasterImage random_binary(std::uint64_t seed) {
  Rng rng(seed);
  RasterImage img;
  for (auto& v : img.pixels) v = rng.bernoulli(0.15) ? 1.0f : 0.0f;
  return img;
}

}  // namespace

TEST(SamplePrior, DeterministicAndSized) {
  EXPECT_EQ(sample_prior(5, 9), sample_prior(5, 9));
  EXPECT_NE(sample_prior(5, 9), sample_prior(5, 10));
  const auto one = sample_prior(1, 2);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].size(), 32u);
  EXPECT_THROW(sample_prior(0, 1), ValidationError);
}

TEST(SamplePrior, NormalitySanityBounds) {
  const auto codes = sample_prior(10000, 77);
  for (int d = 0; d < 32; ++d) {
    double s = 0, sq = 0;
    for (const auto& c : codes) {
      s += c[d];
      sq += static_cast<double>(c[d]) * c[d];
    }
    const double mean = s / codes.size();
    const double sd = std::sqrt(sq / codes.size() - mean * mean);
    EXPECT_GT(mean, -0.05);
    EXPECT_LT(mean, 0.05);
    EXPECT_GT(sd, 0.95);
    EXPECT_LT(sd, 1.05);
  }
}

TEST(Generate, EqualsDecodeAndIsDeterministic) {
  const auto m = small_model();
  const auto codes = sample_prior(4, 5);
  const auto a = generate(m, codes, 5), b = generate(m, codes, 5, std::nullopt, 2);
  ASSERT_EQ(a.images.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    nn::Tensor<float> z({32}, std::vector<float>(codes[i]));
    EXPECT_EQ(a.images[i].pixels, m.decode(z).to_vector());
    EXPECT_EQ(a.images[i].pixels, b.images[i].pixels);
    for (float p : a.images[i].pixels) {
      EXPECT_GT(p, 0.0f);
      EXPECT_LT(p, 1.0f);
    }
  }
  EXPECT_EQ(a.codes, codes);
  EXPECT_EQ(a.images[2].city_id, "sample_002");
}

TEST(ReconstructionGrid, LayoutAndRows) {
  const auto m = small_model();
  std::vector<RasterImage> images;
  for (int i = 0; i < 5; ++i) images.push_back(random_binary(i));
  const auto grid = reconstruction_grid(m, images);
  EXPECT_EQ(grid.width, 5 * 64 + 4 * 2);
  EXPECT_EQ(grid.height, 2 * 64 + 2);
  const auto recon = reconstruct(m, images);
  for (int i = 0; i < 5; ++i) {
    const int x0 = i * 66;
    const auto top = to_gray(images[i]);
    const auto mu = m.encode(image_tensor<float>(images[i])).mu;
    RasterImage want = tensor_image(m.decode(mu));
    EXPECT_EQ(recon[i].pixels, want.pixels);
    const auto bottom = to_gray(want);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        ASSERT_EQ(grid.at(r, x0 + c), top.at(r, c));
        ASSERT_EQ(grid.at(66 + r, x0 + c), bottom.at(r, c));
      }
  }
  EXPECT_EQ(grid.at(64, 0), 255);   // gutter row
  EXPECT_EQ(grid.at(0, 64), 255);   // gutter column
}

TEST(ReconstructionGrid, RejectsBadCounts) {
  const auto m = small_model();
  EXPECT_THROW(reconstruction_grid(m, {}), ValidationError);
  EXPECT_THROW(reconstruction_grid(m, std::vector<RasterImage>(17)), ValidationError);
}

TEST(WriteSamples, ThresholdedExportIsBinaryAndSidecarRoundTrips) {
  TempDir dir;
  const auto m = small_model();
  auto batch = generate(m, sample_prior(3, 11), 11, 0.5);
  write_samples(batch, dir.path(), 2);
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03d.pgm", i);
    const auto img = read_pgm(dir / name);
    for (auto v : img.pixels) EXPECT_TRUE(v == 0 || v == 255);
  }
  const auto grid = read_pgm(dir / "samples_grid.pgm");
  EXPECT_EQ(grid.width, 2 * 64 + 2);
  EXPECT_EQ(grid.height, 2 * 64 + 2);
  const auto sidecar = read_sample_sidecar(dir / "samples.json");
  EXPECT_EQ(sidecar.seed, 11u);
  EXPECT_EQ(sidecar.codes, batch.codes);
  EXPECT_EQ(sidecar.threshold.value_or(-1), 0.5);
  // The sidecar is enough to regenerate the batch.
  EXPECT_EQ(generate(m, sidecar.codes).images[1].pixels, batch.images[1].pixels);
}

TEST(ComposeGrid, WidthArithmetic) {
  const std::vector<std::vector<GrayImage>> rows{{GrayImage(64, 64), GrayImage(64, 64), GrayImage(64, 64)}};
  const auto g = compose_grid(rows);
  EXPECT_EQ(g.width, 3 * 64 + 2 * 2);
  EXPECT_EQ(g.height, 64);
}
