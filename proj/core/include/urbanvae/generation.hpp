#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "urbanvae/pgm.hpp"
#include "urbanvae/raster.hpp"
#include "urbanvae/vae.hpp"

namespace urbanvae {

using LatentCode = std::vector<float>;

/// n standard-normal codes from one Box-Muller stream, so the first m codes of
/// a larger draw equal a draw of m with the same seed.
std::vector<LatentCode> sample_prior(std::size_t n, std::uint64_t seed, int dim = kLatentDim);

struct SampleBatch {
  std::uint64_t seed = 0;
  std::vector<LatentCode> codes;
  std::vector<RasterImage> images;  // decoder probabilities
  /// When set, exports are binarized at this level.
  std::optional<double> threshold;
};

SampleBatch generate(const Vae<float>& model, std::vector<LatentCode> codes, std::uint64_t seed = 0,
                     std::optional<double> threshold = std::nullopt, int threads = 1);

/// Decodes each image's posterior mean.
std::vector<RasterImage> reconstruct(const Vae<float>& model, const std::vector<RasterImage>& images,
                                     int threads = 1);

inline constexpr int kGridGutter = 2;
inline constexpr std::size_t kMaxGridColumns = 16;

/// Rows of equally long image lists composed with white gutters.
GrayImage compose_grid(const std::vector<std::vector<GrayImage>>& rows, int gutter = kGridGutter);

/// Originals on top, reconstructions from the posterior mean below.
/// Throws ValidationError for an empty list or more than 16 images.
GrayImage reconstruction_grid(const Vae<float>& model, const std::vector<RasterImage>& images, int threads = 1);

/// sample_NNN.pgm per image, a grid of all samples, and samples.json holding
/// the seed, threshold and codes. Returns every file written.
std::vector<std::filesystem::path> write_samples(const SampleBatch& batch, const std::filesystem::path& dir,
                                                 std::size_t grid_columns = 8);

/// Reads the codes back from a samples.json sidecar.
SampleBatch read_sample_sidecar(const std::filesystem::path& path);

}  // namespace urbanvae
