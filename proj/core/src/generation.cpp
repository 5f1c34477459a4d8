#include "urbanvae/generation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "urbanvae/error.hpp"
#include "urbanvae/parallel.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

using nlohmann::json;

std::vector<LatentCode> sample_prior(std::size_t n, std::uint64_t seed, int dim) {
  if (n < 1) throw ValidationError("sample count must be >= 1");
  if (dim < 1) throw ValidationError("latent dimension must be >= 1");
  Rng rng(derive_seed(seed, "prior"));
  std::vector<LatentCode> codes(n, LatentCode(static_cast<std::size_t>(dim)));
  for (auto& code : codes)
    for (float& v : code) v = static_cast<float>(rng.normal());
  return codes;
}

SampleBatch generate(const Vae<float>& model, std::vector<LatentCode> codes, std::uint64_t seed,
                     std::optional<double> threshold, int threads) {
  const auto dim = static_cast<std::size_t>(model.architecture().latent_dim);
  for (const auto& c : codes)
    if (c.size() != dim)
      throw DimensionError("latent code has " + std::to_string(c.size()) + " values, expected " +
                           std::to_string(dim));
  if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw ValidationError("threshold must be in (0, 1)");
  SampleBatch batch;
  batch.seed = seed;
  batch.threshold = threshold;
  batch.images.resize(codes.size());
  parallel_for(codes.size(), threads, [&](std::size_t i) {
    nn::Tensor<float> z({dim});
    std::copy(codes[i].begin(), codes[i].end(), z.values().begin());
    char id[32];
    std::snprintf(id, sizeof id, "sample_%03zu", i);
    batch.images[i] = tensor_image(model.decode(z), id);
  });
  batch.codes = std::move(codes);
  return batch;
}

std::vector<RasterImage> reconstruct(const Vae<float>& model, const std::vector<RasterImage>& images, int threads) {
  std::vector<RasterImage> out(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const auto post = model.encode(image_tensor<float>(images[i]));
    out[i] = tensor_image(model.decode(post.mu), images[i].city_id);
  });
  return out;
}

GrayImage compose_grid(const std::vector<std::vector<GrayImage>>& rows, int gutter) {
  if (rows.empty() || rows.front().empty()) throw ValidationError("grid needs at least one image");
  if (gutter < 0) throw ValidationError("gutter must be non-negative");
  const int tile_w = rows.front().front().width;
  const int tile_h = rows.front().front().height;
  const auto cols = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != cols) throw ValidationError("grid rows differ in length");
    for (const auto& t : row)
      if (t.width != tile_w || t.height != tile_h) throw DimensionError("grid tiles differ in size");
  }
  const int ncols = static_cast<int>(cols);
  const int nrows = static_cast<int>(rows.size());
  GrayImage out(ncols * tile_w + (ncols - 1) * gutter, nrows * tile_h + (nrows - 1) * gutter, 255);
  for (int r = 0; r < nrows; ++r)
    for (int c = 0; c < ncols; ++c) {
      const GrayImage& t = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      const int y0 = r * (tile_h + gutter);
      const int x0 = c * (tile_w + gutter);
      for (int y = 0; y < tile_h; ++y)
        for (int x = 0; x < tile_w; ++x) out.at(y0 + y, x0 + x) = t.at(y, x);
    }
  return out;
}

GrayImage reconstruction_grid(const Vae<float>& model, const std::vector<RasterImage>& images, int threads) {
  if (images.empty() || images.size() > kMaxGridColumns)
    throw ValidationError("reconstruction grid takes 1 to 16 images, got " + std::to_string(images.size()));
  const auto recon = reconstruct(model, images, threads);
  std::vector<std::vector<GrayImage>> rows(2);
  for (std::size_t i = 0; i < images.size(); ++i) {
    rows[0].push_back(to_gray(images[i]));
    rows[1].push_back(to_gray(recon[i]));
  }
  return compose_grid(rows);
}

std::vector<std::filesystem::path> write_samples(const SampleBatch& batch, const std::filesystem::path& dir,
                                                 std::size_t grid_columns) {
  if (batch.images.empty()) throw ValidationError("nothing to write");
  if (grid_columns < 1) throw ValidationError("grid needs at least one column");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  std::vector<GrayImage> tiles;
  for (const auto& img : batch.images) {
    tiles.push_back(to_gray(img));
    if (batch.threshold) {
      for (std::size_t k = 0; k < img.pixels.size(); ++k)
        tiles.back().pixels[k] = img.pixels[k] >= *batch.threshold ? 255 : 0;
    }
    const auto path = dir / (img.city_id + ".pgm");
    write_pgm(path, tiles.back());
    written.push_back(path);
  }

  std::vector<std::vector<GrayImage>> rows;
  for (std::size_t i = 0; i < tiles.size(); i += grid_columns) {
    std::vector<GrayImage> row(tiles.begin() + static_cast<std::ptrdiff_t>(i),
                               tiles.begin() + static_cast<std::ptrdiff_t>(std::min(tiles.size(), i + grid_columns)));
    while (!rows.empty() && row.size() < rows.front().size()) row.emplace_back(kImageSize, kImageSize, 0);
    rows.push_back(std::move(row));
  }
  const auto grid_path = dir / "samples_grid.pgm";
  write_pgm(grid_path, compose_grid(rows));
  written.push_back(grid_path);

  json doc;
  doc["format_version"] = 1;
  doc["seed"] = batch.seed;
  doc["threshold"] = batch.threshold ? json(*batch.threshold) : json(nullptr);
  doc["codes"] = batch.codes;
  const auto sidecar = dir / "samples.json";
  std::ofstream out(sidecar, std::ios::binary);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + sidecar.string());
  written.push_back(sidecar);
  return written;
}

SampleBatch read_sample_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const json doc = json::parse(in);
    SampleBatch b;
    b.seed = doc.at("seed").get<std::uint64_t>();
    if (!doc.at("threshold").is_null()) b.threshold = doc.at("threshold").get<double>();
    b.codes = doc.at("codes").get<std::vector<LatentCode>>();
    return b;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace urbanvae
