#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "urbanvae/raster.hpp"

namespace urbanvae {

/// 8-bit grayscale image as stored in a binary (P5) PGM with maxval 255.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width * height

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
};

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

/// Quantizes [0,1] values to round(v * 255).
GrayImage to_gray(const RasterImage& img);

/// Optionally thresholds at 0.5 before quantizing, giving only 0 / 255.
GrayImage to_gray(const RasterImage& img, bool binarize);

/// Reads a 64x64 PGM. With `binarize` every pixel >= 128 becomes 1, else 0;
/// otherwise pixels are scaled to v / 255.
RasterImage load_raster_pgm(const std::filesystem::path& path, bool binarize = true);

}  // namespace urbanvae
