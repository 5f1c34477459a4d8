#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "urbanvae/geometry.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

inline constexpr int kImageSize = 64;
inline constexpr int kImagePixels = kImageSize * kImageSize;

/// 64x64 single-channel image. Row 0 is the northern edge of the window and
/// column 0 its western edge. Ingested images are binary; model outputs are
/// probabilities in (0, 1).
struct RasterImage {
  std::string city_id;
  std::vector<float> pixels = std::vector<float>(kImagePixels, 0.0f);

  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row * kImageSize + col)]; }
  float at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row * kImageSize + col)];
  }

  bool is_binary() const;
  std::size_t count_on() const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// Calls visit(row, col) for every cell of an n x n grid whose closed square
/// intersects the segment (its supercover). Coordinates are in cell units in
/// the raster frame. A segment that runs along a grid line or crosses a grid
/// vertex exactly reaches the cells on both sides. May visit a cell twice.
void supercover_cells(const Segment& s, int n, const std::function<void(int, int)>& visit);

/// Rasterizes a network that is already cropped to `window` (raster frame,
/// see crop_window) onto the 64x64 grid with cell size side_m / 64.
/// `resolution` must be 64.
RasterImage rasterize(const StreetNetwork& net, const Window& window, int resolution = kImageSize);

/// Crops to the side_m square around the network's center and rasterizes it.
RasterImage render_city(const StreetNetwork& net, double side_m = 3000.0, int resolution = kImageSize);

struct AugmentParams {
  int row_offset = 4;  // in [0, 2 * kAugmentPad]
  int col_offset = 4;
  bool flip = false;
};

inline constexpr int kAugmentPad = 4;

/// Zero-pads by kAugmentPad on every side, crops 64x64 at the given offset
/// into the padded image, then optionally mirrors left-right.
RasterImage augment_with(const RasterImage& img, const AugmentParams& params);

/// Draws uniform crop offsets and a fair flip from `rng`, then augments.
RasterImage augment(const RasterImage& img, Rng& rng);

RasterImage flip_horizontal(const RasterImage& img);

}  // namespace urbanvae
