#include "urbanvae/raster.hpp"

#include <algorithm>
#include <cmath>

#include "urbanvae/error.hpp"

namespace urbanvae {

bool RasterImage::is_binary() const {
  return std::all_of(pixels.begin(), pixels.end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

std::size_t RasterImage::count_on() const {
  return static_cast<std::size_t>(
      std::count_if(pixels.begin(), pixels.end(), [](float v) { return v != 0.0f; }));
}

void supercover_cells(const Segment& s, int n, const std::function<void(int, int)>& visit) {
  // Walk the row bands the segment crosses. Inside each closed band [r, r+1]
  // the segment covers a closed x-interval, and a cell [c, c+1] is reached iff
  // it overlaps that interval.
  const double ax = s.a.x, ay = s.a.y, bx = s.b.x, by = s.b.y;
  const double y_lo = std::min(ay, by);
  const double y_hi = std::max(ay, by);
  if (y_hi < 0.0 || y_lo > n || std::max(ax, bx) < 0.0 || std::min(ax, bx) > n) return;

  const int row_first = std::max(0, static_cast<int>(std::ceil(y_lo)) - 1);
  const int row_last = std::min(n - 1, static_cast<int>(std::floor(y_hi)));

  auto x_at = [&](double y) {
    if (y == ay) return ax;
    if (y == by) return bx;
    return ax + (y - ay) * (bx - ax) / (by - ay);
  };

  for (int row = row_first; row <= row_last; ++row) {
    const double band_lo = std::max(y_lo, static_cast<double>(row));
    const double band_hi = std::min(y_hi, static_cast<double>(row + 1));
    if (band_lo > band_hi) continue;

    double x_min, x_max;
    if (ay == by) {
      x_min = std::min(ax, bx);
      x_max = std::max(ax, bx);
    } else {
      const double x0 = x_at(band_lo);
      const double x1 = x_at(band_hi);
      x_min = std::min(x0, x1);
      x_max = std::max(x0, x1);
    }
    if (x_max < 0.0 || x_min > n) continue;
    const int col_first = std::max(0, static_cast<int>(std::ceil(x_min)) - 1);
    const int col_last = std::min(n - 1, static_cast<int>(std::floor(x_max)));
    for (int col = col_first; col <= col_last; ++col) visit(row, col);
  }
}

RasterImage rasterize(const StreetNetwork& net, const Window& window, int resolution) {
  window.validate();
  if (resolution != kImageSize)
    throw ValidationError("only 64x64 rasters are supported, got resolution " +
                          std::to_string(resolution));
  RasterImage img;
  img.city_id = net.city_id;
  const double cell = window.side_m / resolution;
  for (const Segment& s : net.segments) {
    const Segment in_cells{{s.a.x / cell, s.a.y / cell}, {s.b.x / cell, s.b.y / cell}};
    supercover_cells(in_cells, resolution, [&](int row, int col) { img.at(row, col) = 1.0f; });
  }
  return img;
}

RasterImage render_city(const StreetNetwork& net, double side_m, int resolution) {
  Window window;
  window.center = net.center;
  window.side_m = side_m;
  return rasterize(crop_window(net, window), window, resolution);
}

RasterImage augment_with(const RasterImage& img, const AugmentParams& params) {
  if (params.row_offset < 0 || params.row_offset > 2 * kAugmentPad || params.col_offset < 0 ||
      params.col_offset > 2 * kAugmentPad)
    throw ValidationError("augmentation crop offset out of range");
  RasterImage out;
  out.city_id = img.city_id;
  for (int r = 0; r < kImageSize; ++r) {
    const int src_r = r + params.row_offset - kAugmentPad;
    if (src_r < 0 || src_r >= kImageSize) continue;
    for (int c = 0; c < kImageSize; ++c) {
      const int src_c = c + params.col_offset - kAugmentPad;
      if (src_c < 0 || src_c >= kImageSize) continue;
      const int dst_c = params.flip ? kImageSize - 1 - c : c;
      out.at(r, dst_c) = img.at(src_r, src_c);
    }
  }
  return out;
}

RasterImage augment(const RasterImage& img, Rng& rng) {
  AugmentParams params;
  params.row_offset = static_cast<int>(rng.between(0, 2 * kAugmentPad));
  params.col_offset = static_cast<int>(rng.between(0, 2 * kAugmentPad));
  params.flip = rng.bernoulli(0.5);
  return augment_with(img, params);
}

RasterImage flip_horizontal(const RasterImage& img) {
  RasterImage out;
  out.city_id = img.city_id;
  for (int r = 0; r < kImageSize; ++r)
    for (int c = 0; c < kImageSize; ++c) out.at(r, kImageSize - 1 - c) = img.at(r, c);
  return out;
}

}  // namespace urbanvae
