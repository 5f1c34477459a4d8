#include "urbanvae/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "urbanvae/error.hpp"

namespace urbanvae {

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw ValidationError("write_pgm: inconsistent image dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

int parse_positive(const std::string& token, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v <= 0) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": bad PGM header field '" + token + "'");
  }
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (header_token(in) != "P5") throw ParseError(path.string() + ": not a binary (P5) PGM");
  const int width = parse_positive(header_token(in), path);
  const int height = parse_positive(header_token(in), path);
  const int maxval = parse_positive(header_token(in), path);
  if (maxval != 255) throw ParseError(path.string() + ": only maxval 255 is supported");
  GrayImage img(width, height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw ParseError(path.string() + ": truncated pixel data");
  return img;
}

GrayImage to_gray(const RasterImage& img) { return to_gray(img, false); }

GrayImage to_gray(const RasterImage& img, bool binarize) {
  GrayImage out(kImageSize, kImageSize);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = img.pixels[i];
    if (binarize) {
      out.pixels[i] = v >= 0.5f ? 255 : 0;
    } else {
      const float clamped = std::clamp(v, 0.0f, 1.0f);
      out.pixels[i] = static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
    }
  }
  return out;
}

RasterImage load_raster_pgm(const std::filesystem::path& path, bool binarize) {
  const GrayImage gray = read_pgm(path);
  if (gray.width != kImageSize || gray.height != kImageSize)
    throw ParseError(path.string() + ": expected a 64x64 image, got " + std::to_string(gray.width) +
                     "x" + std::to_string(gray.height));
  RasterImage img;
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    img.pixels[i] = binarize ? (gray.pixels[i] >= 128 ? 1.0f : 0.0f)
                             : static_cast<float>(gray.pixels[i]) / 255.0f;
  }
  return img;
}

}  // namespace urbanvae
