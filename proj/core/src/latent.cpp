#include "urbanvae/latent.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "urbanvae/error.hpp"
#include "urbanvae/parallel.hpp"

namespace urbanvae {

std::vector<UrbanNetworkVector> encode_corpus(const Vae<float>& model, const std::vector<RasterImage>& images,
                                              int threads) {
  std::vector<UrbanNetworkVector> out(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const auto post = model.encode(image_tensor<float>(images[i]));
    out[i].city_id = images[i].city_id;
    out[i].values.assign(post.mu.values().begin(), post.mu.values().end());
  });
  return out;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimensionError("vector length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::size_t vector_dimension(const std::vector<UrbanNetworkVector>& vectors) {
  if (vectors.empty()) return 0;
  const std::size_t d = vectors.front().values.size();
  for (const auto& v : vectors)
    if (v.values.size() != d)
      throw DimensionError("vector for '" + v.city_id + "' has " + std::to_string(v.values.size()) +
                           " values, expected " + std::to_string(d));
  return d;
}

namespace {

std::vector<Neighbor> ranked_from(const std::vector<UrbanNetworkVector>& vectors, std::size_t query) {
  std::vector<Neighbor> all;
  all.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (i == query) continue;
    all.push_back({vectors[i].city_id, distance(vectors[query].values, vectors[i].values)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.city_id < b.city_id;
  });
  return all;
}

}  // namespace

std::vector<Neighbor> nearest_neighbors(const std::vector<UrbanNetworkVector>& vectors, const std::string& query_id,
                                        std::size_t k) {
  vector_dimension(vectors);
  if (k < 1 || k >= vectors.size())
    throw ValidationError("k must be in [1, " + std::to_string(vectors.size()) + " - 1], got " + std::to_string(k));
  const auto it = std::find_if(vectors.begin(), vectors.end(),
                               [&](const UrbanNetworkVector& v) { return v.city_id == query_id; });
  if (it == vectors.end()) throw ValidationError("unknown city id '" + query_id + "'");
  auto ranked = ranked_from(vectors, static_cast<std::size_t>(it - vectors.begin()));
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

double density_proxy(const RasterImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(kImagePixels))
    throw DimensionError("density proxy needs a 64x64 image");
  double s = 0.0;
  for (float p : img.pixels) s += p;
  return s / static_cast<double>(img.pixels.size());
}

void write_vectors_csv(const std::vector<UrbanNetworkVector>& vectors, const std::filesystem::path& path) {
  const std::size_t d = vector_dimension(vectors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "city_id";
  for (std::size_t i = 0; i < d; ++i) out << ",v" << i;
  out << '\n';
  char buf[64];
  for (const auto& v : vectors) {
    if (v.city_id.find_first_of(",\n\r\"") != std::string::npos)
      throw ValidationError("city id '" + v.city_id + "' cannot be written to CSV");
    out << v.city_id;
    for (double x : v.values) {
      const auto res = std::to_chars(buf, buf + sizeof buf, x);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<UrbanNetworkVector> read_vectors_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("city_id", 0) != 0)
    throw ParseError(path.string() + ": line 1: expected header starting with city_id");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (dim != static_cast<std::size_t>(kLatentDim))
    throw ParseError(path.string() + ": line 1: expected " + std::to_string(kLatentDim) + " value columns, got " +
                     std::to_string(dim));
  std::vector<UrbanNetworkVector> out;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = [&] { return path.string() + ": line " + std::to_string(lineno) + ": "; };
    UrbanNetworkVector v;
    std::size_t pos = line.find(',');
    v.city_id = line.substr(0, pos);
    if (v.city_id.empty()) throw ParseError(where() + "empty city_id");
    if (!seen.insert(v.city_id).second) throw ParseError(where() + "duplicate city_id '" + v.city_id + "'");
    while (pos != std::string::npos) {
      const std::size_t start = pos + 1;
      pos = line.find(',', start);
      const std::size_t end = pos == std::string::npos ? line.size() : pos;
      double x = 0.0;
      const auto res = std::from_chars(line.data() + start, line.data() + end, x);
      if (res.ec != std::errc() || res.ptr != line.data() + end || !std::isfinite(x))
        throw ParseError(where() + "bad number '" + line.substr(start, end - start) + "'");
      v.values.push_back(x);
    }
    if (v.values.size() != dim)
      throw ParseError(where() + "expected " + std::to_string(dim) + " values, got " + std::to_string(v.values.size()));
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace urbanvae
