#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "urbanvae/raster.hpp"
#include "urbanvae/vae.hpp"

namespace urbanvae {

/// Posterior mean of one city's raster; the coordinates used for similarity,
/// clustering and embeddings.
struct UrbanNetworkVector {
  std::string city_id;
  std::vector<double> values;
};

std::vector<UrbanNetworkVector> encode_corpus(const Vae<float>& model, const std::vector<RasterImage>& images,
                                              int threads = 1);

/// Euclidean distance. Throws DimensionError when lengths differ.
double distance(const std::vector<double>& a, const std::vector<double>& b);

struct Neighbor {
  std::string city_id;
  double distance = 0.0;
};

/// The k nearest other cities to `query_id`, closest first; equal distances
/// are ordered by city_id. Throws ValidationError for an unknown id or when k
/// is not in [1, N-1].
std::vector<Neighbor> nearest_neighbors(const std::vector<UrbanNetworkVector>& vectors, const std::string& query_id,
                                        std::size_t k);

/// Street density approximated by the mean pixel intensity, in [0, 1].
double density_proxy(const RasterImage& img);

/// Rows of all vectors must share one dimension; throws DimensionError otherwise.
std::size_t vector_dimension(const std::vector<UrbanNetworkVector>& vectors);

/// CSV with header city_id,v0,...,v31. Values round-trip exactly; reading
/// rejects rows that are not 32 finite values.
void write_vectors_csv(const std::vector<UrbanNetworkVector>& vectors, const std::filesystem::path& path);
std::vector<UrbanNetworkVector> read_vectors_csv(const std::filesystem::path& path);

}  // namespace urbanvae
