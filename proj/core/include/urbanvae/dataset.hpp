#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "urbanvae/geometry.hpp"
#include "urbanvae/raster.hpp"

namespace urbanvae {

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

inline constexpr double kDefaultTrainRatio = 0.8;

/// Seeded Fisher-Yates shuffle of `ids`; the first floor(ratio * N) go to
/// train, the rest to test. Throws ValidationError on empty input, duplicate
/// ids or a ratio outside [0, 1].
DatasetSplit split_dataset(const std::vector<std::string>& ids, double ratio, std::uint64_t seed);

enum class SplitRole { unassigned, train, test };

std::string to_string(SplitRole role);
SplitRole parse_split_role(const std::string& text);

struct CorpusEntry {
  std::string city_id;
  std::string file;  // relative to the manifest's directory
  std::optional<LonLat> origin_lonlat;
  SplitRole split = SplitRole::unassigned;
  std::optional<std::string> label;
};

/// Index of a rasterized corpus: one PGM per city plus bookkeeping.
struct CorpusManifest {
  double window_m = 3000.0;
  int resolution = kImageSize;
  std::optional<std::uint64_t> split_seed;
  std::optional<double> split_ratio;
  std::vector<CorpusEntry> entries;

  std::vector<std::string> ids() const;
  const CorpusEntry* find(const std::string& city_id) const;

  /// Marks entries according to `split`. Ids not present in the split stay unassigned.
  void apply(const DatasetSplit& split, double ratio);
};

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

/// Loads the images of every entry whose role matches `role` (all entries
/// when role is empty), in manifest order, binarized.
std::vector<RasterImage> load_corpus_images(const CorpusManifest& manifest,
                                            const std::filesystem::path& manifest_dir,
                                            std::optional<SplitRole> role = std::nullopt);

}  // namespace urbanvae
