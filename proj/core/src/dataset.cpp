#include "urbanvae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "urbanvae/error.hpp"
#include "urbanvae/pgm.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

using nlohmann::json;

DatasetSplit split_dataset(const std::vector<std::string>& ids, double ratio, std::uint64_t seed) {
  if (ids.empty()) throw ValidationError("split_dataset: no ids given");
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ValidationError("split_dataset: ratio must lie in [0, 1]");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw ValidationError("split_dataset: duplicate id '" + id + "'");

  std::vector<std::string> order = ids;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);

  // The small epsilon keeps products like 0.8 * 5 from rounding down to 3.
  const auto n_train = std::min(
      order.size(), static_cast<std::size_t>(std::floor(ratio * static_cast<double>(order.size()) + 1e-9)));
  DatasetSplit split;
  split.seed = seed;
  split.train_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

std::string to_string(SplitRole role) {
  switch (role) {
    case SplitRole::train: return "train";
    case SplitRole::test: return "test";
    case SplitRole::unassigned: break;
  }
  return "unassigned";
}

SplitRole parse_split_role(const std::string& text) {
  if (text == "train") return SplitRole::train;
  if (text == "test") return SplitRole::test;
  if (text == "unassigned") return SplitRole::unassigned;
  throw ValidationError("unknown split role '" + text + "'");
}

std::vector<std::string> CorpusManifest::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.city_id);
  return out;
}

const CorpusEntry* CorpusManifest::find(const std::string& city_id) const {
  for (const auto& e : entries)
    if (e.city_id == city_id) return &e;
  return nullptr;
}

void CorpusManifest::apply(const DatasetSplit& split, double ratio) {
  const std::unordered_set<std::string> train(split.train_ids.begin(), split.train_ids.end());
  const std::unordered_set<std::string> test(split.test_ids.begin(), split.test_ids.end());
  for (auto& e : entries) {
    if (train.count(e.city_id)) e.split = SplitRole::train;
    else if (test.count(e.city_id)) e.split = SplitRole::test;
    else e.split = SplitRole::unassigned;
  }
  split_seed = split.seed;
  split_ratio = ratio;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = 1;
  doc["window_m"] = manifest.window_m;
  doc["resolution"] = manifest.resolution;
  if (manifest.split_seed) doc["split_seed"] = *manifest.split_seed;
  if (manifest.split_ratio) doc["split_ratio"] = *manifest.split_ratio;
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json j;
    j["city_id"] = e.city_id;
    j["file"] = e.file;
    j["origin_lonlat"] = e.origin_lonlat ? json{e.origin_lonlat->lon, e.origin_lonlat->lat} : json(nullptr);
    j["split"] = to_string(e.split);
    if (e.label) j["label"] = *e.label;
    entries.push_back(std::move(j));
  }
  doc["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  CorpusManifest m;
  try {
    m.window_m = doc.value("window_m", 3000.0);
    m.resolution = doc.value("resolution", kImageSize);
    if (doc.contains("split_seed")) m.split_seed = doc["split_seed"].get<std::uint64_t>();
    if (doc.contains("split_ratio")) m.split_ratio = doc["split_ratio"].get<double>();
    for (const json& j : doc.at("entries")) {
      CorpusEntry e;
      e.city_id = j.at("city_id").get<std::string>();
      e.file = j.at("file").get<std::string>();
      if (j.contains("origin_lonlat") && j["origin_lonlat"].is_array())
        e.origin_lonlat = LonLat{j["origin_lonlat"][0].get<double>(), j["origin_lonlat"][1].get<double>()};
      e.split = parse_split_role(j.value("split", "unassigned"));
      if (j.contains("label") && j["label"].is_string()) e.label = j["label"].get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return m;
}

std::vector<RasterImage> load_corpus_images(const CorpusManifest& manifest,
                                            const std::filesystem::path& manifest_dir,
                                            std::optional<SplitRole> role) {
  std::vector<RasterImage> images;
  for (const auto& e : manifest.entries) {
    if (role && e.split != *role) continue;
    RasterImage img = load_raster_pgm(manifest_dir / e.file, true);
    img.city_id = e.city_id;
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace urbanvae
