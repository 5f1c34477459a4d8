#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace urbanvae::cli {

struct FileDigest {
  std::string path;
  std::string sha256;
};

/// Everything needed to rerun a subcommand and check its outputs. Holds no
/// timestamps or host details so reruns reproduce it byte for byte.
struct RunManifest {
  std::string tool_version;
  std::string subcommand;
  /// Effective arguments with every default spelled out, minus --threads.
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  int threads = 1;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
};

inline constexpr int kRunManifestVersion = 1;

std::vector<FileDigest> digest_files(const std::vector<std::filesystem::path>& files);
void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_run_manifest(const std::filesystem::path& path);

}  // namespace urbanvae::cli
