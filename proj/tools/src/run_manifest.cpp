#include "run_manifest.hpp"

#include <fstream>

#include "urbanvae/digest.hpp"
#include "urbanvae/error.hpp"

namespace urbanvae::cli {

using nlohmann::json;

std::vector<FileDigest> digest_files(const std::vector<std::filesystem::path>& files) {
  std::vector<FileDigest> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back({f.generic_string(), file_sha256_hex(f)});
  return out;
}

namespace {

json to_json(const std::vector<FileDigest>& files) {
  json arr = json::array();
  for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return arr;
}

std::vector<FileDigest> from_json(const json& arr) {
  std::vector<FileDigest> out;
  for (const auto& f : arr) out.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

void write_run_manifest(const RunManifest& m, const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = kRunManifestVersion;
  doc["tool_version"] = m.tool_version;
  doc["subcommand"] = m.subcommand;
  doc["argv"] = m.argv;
  doc["config"] = m.config;
  doc["threads"] = m.threads;
  doc["inputs"] = to_json(m.inputs);
  doc["outputs"] = to_json(m.outputs);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

RunManifest read_run_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open run manifest " + path.string());
  try {
    const json doc = json::parse(in);
    if (doc.at("format_version").get<int>() != kRunManifestVersion)
      throw CorruptArtifactError(path.string() + ": unsupported run manifest version");
    RunManifest m;
    m.tool_version = doc.at("tool_version").get<std::string>();
    m.subcommand = doc.at("subcommand").get<std::string>();
    m.argv = doc.at("argv").get<std::vector<std::string>>();
    m.config = doc.at("config");
    m.threads = doc.at("threads").get<int>();
    m.inputs = from_json(doc.at("inputs"));
    m.outputs = from_json(doc.at("outputs"));
    if (m.argv.empty() || m.argv.front() != m.subcommand)
      throw CorruptArtifactError(path.string() + ": argv does not start with the subcommand");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace urbanvae::cli
