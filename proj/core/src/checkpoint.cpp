#include "urbanvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "urbanvae/digest.hpp"
#include "urbanvae/error.hpp"

namespace urbanvae {

using nlohmann::json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "params.bin";

json architecture_json(const Architecture& a) {
  return {{"image_size", a.image_size}, {"latent_dim", a.latent_dim}, {"channels", a.channels},
          {"kernel", a.kernel}, {"stride", a.stride}, {"pad", a.pad}};
}

Architecture architecture_from_json(const json& j) {
  Architecture a;
  a.image_size = j.at("image_size").get<int>();
  a.latent_dim = j.at("latent_dim").get<int>();
  a.channels = j.at("channels").get<std::array<int, 4>>();
  a.kernel = j.at("kernel").get<int>();
  a.stride = j.at("stride").get<int>();
  a.pad = j.at("pad").get<int>();
  return a;
}

void append_le(std::string& blob, const nn::Tensor<float>& t) {
  for (float v : t.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int shift = 0; shift < 32; shift += 8) blob.push_back(static_cast<char>((bits >> shift) & 0xFF));
  }
}

void read_le(const std::string& blob, std::size_t offset, nn::Tensor<float>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * i + b])) << (8 * b);
    t[i] = std::bit_cast<float>(bits);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const Vae<float>& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  std::string blob;
  json tensors = json::array();
  auto add = [&](const std::string& name, const nn::Tensor<float>& t) {
    const std::size_t offset = blob.size();
    append_le(blob, t);
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"},
                       {"byte_offset", offset}, {"byte_len", blob.size() - offset}});
  };
  for (const auto& layer : model.layers()) {
    add(layer.name + ".weight", layer.weight);
    add(layer.name + ".bias", layer.bias);
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["architecture"] = architecture_json(model.architecture());
  manifest["tensors"] = std::move(tensors);
  manifest["blob"] = kBlobName;
  manifest["blob_bytes"] = blob.size();
  manifest["blob_sha256"] = sha256_hex(blob);

  {
    std::ofstream out(dir / kBlobName, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / kBlobName).string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("write failed: " + (dir / kBlobName).string());
  }
  std::ofstream out(dir / kManifestName, std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / kManifestName).string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + (dir / kManifestName).string());
}

Vae<float> load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  if (!std::filesystem::exists(manifest_path)) throw IoError("missing checkpoint manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw CorruptArtifactError(manifest_path.string() + ": " + e.what());
  }

  auto corrupt = [&](const std::string& what) {
    return CorruptArtifactError("corrupt checkpoint " + dir.string() + ": " + what);
  };

  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw corrupt("unsupported format_version");
    Architecture arch;
    try {
      arch = architecture_from_json(manifest.at("architecture"));
      arch.validate();
    } catch (const ValidationError& e) {
      throw corrupt(std::string("architecture: ") + e.what());
    }
    Vae<float> model(arch);

    const std::string blob_name = manifest.value("blob", std::string(kBlobName));
    const auto blob_path = dir / blob_name;
    if (!std::filesystem::exists(blob_path)) throw IoError("missing checkpoint blob " + blob_path.string());
    const std::string blob = read_file(blob_path);
    if (manifest.contains("blob_bytes") && manifest["blob_bytes"].get<std::size_t>() != blob.size())
      throw corrupt("params.bin is " + std::to_string(blob.size()) + " bytes, manifest says " +
                    std::to_string(manifest["blob_bytes"].get<std::size_t>()));
    if (manifest.at("blob_sha256").get<std::string>() != sha256_hex(blob)) throw corrupt("params.bin digest mismatch");

    const json& records = manifest.at("tensors");
    if (!records.is_array() || records.size() != 2 * model.layers().size())
      throw corrupt("expected " + std::to_string(2 * model.layers().size()) + " tensor records");

    std::size_t expected_offset = 0;
    std::size_t r = 0;
    for (auto& layer : model.layers()) {
      for (auto* tensor : {&layer.weight, &layer.bias}) {
        const json& rec = records[r++];
        const std::string expected_name = layer.name + (tensor == &layer.weight ? ".weight" : ".bias");
        if (rec.at("name").get<std::string>() != expected_name)
          throw corrupt("tensor " + std::to_string(r - 1) + " is '" + rec.at("name").get<std::string>() +
                        "', expected '" + expected_name + "'");
        if (rec.at("dtype").get<std::string>() != "f32") throw corrupt(expected_name + ": dtype must be f32");
        if (rec.at("shape").get<std::vector<std::size_t>>() != tensor->shape())
          throw corrupt(expected_name + ": shape " + rec.at("shape").dump() + " does not match architecture " +
                        nn::shape_string(tensor->shape()));
        const auto offset = rec.at("byte_offset").get<std::size_t>();
        const auto len = rec.at("byte_len").get<std::size_t>();
        if (offset != expected_offset || len != 4 * tensor->size())
          throw corrupt(expected_name + ": byte range does not match its shape");
        if (offset + len > blob.size()) throw corrupt(expected_name + ": byte range beyond end of params.bin");
        read_le(blob, offset, *tensor);
        expected_offset += len;
      }
    }
    if (expected_offset != blob.size()) throw corrupt("params.bin has trailing bytes");
    return model;
  } catch (const json::exception& e) {
    throw corrupt(std::string("manifest: ") + e.what());
  }
}

}  // namespace urbanvae
