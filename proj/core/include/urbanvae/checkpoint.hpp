#pragma once

#include <filesystem>

#include "urbanvae/vae.hpp"

namespace urbanvae {

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes `dir/manifest.json` and `dir/params.bin`, creating `dir` if needed.
///
/// params.bin holds every weight and bias as little-endian IEEE-754 binary32,
/// concatenated in layer order (weight before bias). The manifest lists each
/// tensor's name, shape, dtype "f32", byte_offset and byte_len, the
/// architecture descriptor and the SHA-256 of params.bin.
void save_checkpoint(const Vae<float>& model, const std::filesystem::path& dir);

/// Throws IoError when files are missing and CorruptArtifactError when the
/// manifest and blob disagree in any way.
Vae<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace urbanvae
