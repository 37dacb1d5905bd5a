#pragma once

#include <torch/torch.h>

#include <filesystem>

#include "json.hpp"

namespace vidtwin {

/// Checkpoint file layout (version 1, little-endian):
///
///   "VTCK" | u16 version | u32 manifest_bytes | manifest (UTF-8 JSON) | payload
///
/// The manifest is {"version", "kind", "meta", "params": [{"name", "shape"}]}.
/// The payload is every parameter in manifest order as float32.
inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const torch::nn::Module& module, const std::string& kind, const nlohmann::json& meta,
                     const std::filesystem::path& path);

/// Reads only the manifest.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Loads parameters into `module`. Names and shapes must match exactly.
/// Returns the manifest.
nlohmann::json load_checkpoint(torch::nn::Module& module, const std::filesystem::path& path);

}  // namespace vidtwin
