#pragma once

// Single-file checkpoint:
//   "MSWCKPT1" | u64 LE header length | JSON header | float32 LE blobs
// The header holds the generator config, caller metadata and a manifest
// [{name, shape, offset, nbytes}] with offsets relative to the blob start.

#include <filesystem>

#include <json.hpp>

#include "mswin/nn/generator.hpp"

namespace mswin::nn {

inline constexpr char kCheckpointMagic[9] = "MSWCKPT1";

void save_checkpoint(const std::filesystem::path& file, Generator& gen, const nlohmann::json& meta = nlohmann::json::object());

struct LoadedCheckpoint {
  Generator generator{nullptr};
  nlohmann::json meta;
};

// Throws CorruptionError on truncation, bad magic or a manifest mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

// Concatenated parameter values in registration order.
std::vector<float> flatten_parameters(torch::nn::Module& m);

}  // namespace mswin::nn
