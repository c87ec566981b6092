#pragma once

// Single-file checkpoint:
//   "MORACKPT" | u32 version | u64 header bytes | JSON header | float64 LE data
// The header lists every tensor (name, shape, offset in doubles) per group
// with a SHA-256 over the group's names, shapes and values.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mora/model.hpp"
#include "mora/training.hpp"

namespace mora {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string sha256_hex(std::string_view bytes);
// Hash of names, shapes and little-endian values, in list order.
std::string group_hash(const NamedTensors& tensors);

std::string serialize_checkpoint(const Model& model, const OptimizerState& opt);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState& opt);

struct Checkpoint {
  Model model;
  OptimizerState optimizer;
  std::map<std::string, std::string> hashes;  // group -> sha256 hex
};

// Verifies magic, version, shapes and every group hash.
Checkpoint deserialize_checkpoint(std::string_view bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mora
