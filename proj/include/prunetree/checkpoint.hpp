#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "prunetree/model.hpp"

namespace prunetree {

// Layout:
//   "PRNET1\0"                       7 bytes
//   u64 LE text length, then text    canonical spec text + "state <seed> <epochs>\n"
//   parameters                       f32 LE, declaration order
//   u64 LE FNV-1a-64 of every preceding byte
inline constexpr char kCheckpointMagic[7] = {'P', 'R', 'N', 'E', 'T', '1', '\0'};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& model);
ModelState deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace prunetree
