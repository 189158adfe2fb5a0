#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hrt/tensor.hpp"

namespace hrt::harness {

// Versioned binary parameter container. Layout (little-endian):
//   magic "HRTCKPT1", u32 version, u64 config hash, u32 entry count,
//   then per entry: u32 name length, name bytes (UTF-8), u32 rank,
//   u32 extents..., f64 values...
struct CheckpointEntry {
  std::string name;
  num::Shape shape;
  std::vector<double> values;
};

void save_checkpoint(const std::string& path, std::uint64_t config_hash,
                     const std::vector<CheckpointEntry>& entries);

// Throws when the stored config hash differs from expected, unless forced.
std::vector<CheckpointEntry> load_checkpoint(const std::string& path,
                                             std::uint64_t expected_hash, bool force = false);

std::uint64_t checkpoint_config_hash(const std::string& path);

}  // namespace hrt::harness
