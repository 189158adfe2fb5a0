#include "hrt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hrt::harness {

namespace {

constexpr char kMagic[8] = {'H', 'R', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T v) {
  // this codebase targets little-endian hosts only
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, std::uint64_t config_hash,
                     const std::vector<CheckpointEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_le(out, kVersion);
  write_le(out, config_hash);
  write_le(out, static_cast<std::uint32_t>(entries.size()));
  for (const CheckpointEntry& e : entries) {
    write_le(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_le(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) write_le(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::uint64_t checkpoint_config_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = read_le<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  return read_le<std::uint64_t>(in);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path,
                                             std::uint64_t expected_hash, bool force) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = read_le<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  std::uint64_t hash = read_le<std::uint64_t>(in);
  if (hash != expected_hash && !force)
    throw std::runtime_error("checkpoint: config hash mismatch (use force to override)");

  std::uint32_t count = read_le<std::uint32_t>(in);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    std::uint32_t name_len = read_le<std::uint32_t>(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    std::uint32_t rank = read_le<std::uint32_t>(in);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t ext = read_le<std::uint32_t>(in);
      e.shape.push_back(ext);
      total *= ext;
    }
    e.values.resize(total);
    in.read(reinterpret_cast<char*>(e.values.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace hrt::harness
