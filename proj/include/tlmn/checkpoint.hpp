#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "tlmn/network.hpp"

namespace tlmn {

// Byte layout:
//   "TLMN3\0"                      6 bytes
//   format version                 uint32 little-endian
//   header length                  uint64 little-endian
//   header                         UTF-8 JSON
//   parameters                     float64 little-endian, header order
inline constexpr char kCheckpointMagic[6] = {'T', 'L', 'M', 'N', '3', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ModelState& state, std::ostream& out);
ModelState read_checkpoint(std::istream& in);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
/// Throws CheckpointError for bad magic, unsupported version, truncation or
/// inconsistent shapes/offsets.
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace tlmn
