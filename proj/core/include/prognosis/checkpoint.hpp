#pragma once

#include <filesystem>
#include <iosfwd>

#include "prognosis/graph.hpp"

namespace prognosis {

/// Binary parameter checkpoint:
///   "MILW" | u32 version | u64 tensor count |
///   per tensor: u32 name length, UTF-8 name, u32 rank, u64 dims[rank], f64 values[]
/// All integers and floats are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace prognosis
