#pragma once

#include <filesystem>
#include <iosfwd>

#include "prognosis/image.hpp"

namespace prognosis {

/// Longest accepted PGM header comment, in bytes.
inline constexpr std::size_t kMaxPgmComment = 1024;

/// Binary PGM ("P5"). 8-bit samples when maxval < 256, otherwise 16-bit
/// big-endian. Samples are returned unscaled.
RawImage read_pgm(std::istream& in);
RawImage read_pgm(const std::filesystem::path& path);

/// Always writes maxval 65535.
void write_pgm(std::ostream& out, const RawImage& image);
void write_pgm(const std::filesystem::path& path, const RawImage& image);

/// Maps [0, 1] intensities to [0, 65535] (values are clamped first).
RawImage to_raw16(const GrayImage& image);

}  // namespace prognosis
