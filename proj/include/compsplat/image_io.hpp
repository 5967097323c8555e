#pragma once

#include "compsplat/types.hpp"

#include <filesystem>

namespace compsplat {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG into [0,1] values with the requested channel count
/// (1 = gray, 3 = RGB). Bytes map linearly, no gamma conversion.
Image read_png(const std::filesystem::path& path, int channels);
/// Clamps to [0,1] and rounds to 8 bits. 1 or 3 channels.
void write_png(const std::filesystem::path& path, const Image& img);

/// Portable float map, 1 ("Pf") or 3 ("PF") channels, top row first in memory.
Image read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Image& img);

/// Round-half-up quantization used for every 8-bit image we emit.
inline std::uint8_t to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace compsplat
