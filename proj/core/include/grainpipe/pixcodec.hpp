#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grainpipe/image.hpp"

namespace grainpipe {

/// Packed mono12p byte stream: two 12-bit samples per three bytes.
struct Mono12pBuffer {
    std::vector<std::uint8_t> bytes;
    std::size_t pixel_count = 0;
};

/// Number of bytes a mono12p stream of `pixel_count` samples occupies:
/// ceil(pixel_count * 3 / 2).
std::size_t mono12p_byte_size(std::size_t pixel_count);

/// Packs 12-bit samples into mono12p layout.
///
/// Per sample pair (p0, p1):
///   byte0 = p0[7:0], byte1 = p1[3:0] << 4 | p0[11:8], byte2 = p1[11:4].
/// An odd trailing sample occupies two bytes with byte1's high nibble zero.
/// Throws ValueError naming the first out-of-range index.
Mono12pBuffer pack_mono12p(std::span<const std::uint16_t> values);

/// Inverse of pack_mono12p. Throws FormatError when the byte length does not
/// match the declared pixel count.
std::vector<std::uint16_t> unpack_mono12p(const Mono12pBuffer& buf);

enum class Packing { U8, U16, Mono12p, F32 };

std::string to_string(Packing p);
Packing packing_from_string(const std::string& s);

/// Default on-disk packing for a cube: f32 for reflectance data, mono12p for
/// 12-bit counts, u8 for 8-bit counts.
Packing default_packing(const ImageCube& cube);

/// Writes `cube` as a JSON sidecar header (`<path>`, conventionally
/// *.cube.json) plus a raw payload file next to it.
void write_cube(const ImageCube& cube, const std::filesystem::path& header_path);
void write_cube(const ImageCube& cube, const std::filesystem::path& header_path,
                Packing packing);

/// Reads a cube container written by write_cube. Throws FormatError on
/// header/payload mismatches or unknown packing/bit depth.
ImageCube read_cube(const std::filesystem::path& header_path);

} // namespace grainpipe
