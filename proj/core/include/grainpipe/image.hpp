#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grainpipe/errors.hpp"

namespace grainpipe {

enum class Modality { RGB, HSI };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// H x W x C intensity volume, row-major (row, column, channel).
///
/// Raw camera frames hold integer counts (bit_depth 8 or 12); corrected
/// frames hold real-valued reflectance and set `reflectance = true`.
struct ImageCube {
    int height = 0;
    int width = 0;
    int channels = 0;
    int bit_depth = 8; // 8 or 12 for integer counts
    Modality modality = Modality::RGB;
    bool reflectance = false;
    std::vector<double> data;

    ImageCube() = default;
    ImageCube(int h, int w, int c, int depth, Modality m, bool refl = false)
        : height(h), width(w), channels(c), bit_depth(depth), modality(m), reflectance(refl),
          data(static_cast<std::size_t>(h) * w * c, 0.0) {}

    std::size_t index(int row, int col, int chan) const {
        return (static_cast<std::size_t>(row) * width + col) * channels + chan;
    }
    double at(int row, int col, int chan) const { return data[index(row, col, chan)]; }
    double& at(int row, int col, int chan) { return data[index(row, col, chan)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t value_count() const { return pixel_count() * channels; }

    /// Throws FormatError unless dims are positive and data size matches.
    void validate() const;
};

/// Single-channel real-valued image.
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    GrayImage() = default;
    GrayImage(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
    double at(int row, int col) const { return values[index(row, col)]; }
    double& at(int row, int col) { return values[index(row, col)]; }
    bool in_bounds(int row, int col) const {
        return row >= 0 && row < height && col >= 0 && col < width;
    }
};

/// Per-pixel foreground bits, same dims as the image it was derived from.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int h, int w, bool fill = false)
        : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

    std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
    bool at(int row, int col) const { return bits[index(row, col)] != 0; }
    void set(int row, int col, bool v) { bits[index(row, col)] = v ? 1 : 0; }
    std::size_t count() const;
};

/// Inclusive row/column bounding box.
struct BBox {
    int row0 = 0;
    int col0 = 0;
    int row1 = -1; // inclusive
    int col1 = -1; // inclusive

    int rows() const { return row1 - row0 + 1; }
    int cols() const { return col1 - col0 + 1; }
    bool empty() const { return row1 < row0 || col1 < col0; }
};

/// Extracts `box` from `cube` (all channels). Box must be inside the cube.
ImageCube crop(const ImageCube& cube, const BBox& box);

} // namespace grainpipe
