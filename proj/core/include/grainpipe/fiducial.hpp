#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "grainpipe/geometry.hpp"
#include "grainpipe/standardize.hpp"

namespace grainpipe {

/// One detected fiducial marker. Corners are ordered clockwise starting at
/// the marker's canonical top-left, whatever its in-plane rotation.
struct MarkerDetection {
    int id = -1;
    std::array<Point2, 4> corners{};
};

/// The 16-entry 4x4-bit dictionary. Bit (r*4 + c) is set when module (r, c)
/// of the inner grid is dark. Generated once by an ascending greedy scan
/// enforcing pairwise Hamming distance >= 8 between canonical codes and
/// uniqueness of every code under all four rotations (so an exact match is
/// unambiguous; full rotation-inclusive distance 8 is not attainable with
/// 16 markers in 16 bits).
const std::array<std::uint16_t, 16>& marker_dictionary();

/// Pattern rotated 90 degrees clockwise.
std::uint16_t rotate_code_cw(std::uint16_t code);

struct MarkerParams {
    double min_side_px = 20.0;
    double max_side_px = 140.0;
    double max_side_ratio = 1.6; // longest / shortest quad side
    double min_fill = 0.30;      // component area / quad area
};

/// All dictionary markers found on a grayscale image: dark 4-connected
/// components -> refined quads -> homography rectification -> 6x6 module
/// sampling (black border ring, white margin) -> exact dictionary match
/// under 4 rotations.
std::vector<MarkerDetection> find_markers(const GrayImage& gray, const MarkerParams& params = {});

/// The two plate markers. Throws DetectionError listing the found ids when
/// the count differs from two or the ids collide.
std::vector<MarkerDetection> detect_markers(const PlateImage& plate,
                                            const MarkerParams& params = {});

/// Arithmetic mean of the four corners.
Point2 marker_center(const MarkerDetection& m);

/// Homography from the marker's canonical module frame ([0,6]^2, y down) to
/// image coordinates, built from the detected corners.
Homography marker_homography(const MarkerDetection& m);

/// External corner file: JSON [{"id": int, "corners": [[x,y] x4]}].
std::vector<MarkerDetection> load_marker_file(const std::filesystem::path& path);
void save_marker_file(const std::vector<MarkerDetection>& markers,
                      const std::filesystem::path& path);

} // namespace grainpipe
