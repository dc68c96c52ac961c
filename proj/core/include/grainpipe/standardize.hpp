#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "grainpipe/geometry.hpp"
#include "grainpipe/image.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

/// Per-scan-row correction references (Eq. 1 symbols W and D). Rows are raw
/// frame indices; only rows intersecting the white-reference mask are kept.
struct RowReferences {
    std::vector<int> rows;
    std::vector<std::vector<double>> white; // white[i][c] for rows[i]
    std::vector<std::vector<double>> dark;  // same shape; all zeros for RGB

    std::size_t find_row(int raw_row) const; // index of nearest retained row
};

/// White/dark-corrected, size-standardized plate cut out of a raw frame.
struct PlateImage {
    ImageCube cube;
    int crop_row = 0; // raw-frame origin of the crop
    int crop_col = 0;
    double size_factor = 1.0; // horizontal scale applied after cropping

    Point2 raw_to_plate(const Point2& p) const {
        return {resize_dst_x(p.x - crop_col, size_factor), p.y - crop_row};
    }
    Point2 plate_to_raw(const Point2& p) const {
        return {(p.x + 0.5) / size_factor - 0.5 + crop_col, p.y + crop_row};
    }
};

struct WhiteReferences {
    BinaryMask mask; // exactly the two reference strips
    BBox bbox;       // tight hull of their union; the plate crop window
};

/// Two brightest/largest components of the Otsu foreground are taken as the
/// vertical reference strips. Throws DetectionError with < 2 components.
WhiteReferences locate_white_references(const ImageCube& raw);

/// White row references from the strip pixels (row-wise third quantile) and
/// dark row references from a shutter-closed dark frame (row-wise median,
/// restricted to the white-mask rows). Without a dark frame (RGB) dark is 0.
/// Throws ValueError naming row/channel when W <= D anywhere.
RowReferences build_row_references(const ImageCube& raw, const BinaryMask& white_mask,
                                   const ImageCube* dark_frame = nullptr);

/// Eq. (1): (I_raw - D_ic) / (W_ic - D_ic) with row-indexed references.
/// `crop_origin` is the (row, col) of raw_crop inside the raw frame; crop
/// rows missing from the references fall back to the nearest retained row.
PlateImage correct_intensity(const ImageCube& raw_crop, const RowReferences& refs,
                             std::pair<int, int> crop_origin = {0, 0}, bool clamp01 = false);

/// One detected calibration chessboard. Corners are the interior saddle
/// points, (pattern-1)^2 of them, row-major from the top-left.
struct Chessboard {
    std::vector<Point2> corners;
    Point2 center;        // corner centroid
    double square_width;  // median adjacent-corner spacing, horizontal axis
    double square_height; // vertical axis
};

struct ChessboardParams {
    int pattern = 4;                 // squares per side
    double square_size_hint_px = 16; // expected square edge, pre-correction
    double smooth_sigma = 1.5;
    double response_ratio = 0.55; // saddle threshold vs. max response
    double link_radius_factor = 1.6;
    double min_size_factor = 0.6; // accepted spacing band vs. hint
    double max_size_factor = 2.0;
};

/// Finds the four corner chessboards on a corrected plate via checkerboard
/// saddle responses, clustered and validated as a regular lattice.
/// Throws DetectionError reporting the count when != 4 boards survive.
std::vector<Chessboard> detect_chessboards(const PlateImage& plate,
                                           const ChessboardParams& params = {});

/// Lower-level entry over any grayscale image; returns every validated board.
std::vector<Chessboard> find_chessboards(const GrayImage& gray, const ChessboardParams& params);

/// Squish factor from the detected boards: mean(square height) /
/// mean(square width). Throws GeometryError when the factor exceeds 1.
double estimate_size_factor(const std::vector<Chessboard>& boards);

/// Horizontal bilinear downsizing by estimate_size_factor(boards); the
/// returned plate has size_factor set accordingly.
PlateImage size_correct(const PlateImage& plate, const std::vector<Chessboard>& boards);

/// Maps a board detected pre-correction into post-correction coordinates.
Chessboard rescale_chessboard(const Chessboard& board, double factor);

/// Full A.1/A.3 first half: locate references, correct, detect boards,
/// size-correct. Boards are reported in post-correction coordinates.
struct StandardizedFrame {
    PlateImage plate;
    std::vector<Chessboard> boards;
    RowReferences refs;
};

StandardizedFrame standardize_frame(const ImageCube& raw, const ImageCube* dark_frame = nullptr,
                                    const ChessboardParams& params = {});

} // namespace grainpipe
