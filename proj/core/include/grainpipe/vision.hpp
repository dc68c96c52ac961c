#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "grainpipe/geometry.hpp"
#include "grainpipe/image.hpp"

namespace grainpipe {

/// Per-pixel unweighted mean over all channels.
GrayImage grayscale(const ImageCube& cube);

/// Split index maximizing between-class variance over `counts`; the returned
/// index t separates bins [0, t] from [t+1, N). Ties resolve to the lowest t.
/// Comparison falls back to exact integer arithmetic when two candidates are
/// within floating-point noise of each other, so the argmax is well defined.
/// Throws DetectionError when fewer than two bins are populated.
int otsu_split_from_histogram(const std::vector<std::uint64_t>& counts);

/// Otsu threshold of an image: histogram over [min, max] with `bins` bins,
/// threshold placed at the upper edge of the argmax split bin.
/// Throws DetectionError for a constant image (degenerate histogram).
double otsu_threshold(const GrayImage& img, int bins = 256);

/// Bit set iff intensity > threshold.
BinaryMask binarize(const GrayImage& img, double threshold);

/// Connected foreground regions. Labels start at 1 in scan order of each
/// region's first pixel (row-major).
struct LabeledRegions {
    int height = 0;
    int width = 0;
    int count = 0;
    std::vector<std::int32_t> labels;          // 0 = background
    std::vector<std::size_t> areas;            // per label, index 0 unused
    std::vector<std::size_t> first_pixel;      // flat index of first scanned pixel

    BinaryMask mask_of(const std::vector<int>& keep_labels) const;
};

LabeledRegions connected_components(const BinaryMask& mask, int connectivity = 8);

/// Union of the k largest regions; area ties resolve to the region whose
/// first pixel has the smaller scan index. Throws DetectionError when fewer
/// than k regions exist.
BinaryMask largest_components(const LabeledRegions& regions, int k);

/// Labels of the k largest regions in the order they were kept.
std::vector<int> largest_component_labels(const LabeledRegions& regions, int k);

/// Separable Gaussian convolution with reflected borders. sigma <= 0 returns
/// a copy.
GrayImage gaussian_smooth(const GrayImage& img, double sigma);

struct EdgeParams {
    /// Hysteresis thresholds as fractions of the maximum gradient magnitude.
    double high_ratio = 0.25;
    double low_ratio = 0.10;
};

/// Gradient images via 3x3 Sobel (normalized so a unit step has magnitude ~1).
struct Gradients {
    GrayImage gx;
    GrayImage gy;
    GrayImage magnitude;
};

Gradients sobel_gradients(const GrayImage& img);

/// Gradient-magnitude edges: Sobel, non-maximum suppression along the
/// gradient, then hysteresis thresholding.
BinaryMask edge_detect(const GrayImage& img, const EdgeParams& params = {});

struct CircleHoughParams {
    /// Accumulator vote threshold as a fraction of the best candidate's votes.
    double vote_ratio = 0.5;
    /// Minimum distance between reported circle centers (pixels).
    double min_center_distance = 20.0;
    int max_candidates = 8;
};

/// Circle detection via gradient voting: each edge pixel votes for centers
/// along its gradient direction at distances [r_min, r_max]; radii are read
/// back from the mode of edge-pixel distances. `gradient_source` is the
/// (smoothed) image the edges were computed from. Candidates are ranked by
/// votes. An empty edge mask yields an empty list.
std::vector<Circle> hough_circles(const BinaryMask& edges, const GrayImage& gradient_source,
                                  double r_min, double r_max,
                                  const CircleHoughParams& params = {});

/// Radius band for dish selection, as fractions of image height.
struct RadiusBand {
    double min_frac = 0.25;
    double max_frac = 0.48;
};

/// Among circles whose radius lies in `band` (scaled by `image_height`),
/// returns the one whose center is closest to `image_center`.
/// Throws DetectionError when none survive the band filter.
Circle select_dish_circle(const std::vector<Circle>& circles, const RadiusBand& band,
                          int image_height, const Point2& image_center);

struct LineHoughParams {
    double rho_step = 1.0;                  // pixels per rho bin
    double theta_step_deg = 0.25;           // degrees per theta bin
    double vote_ratio = 0.35;               // threshold vs. peak votes
    int min_votes = 20;                     // absolute floor
    int max_lines = 64;
    int nms_rho_bins = 4;                   // local-max suppression window
    int nms_theta_bins = 4;
};

/// Standard (rho, theta) line accumulator. Returns lines above the vote
/// threshold, strongest first.
std::vector<HoughLine> hough_lines(const BinaryMask& edges, const LineHoughParams& params = {});

/// Clusters lines by (rho, theta) proximity (theta compared circularly, with
/// rho sign flipped across the wrap) and replaces each cluster by its
/// unweighted mean. Merges the two border detections of a physical bar into
/// its centerline.
std::vector<HoughLine> average_similar_lines(const std::vector<HoughLine>& lines,
                                             double rho_tol = 10.0,
                                             double theta_tol_deg = 2.0);

/// All pairwise intersections with x in [0, width) and y in [0, height);
/// near-parallel pairs are skipped.
std::vector<Point2> line_intersections(const std::vector<HoughLine>& lines, int width, int height);

struct RansacParams {
    double inlier_tol_px = 2.0;
    int iterations = 2000;
    std::uint64_t seed = 0x5eed;
};

struct AffineEstimate {
    Affine2D transform;
    std::vector<std::size_t> inliers; // indices into src/dst
};

/// Least-squares affine fit over all correspondences (>= 3 non-collinear).
Affine2D fit_affine_least_squares(const std::vector<Point2>& src, const std::vector<Point2>& dst);

/// RANSAC affine estimation: maximizes inlier count over seeded random
/// 3-point samples, then refits by least squares on the inliers. With 4 or
/// fewer correspondences this degenerates to a least-squares fit with an
/// inlier audit. Deterministic for a fixed seed.
/// Throws EstimationError with < 3 points or when the best model has < 3 inliers.
AffineEstimate estimate_affine_ransac(const std::vector<Point2>& src,
                                      const std::vector<Point2>& dst,
                                      const RansacParams& params = {});

/// Horizontal-only bilinear resampling by `factor` in (0, 1]; height and
/// channels are unchanged. Source sampling uses the pixel-center convention
/// x_src = (x_dst + 0.5) / factor - 0.5. Throws GeometryError outside (0, 1].
ImageCube bilinear_resize_horizontal(const ImageCube& cube, double factor);

/// Horizontal coordinate mapping used by bilinear_resize_horizontal
/// (source -> destination).
inline double resize_dst_x(double src_x, double factor) {
    return (src_x + 0.5) * factor - 0.5;
}

/// Bilinear interpolation at (x, y) in pixel-center coordinates, clamped at
/// the borders.
double bilinear_sample(const GrayImage& img, double x, double y);

/// Per-row, per-channel statistics over a masked cube region.
struct RowStats {
    std::vector<int> rows;                      // raw rows with >= 1 unmasked pixel
    std::vector<std::vector<double>> values;    // values[i][c] for rows[i]
};

/// Linear-interpolated quantile q over the masked pixels of each row, per
/// channel. Rows with no masked pixel are omitted.
RowStats row_quantile(const ImageCube& cube, const BinaryMask& mask, double q = 0.75);

/// Row-wise median over all columns, per channel, restricted to `rows`.
/// An even count averages the two middle order statistics.
RowStats row_median(const ImageCube& cube, const std::vector<int>& rows);

} // namespace grainpipe
