#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "grainpipe/fiducial.hpp"
#include "grainpipe/geometry.hpp"
#include "grainpipe/standardize.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

using LatticeIndex = std::pair<int, int>; // (x, y), both in 0..5
using LatticePoints = std::map<LatticeIndex, Point2>;

/// The one-time reference detection result for a dish: 36 lattice points in
/// plate coordinates plus the fiducial anchors used for later tracking.
struct GridModel {
    std::string dish_id;
    LatticePoints points;
    std::vector<MarkerDetection> markers;
    std::vector<Point2> chessboard_centers;
    Circle dish{};
};

/// Throws on violated invariants: exactly 36 points, rows/columns monotone in
/// image space, every point inside the dish circle dilated by 10%.
void validate_grid_model(const GridModel& model);

void save_grid_model(const GridModel& model, const std::filesystem::path& path);
GridModel load_grid_model(const std::filesystem::path& path);

struct DishParams {
    double smooth_sigma = 2.0;
    EdgeParams edges{};
    CircleHoughParams hough{};
    RadiusBand radius_band{};
};

/// Petri dish circle on a standardized plate.
Circle find_dish(const PlateImage& plate, const DishParams& params = {});

struct GridLineParams {
    double smooth_sigma = 1.5;
    EdgeParams edges{};
    LineHoughParams hough{};
    double cluster_rho_tol = 10.0;
    double cluster_theta_tol_deg = 2.0;
    double inner_radius_factor = 0.95; // edge support kept inside this radius
    double marker_mask_scale = 1.4;    // marker quads dilated before masking
};

/// Averaged centerlines of the grid bars inside the dish, with dish border
/// and marker quads masked out of the edge support. Typically 12 lines, but
/// spurious extras are tolerated downstream.
std::vector<HoughLine> find_grid_lines(const PlateImage& plate, const Circle& dish,
                                       const std::vector<MarkerDetection>& markers,
                                       const GridLineParams& params = {});

/// A grid intersection together with the two lines that produced it.
struct LineCross {
    Point2 p;
    int line_a; // indices into the line list handed to cross_lines
    int line_b;
};

std::vector<LineCross> cross_lines(const std::vector<HoughLine>& lines, int width, int height);

/// One marker's enumeration of a line family (Appendix A.1): base_line is
/// the grid line through the marker's nearest intersection pair member that
/// the partner does not share; ordered_points are the six qualifying
/// intersections on it, nearest first; line_ids[i] is the other line through
/// ordered_points[i], the one that carries lattice coordinate i.
struct OrientedAxis {
    int anchor_marker_id = -1;
    HoughLine base_line{};
    std::vector<Point2> ordered_points;
    std::vector<int> line_ids;
};

/// Orientation step: axis[0] anchors to the lowest marker id (its line_ids
/// carry constant y = 0..5), axis[1] to the highest (constant x = 0..5).
/// The pair-member choice invariance claimed by the procedure is asserted.
/// Throws DetectionError when preconditions fail or a base line carries
/// fewer than six qualifying points.
std::array<OrientedAxis, 2> orient_axes(const std::vector<LineCross>& intersections,
                                        const std::vector<MarkerDetection>& markers,
                                        const Circle& dish,
                                        const std::vector<HoughLine>& lines);

/// All 36 lattice points from the two enumerated line families.
LatticePoints assign_lattice(const std::array<OrientedAxis, 2>& axes,
                             const std::vector<HoughLine>& lines);

struct RefineParams {
    double smooth_sigma = 3.0;
    int window_px = 15;
};

/// The published always-excluded lattice positions.
const std::set<LatticeIndex>& default_excluded_points();

/// Greedy descent of each non-excluded point to a local intensity minimum of
/// the smoothed plate grayscale, bounded to a window around the start.
LatticePoints refine_to_intensity_minima(const LatticePoints& points, const PlateImage& plate,
                                         const std::set<LatticeIndex>& excluded,
                                         const RefineParams& params = {});

struct GridFindParams {
    DishParams dish{};
    GridLineParams lines{};
    RefineParams refine{};
    MarkerParams markers{};
};

/// Full one-time detection chain on a standardized reference frame:
/// dish -> masked grid lines -> orientation -> lattice -> refinement.
/// `markers_override` bypasses detection (external corner files).
GridModel detect_grid(const PlateImage& plate, const std::vector<Chessboard>& boards,
                      const std::string& dish_id,
                      const std::vector<MarkerDetection>* markers_override = nullptr,
                      const GridFindParams& params = {});

} // namespace grainpipe
