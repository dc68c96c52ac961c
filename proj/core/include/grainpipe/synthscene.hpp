#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "grainpipe/geometry.hpp"
#include "grainpipe/gridfind.hpp"
#include "grainpipe/image.hpp"

namespace grainpipe {

/// One synthetic kernel: an ellipse in canonical plate coordinates with its
/// own reflectance (RGB triple and HSI spectrum).
struct KernelSpec {
    Point2 center{};
    double semi_major = 14.0;
    double semi_minor = 10.0;
    double angle_rad = 0.0;
    std::array<double, 3> rgb_albedo{0.6, 0.58, 0.52};
    std::vector<double> hsi_reflectance; // length = SceneSpec::hsi_channels
    int cell_i = 0;
    int cell_j = 0;
    int germination_day = 0; // 0 = never sprouts; otherwise first sprout day
};

struct MarkerSpec {
    int id = 0;
    Point2 center{};
    int orientation = 0; // pattern rotated orientation * 90 degrees cw
};

struct DecoySpec {
    enum class Type { BrightSpeck, Scratch, Ring };
    Type type = Type::BrightSpeck;
    Point2 center{};
    double radius = 3.0;   // speck / ring radius
    double length = 0.0;   // scratch half-length
    double width = 2.0;    // scratch / ring stroke width
    double angle_rad = 0.0;
    double albedo = 0.9;
};

/// Full description of a synthetic scene in canonical plate coordinates
/// ("phys" units, 1 unit = 1 unstretched RGB pixel). Deterministic: the same
/// spec renders bit-identically.
struct SceneSpec {
    std::uint64_t seed = 1;

    // Plate layout.
    double plate_width = 560.0;
    double plate_height = 432.0;
    double frame_margin = 24.0; // dark conveyor border kept in the raw frame
    double strip_margin = 6.0;  // white reference strips at both sides
    double strip_width = 24.0;

    // Dish and grid.
    Point2 dish_center{280.0, 216.0};
    double dish_radius = 176.4; // outer wall; filter paper ends at -rim_width
    double rim_width = 3.5;
    double grid_spacing = 42.0;
    double grid_rotation_deg = 0.0;
    double bar_width = 3.0;
    bool white_paper = true; // reference scenes; sessions use black paper

    // Fiducials.
    int board_pattern = 4;
    double board_square = 16.0;
    double board_inset = 78.0; // board centers from the crop corners
    double marker_module = 6.0;
    // Defaults match the default grid pose; call place_fiducials() after
    // changing the dish or grid.
    std::array<MarkerSpec, 2> markers{MarkerSpec{3, {280.0, 71.1}, 0},
                                      MarkerSpec{7, {135.1, 216.0}, 0}};

    // Radiometry.
    double paper_white_albedo = 0.85;
    double paper_black_albedo = 0.12;
    double illumination_amplitude = 0.10;
    double illumination_phase = 0.0;
    double noise_sigma = 0.01;    // fraction of full scale
    double hsi_dark_level = 0.03; // fraction of full scale
    double dropout_rate = 0.0;    // HSI raw zeroing probability
    bool quantize = true;         // false keeps raw counts unrounded

    // Geometry per modality.
    double stretch_rgb = 1.3; // anamorphic over-sampling along transport
    double stretch_hsi = 1.25;
    double hsi_scale = 0.65; // HSI resolution relative to phys units
    int hsi_channels = 40;

    std::vector<KernelSpec> kernels;
    std::vector<DecoySpec> decoys;
};

/// Lattice index -> canonical plate coordinates for this spec.
Point2 lattice_to_phys(const SceneSpec& spec, double lx, double ly);

/// Recomputes both marker centers from the current grid pose: the lower id
/// sits outside the y = 0 grid edge at lattice (2.5, -0.95), the higher id
/// outside x = 0 at (-0.95, 2.5). Keeps ids, fixes ordering (lower id first).
void place_fiducials(SceneSpec& spec);

/// Everything a test needs, in post-session-affine phys coordinates, plus
/// the exact phys -> raw pixel affine of each rendered frame.
struct GroundTruth {
    LatticePoints lattice;                           // 36 points
    std::array<int, 2> marker_ids{};
    std::array<std::array<Point2, 4>, 2> marker_corners{}; // canonical order
    std::array<Point2, 4> board_centers{};
    double board_square_w = 0.0; // phys units (pre-stretch)
    double board_square_h = 0.0;
    Circle dish{};                                   // filter-paper boundary
    std::array<std::array<Point2, 4>, 2> strips{};   // white reference quads
    std::vector<KernelSpec> kernels;                 // post-affine poses
    Affine2D session_affine;                         // identity for reference
    Affine2D phys_to_raw_rgb;
    Affine2D phys_to_raw_hsi;
};

struct RenderedFrame {
    ImageCube raw;
    Affine2D phys_to_raw;
};

struct SceneRender {
    RenderedFrame rgb;
    GroundTruth truth;
};

struct SessionRender {
    RenderedFrame rgb;
    RenderedFrame hsi;
    RenderedFrame hsi_dark;
    GroundTruth truth;
};

/// Reference frame (A.1 input): white paper, no kernels, RGB only.
SceneRender render_reference(const SceneSpec& spec);

/// Session frames for one day (A.2/A.3 inputs): black paper, kernels with
/// sprouts from their germination day on, the whole plate repositioned by
/// `session_affine` (expected to be a similarity). Renders RGB, HSI and the
/// HSI dark frame.
SessionRender render_session(const SceneSpec& spec, int day, const Affine2D& session_affine);

/// Scene factory used by the randomized suites: dish pose jitter, <= 5 deg
/// grid rotation, random illumination, stretch in [1.2, 1.4], 25 kernels.
SceneSpec make_random_scene(std::uint64_t seed);

/// Small derived-seed similarity for day sessions (rotation <= 3 deg, scale
/// within 2%, translation <= 8 phys px).
Affine2D make_session_affine(std::uint64_t seed, int day);

void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& path);
SceneSpec load_scene_spec(const std::filesystem::path& path);
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);

} // namespace grainpipe
