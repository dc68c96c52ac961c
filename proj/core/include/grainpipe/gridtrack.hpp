#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "grainpipe/gridfind.hpp"

namespace grainpipe {

/// Affine motion of a localized grid, kept alongside the result for
/// diagnostics and cross-modal composition.
struct LocalizedGrid {
    GridModel grid;
    Affine2D transform;
    std::size_t inlier_count = 0;
};

/// Grid transformed through an affine: points, marker corners, chessboard
/// centers and the dish circle (radius scaled by sqrt|det|).
GridModel transform_grid(const GridModel& grid, const Affine2D& t);

/// A.2: affine from the reference's 8 marker corners to the given current
/// detections, matched by (id, canonical corner order). Exposed separately
/// so callers can inject their own detections (e.g. corner files).
LocalizedGrid localize_rgb_from_markers(const GridModel& reference,
                                        const std::vector<MarkerDetection>& current,
                                        const RansacParams& params = {});

/// A.2 with in-place marker detection on the current plate. Throws
/// DetectionError when a reference marker id is missing from the plate.
LocalizedGrid localize_rgb(const GridModel& reference, const PlateImage& current_plate,
                           const MarkerParams& marker_params = {},
                           const RansacParams& ransac = {});

/// A.3 core: affine from the RGB chessboard centers to the HSI ones, both
/// matched by plate quadrant (sign of center minus centroid).
LocalizedGrid localize_hsi_from_centers(const GridModel& rgb_grid,
                                        const std::vector<Point2>& rgb_centers,
                                        const std::vector<Point2>& hsi_centers,
                                        const RansacParams& params = {});

/// A.3 with in-place chessboard detection on the HSI plate.
LocalizedGrid localize_hsi(const GridModel& rgb_grid, const std::vector<Point2>& rgb_centers,
                           const PlateImage& hsi_plate, const ChessboardParams& board_params = {},
                           const RansacParams& ransac = {});

/// One cut-out grid cell: the circumscribed-rectangle crop with pixels
/// outside the cell polygon zeroed, plus the polygon and crop offset in
/// plate coordinates.
struct CellRecord {
    int i = 0; // lattice x of the cell's low corner
    int j = 0; // lattice y
    ImageCube image;
    std::vector<Point2> polygon; // plate coordinates, 4 vertices
    int offset_row = 0;          // plate row/col of image pixel (0, 0)
    int offset_col = 0;
};

/// Cuts cell (i, j), 0 <= i,j <= 4, bounded by lattice points (i,j), (i+1,j),
/// (i+1,j+1), (i,j+1). Throws ValueError for bad indices and GeometryError
/// when the polygon area falls below 25 px^2.
CellRecord extract_cell(const PlateImage& plate, const GridModel& grid, int i, int j);

/// All 25 cells, row-major by (i, j).
std::vector<CellRecord> extract_all_cells(const PlateImage& plate, const GridModel& grid);

struct CellProvenance {
    std::string dish;
    int day = 0;
    Modality modality = Modality::RGB;
};

/// Writes <stem>.cube.json / <stem>.cube.bin (pixcodec) plus <stem>.meta.json
/// carrying the polygon, offset and provenance.
void save_cell_record(const CellRecord& record, const CellProvenance& prov,
                      const std::filesystem::path& dir, const std::string& stem);

} // namespace grainpipe
