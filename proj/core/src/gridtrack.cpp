#include "grainpipe/gridtrack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "grainpipe/errors.hpp"
#include "grainpipe/pixcodec.hpp"

namespace grainpipe {

GridModel transform_grid(const GridModel& grid, const Affine2D& t) {
    GridModel out = grid;
    for (auto& [idx, p] : out.points) p = t.apply(p);
    for (auto& m : out.markers)
        for (auto& c : m.corners) c = t.apply(c);
    for (auto& c : out.chessboard_centers) c = t.apply(c);
    out.dish.center = t.apply(grid.dish.center);
    out.dish.radius = grid.dish.radius * std::sqrt(std::abs(t.det()));
    return out;
}

LocalizedGrid localize_rgb_from_markers(const GridModel& reference,
                                        const std::vector<MarkerDetection>& current,
                                        const RansacParams& params) {
    std::vector<Point2> src, dst;
    for (const auto& ref_marker : reference.markers) {
        const MarkerDetection* match = nullptr;
        for (const auto& cur : current)
            if (cur.id == ref_marker.id) match = &cur;
        if (!match)
            throw DetectionError("tracking: marker id " + std::to_string(ref_marker.id) +
                                 " not found in the current frame");
        for (std::size_t k = 0; k < 4; ++k) {
            src.push_back(ref_marker.corners[k]);
            dst.push_back(match->corners[k]);
        }
    }
    const AffineEstimate est = estimate_affine_ransac(src, dst, params);
    return {transform_grid(reference, est.transform), est.transform, est.inliers.size()};
}

LocalizedGrid localize_rgb(const GridModel& reference, const PlateImage& current_plate,
                           const MarkerParams& marker_params, const RansacParams& ransac) {
    return localize_rgb_from_markers(reference, detect_markers(current_plate, marker_params),
                                     ransac);
}

namespace {

// Boards matched by plate quadrant: sort by (above/below centroid,
// left/right of centroid). Each quadrant must appear exactly once.
std::array<Point2, 4> quadrant_sort(const std::vector<Point2>& centers, const char* what) {
    if (centers.size() != 4)
        throw DetectionError(std::string(what) + ": need 4 chessboard centers, have " +
                             std::to_string(centers.size()));
    Point2 centroid{0, 0};
    for (const auto& c : centers) centroid = centroid + c;
    centroid = centroid * 0.25;

    std::array<Point2, 4> sorted{};
    std::array<bool, 4> seen{};
    for (const auto& c : centers) {
        const int q = (c.y < centroid.y ? 0 : 2) + (c.x < centroid.x ? 0 : 1);
        if (seen[static_cast<std::size_t>(q)])
            throw DetectionError(std::string(what) +
                                 ": ambiguous board layout (two centers in one quadrant)");
        seen[static_cast<std::size_t>(q)] = true;
        sorted[static_cast<std::size_t>(q)] = c;
    }
    return sorted;
}

} // namespace

LocalizedGrid localize_hsi_from_centers(const GridModel& rgb_grid,
                                        const std::vector<Point2>& rgb_centers,
                                        const std::vector<Point2>& hsi_centers,
                                        const RansacParams& params) {
    const auto src = quadrant_sort(rgb_centers, "localize_hsi (rgb)");
    const auto dst = quadrant_sort(hsi_centers, "localize_hsi (hsi)");
    const AffineEstimate est = estimate_affine_ransac(
        std::vector<Point2>(src.begin(), src.end()), std::vector<Point2>(dst.begin(), dst.end()),
        params);
    return {transform_grid(rgb_grid, est.transform), est.transform, est.inliers.size()};
}

LocalizedGrid localize_hsi(const GridModel& rgb_grid, const std::vector<Point2>& rgb_centers,
                           const PlateImage& hsi_plate, const ChessboardParams& board_params,
                           const RansacParams& ransac) {
    const auto boards = detect_chessboards(hsi_plate, board_params);
    std::vector<Point2> hsi_centers;
    for (const auto& b : boards) hsi_centers.push_back(b.center);
    return localize_hsi_from_centers(rgb_grid, rgb_centers, hsi_centers, ransac);
}

CellRecord extract_cell(const PlateImage& plate, const GridModel& grid, int i, int j) {
    if (i < 0 || i > 4 || j < 0 || j > 4)
        throw ValueError("extract_cell: cell (" + std::to_string(i) + "," + std::to_string(j) +
                         ") out of range 0..4");
    if (grid.points.empty()) throw ValueError("extract_cell: grid has no points");

    CellRecord rec;
    rec.i = i;
    rec.j = j;
    rec.polygon = {grid.points.at({i, j}), grid.points.at({i + 1, j}),
                   grid.points.at({i + 1, j + 1}), grid.points.at({i, j + 1})};

    const double area = polygon_area(rec.polygon);
    if (area < 25.0)
        throw GeometryError("extract_cell: cell (" + std::to_string(i) + "," + std::to_string(j) +
                            ") polygon area " + std::to_string(area) + " px^2 is degenerate");

    double min_x = rec.polygon[0].x, max_x = min_x;
    double min_y = rec.polygon[0].y, max_y = min_y;
    for (const auto& p : rec.polygon) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    BBox box;
    box.row0 = std::max(0, static_cast<int>(std::floor(min_y)));
    box.col0 = std::max(0, static_cast<int>(std::floor(min_x)));
    box.row1 = std::min(plate.cube.height - 1, static_cast<int>(std::ceil(max_y)));
    box.col1 = std::min(plate.cube.width - 1, static_cast<int>(std::ceil(max_x)));
    if (box.empty())
        throw GeometryError("extract_cell: cell (" + std::to_string(i) + "," + std::to_string(j) +
                            ") lies outside the plate");

    rec.image = crop(plate.cube, box);
    rec.offset_row = box.row0;
    rec.offset_col = box.col0;

    for (int r = 0; r < rec.image.height; ++r) {
        for (int c = 0; c < rec.image.width; ++c) {
            const Point2 p{static_cast<double>(box.col0 + c), static_cast<double>(box.row0 + r)};
            if (point_in_convex_polygon(p, rec.polygon)) continue;
            for (int k = 0; k < rec.image.channels; ++k)
                rec.image.data[rec.image.index(r, c, k)] = 0.0;
        }
    }
    return rec;
}

std::vector<CellRecord> extract_all_cells(const PlateImage& plate, const GridModel& grid) {
    std::vector<CellRecord> cells;
    cells.reserve(25);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) cells.push_back(extract_cell(plate, grid, i, j));
    return cells;
}

void save_cell_record(const CellRecord& record, const CellProvenance& prov,
                      const std::filesystem::path& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    write_cube(record.image, dir / (stem + ".cube.json"));

    nlohmann::json polygon = nlohmann::json::array();
    for (const auto& p : record.polygon) polygon.push_back({p.x, p.y});
    const nlohmann::json doc = {
        {"dish", prov.dish},
        {"day", prov.day},
        {"modality", to_string(prov.modality)},
        {"cell", {record.i, record.j}},
        {"polygon", polygon},
        {"offset", {record.offset_row, record.offset_col}},
    };
    std::ofstream out(dir / (stem + ".meta.json"));
    if (!out) throw FormatError("cannot write cell metadata: " + (dir / stem).string());
    out << doc.dump(2) << "\n";
}

} // namespace grainpipe
