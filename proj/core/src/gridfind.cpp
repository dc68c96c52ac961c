#include "grainpipe/gridfind.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "grainpipe/errors.hpp"

namespace grainpipe {

void validate_grid_model(const GridModel& model) {
    if (model.points.size() != 36)
        throw ValueError("grid model: expected 36 points, have " +
                         std::to_string(model.points.size()));
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 6; ++y)
            if (!model.points.count({x, y}))
                throw ValueError("grid model: missing lattice point (" + std::to_string(x) + "," +
                                 std::to_string(y) + ")");

    auto monotone = [&](bool fix_y) {
        for (int k = 0; k < 6; ++k) {
            Point2 prev_diff{0, 0};
            bool have_prev = false;
            for (int i = 0; i + 1 < 6; ++i) {
                const Point2 a = fix_y ? model.points.at({i, k}) : model.points.at({k, i});
                const Point2 b = fix_y ? model.points.at({i + 1, k}) : model.points.at({k, i + 1});
                const Point2 d = b - a;
                if (have_prev && d.dot(prev_diff) <= 0) return false;
                prev_diff = d;
                have_prev = true;
            }
        }
        return true;
    };
    if (!monotone(true) || !monotone(false))
        throw ValueError("grid model: lattice rows/columns are not monotone in image space");

    for (const auto& [idx, p] : model.points) {
        if (distance(p, model.dish.center) > 1.1 * model.dish.radius)
            throw ValueError("grid model: point (" + std::to_string(idx.first) + "," +
                             std::to_string(idx.second) + ") lies outside the dilated dish");
    }
}

Circle find_dish(const PlateImage& plate, const DishParams& params) {
    const GrayImage gray = grayscale(plate.cube);
    const GrayImage smooth = gaussian_smooth(gray, params.smooth_sigma);
    const BinaryMask edges = edge_detect(smooth, params.edges);
    const double r_min = params.radius_band.min_frac * plate.cube.height;
    const double r_max = params.radius_band.max_frac * plate.cube.height;
    const auto circles = hough_circles(edges, smooth, r_min, r_max, params.hough);
    const Point2 center{plate.cube.width / 2.0, plate.cube.height / 2.0};
    return select_dish_circle(circles, params.radius_band, plate.cube.height, center);
}

std::vector<HoughLine> find_grid_lines(const PlateImage& plate, const Circle& dish,
                                       const std::vector<MarkerDetection>& markers,
                                       const GridLineParams& params) {
    const GrayImage gray = grayscale(plate.cube);
    const GrayImage smooth = gaussian_smooth(gray, params.smooth_sigma);
    BinaryMask edges = edge_detect(smooth, params.edges);

    // Mask in the edge domain: outside the shrunk dish (rim edges) and inside
    // the dilated marker quads. Masking the image instead would manufacture
    // edges along the mask boundary.
    const double r_keep = params.inner_radius_factor * dish.radius;
    std::vector<std::vector<Point2>> marker_polys;
    for (const auto& m : markers) {
        const Point2 c = marker_center(m);
        std::vector<Point2> poly;
        for (const auto& corner : m.corners)
            poly.push_back(c + (corner - c) * params.marker_mask_scale);
        marker_polys.push_back(std::move(poly));
    }
    for (int r = 0; r < edges.height; ++r) {
        for (int c = 0; c < edges.width; ++c) {
            if (!edges.at(r, c)) continue;
            const Point2 p{static_cast<double>(c), static_cast<double>(r)};
            bool keep = distance(p, dish.center) <= r_keep;
            for (const auto& poly : marker_polys)
                if (keep && point_in_convex_polygon(p, poly)) keep = false;
            if (!keep) edges.set(r, c, 0);
        }
    }

    const auto raw_lines = hough_lines(edges, params.hough);
    return average_similar_lines(raw_lines, params.cluster_rho_tol, params.cluster_theta_tol_deg);
}

std::vector<LineCross> cross_lines(const std::vector<HoughLine>& lines, int width, int height) {
    std::vector<LineCross> crosses;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            const auto p = intersect(lines[i], lines[j]);
            if (!p) continue;
            if (p->x >= 0 && p->x < width && p->y >= 0 && p->y < height)
                crosses.push_back({*p, static_cast<int>(i), static_cast<int>(j)});
        }
    }
    return crosses;
}

namespace {

// Enumerate a marker's base line given the chosen member of its nearest
// intersection pair; returns the base line id, the six retained points and
// their other-line ids.
struct AxisEnumeration {
    int base_line_id = -1;
    std::vector<Point2> points;
    std::vector<int> other_lines;
};

AxisEnumeration enumerate_from_member(const LineCross& member, const LineCross& partner,
                                      const Point2& marker, const Point2& to_center,
                                      const std::vector<LineCross>& crosses) {
    const bool shares_a = member.line_a == partner.line_a || member.line_a == partner.line_b;
    const bool shares_b = member.line_b == partner.line_a || member.line_b == partner.line_b;
    if (shares_a == shares_b)
        throw DetectionError("grid orientation: nearest pair does not share exactly one line");
    const int base = shares_a ? member.line_b : member.line_a;

    struct Entry {
        double dist;
        Point2 p;
        int other;
    };
    std::vector<Entry> entries;
    for (const auto& c : crosses) {
        if (c.line_a != base && c.line_b != base) continue;
        if ((c.p - marker).dot(to_center) <= 0) continue; // the < 90 degree test
        entries.push_back({distance(c.p, marker), c.p, c.line_a == base ? c.line_b : c.line_a});
    }
    if (entries.size() < 6)
        throw DetectionError("grid incomplete: base line carries " +
                             std::to_string(entries.size()) + " qualifying points, need 6");
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.dist < b.dist; });
    entries.resize(6);

    AxisEnumeration out;
    out.base_line_id = base;
    for (const auto& e : entries) {
        out.points.push_back(e.p);
        out.other_lines.push_back(e.other);
    }
    return out;
}

} // namespace

std::array<OrientedAxis, 2> orient_axes(const std::vector<LineCross>& intersections,
                                        const std::vector<MarkerDetection>& markers,
                                        const Circle& dish,
                                        const std::vector<HoughLine>& lines) {
    if (markers.size() < 2)
        throw DetectionError("grid orientation: need 2 markers, have " +
                             std::to_string(markers.size()));
    if (intersections.size() < 10)
        throw DetectionError("grid orientation: need at least 10 intersections, have " +
                             std::to_string(intersections.size()));

    // Axis 0 anchors to the lowest marker id, axis 1 to the highest.
    std::vector<const MarkerDetection*> ordered{&markers[0], &markers[1]};
    std::sort(ordered.begin(), ordered.end(),
              [](const MarkerDetection* a, const MarkerDetection* b) { return a->id < b->id; });

    std::array<OrientedAxis, 2> axes;
    for (int ax = 0; ax < 2; ++ax) {
        const MarkerDetection& m = *ordered[static_cast<std::size_t>(ax)];
        const Point2 center = marker_center(m);
        const Point2 to_center = dish.center - center;

        // Nearest two intersections passing the angle test.
        std::vector<const LineCross*> candidates;
        for (const auto& c : intersections)
            if ((c.p - center).dot(to_center) > 0) candidates.push_back(&c);
        if (candidates.size() < 2)
            throw DetectionError("grid orientation: marker " + std::to_string(m.id) +
                                 " sees fewer than 2 qualifying intersections");
        std::sort(candidates.begin(), candidates.end(),
                  [&](const LineCross* a, const LineCross* b) {
                      return distance(a->p, center) < distance(b->p, center);
                  });
        const LineCross& first = *candidates[0];
        const LineCross& second = *candidates[1];

        // The procedure is claimed to be independent of which pair member is
        // chosen; compute both and hold it to that.
        const auto from_first = enumerate_from_member(first, second, center, to_center,
                                                      intersections);
        const auto from_second = enumerate_from_member(second, first, center, to_center,
                                                       intersections);
        if (from_first.other_lines != from_second.other_lines)
            throw DetectionError("grid orientation: pair-member choice changed the enumeration");

        OrientedAxis& axis = axes[static_cast<std::size_t>(ax)];
        axis.anchor_marker_id = m.id;
        axis.base_line = lines.at(static_cast<std::size_t>(from_first.base_line_id));
        axis.ordered_points = from_first.points;
        axis.line_ids = from_first.other_lines;
    }
    return axes;
}

LatticePoints assign_lattice(const std::array<OrientedAxis, 2>& axes,
                             const std::vector<HoughLine>& lines) {
    // axes[0] enumerated the constant-y lines, axes[1] the constant-x lines.
    LatticePoints points;
    for (int x = 0; x < 6; ++x) {
        for (int y = 0; y < 6; ++y) {
            const auto& line_x = lines.at(static_cast<std::size_t>(
                axes[1].line_ids[static_cast<std::size_t>(x)]));
            const auto& line_y = lines.at(static_cast<std::size_t>(
                axes[0].line_ids[static_cast<std::size_t>(y)]));
            const auto p = intersect(line_x, line_y);
            if (!p)
                throw GeometryError("assign_lattice: enumerated lines (" + std::to_string(x) +
                                    "," + std::to_string(y) + ") are near-parallel");
            points[{x, y}] = *p;
        }
    }
    return points;
}

const std::set<LatticeIndex>& default_excluded_points() {
    static const std::set<LatticeIndex> excluded = {{0, 0}, {0, 5}, {5, 0}, {5, 5},
                                                    {3, 0}, {2, 0}, {0, 3}, {0, 2}};
    return excluded;
}

LatticePoints refine_to_intensity_minima(const LatticePoints& points, const PlateImage& plate,
                                         const std::set<LatticeIndex>& excluded,
                                         const RefineParams& params) {
    const GrayImage smooth = gaussian_smooth(grayscale(plate.cube), params.smooth_sigma);
    LatticePoints refined;
    for (const auto& [idx, p] : points) {
        if (excluded.count(idx)) {
            refined[idx] = p;
            continue;
        }
        int cx = static_cast<int>(std::lround(p.x));
        int cy = static_cast<int>(std::lround(p.y));
        cx = std::clamp(cx, 0, smooth.width - 1);
        cy = std::clamp(cy, 0, smooth.height - 1);
        const int x_lo = std::max(0, cx - params.window_px);
        const int x_hi = std::min(smooth.width - 1, cx + params.window_px);
        const int y_lo = std::max(0, cy - params.window_px);
        const int y_hi = std::min(smooth.height - 1, cy + params.window_px);

        // Greedy 3x3 descent; strict improvement only, so flat neighborhoods
        // leave the point in place.
        bool moved = true;
        while (moved) {
            moved = false;
            double best = smooth.at(cy, cx);
            int bx = cx, by = cy;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = cx + dx, ny = cy + dy;
                    if (nx < x_lo || nx > x_hi || ny < y_lo || ny > y_hi) continue;
                    if (smooth.at(ny, nx) < best) {
                        best = smooth.at(ny, nx);
                        bx = nx;
                        by = ny;
                    }
                }
            }
            if (bx != cx || by != cy) {
                cx = bx;
                cy = by;
                moved = true;
            }
        }
        refined[idx] = {static_cast<double>(cx), static_cast<double>(cy)};
    }
    return refined;
}

GridModel detect_grid(const PlateImage& plate, const std::vector<Chessboard>& boards,
                      const std::string& dish_id,
                      const std::vector<MarkerDetection>* markers_override,
                      const GridFindParams& params) {
    GridModel model;
    model.dish_id = dish_id;
    model.markers = markers_override ? *markers_override : detect_markers(plate, params.markers);
    model.dish = find_dish(plate, params.dish);

    const auto lines = find_grid_lines(plate, model.dish, model.markers, params.lines);
    const auto crosses = cross_lines(lines, plate.cube.width, plate.cube.height);
    const auto axes = orient_axes(crosses, model.markers, model.dish, lines);
    const auto raw_points = assign_lattice(axes, lines);
    model.points = refine_to_intensity_minima(raw_points, plate, default_excluded_points(),
                                              params.refine);

    for (const auto& b : boards) model.chessboard_centers.push_back(b.center);
    validate_grid_model(model);
    return model;
}

void save_grid_model(const GridModel& model, const std::filesystem::path& path) {
    nlohmann::json points;
    for (const auto& [idx, p] : model.points)
        points[std::to_string(idx.first) + "," + std::to_string(idx.second)] = {p.x, p.y};

    nlohmann::json markers = nlohmann::json::array();
    for (const auto& m : model.markers) {
        nlohmann::json corners = nlohmann::json::array();
        for (const auto& c : m.corners) corners.push_back({c.x, c.y});
        markers.push_back({{"id", m.id}, {"corners", corners}});
    }

    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : model.chessboard_centers) centers.push_back({c.x, c.y});

    const nlohmann::json doc = {
        {"dish_id", model.dish_id},
        {"points", points},
        {"markers", markers},
        {"chessboard_centers", centers},
        {"dish_circle",
         {{"cx", model.dish.center.x}, {"cy", model.dish.center.y}, {"radius", model.dish.radius}}},
    };
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write grid model: " + path.string());
    out << doc.dump(2) << "\n";
}

GridModel load_grid_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open grid model: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("grid model " + path.string() + ": " + e.what());
    }

    GridModel model;
    try {
        model.dish_id = doc.at("dish_id").get<std::string>();
        for (const auto& [key, value] : doc.at("points").items()) {
            const auto comma = key.find(',');
            if (comma == std::string::npos)
                throw FormatError("grid model " + path.string() + ": bad point key '" + key + "'");
            const int x = std::stoi(key.substr(0, comma));
            const int y = std::stoi(key.substr(comma + 1));
            model.points[{x, y}] = {value.at(0).get<double>(), value.at(1).get<double>()};
        }
        for (const auto& entry : doc.at("markers")) {
            MarkerDetection m;
            m.id = entry.at("id").get<int>();
            for (std::size_t i = 0; i < 4; ++i) {
                m.corners[i].x = entry.at("corners").at(i).at(0).get<double>();
                m.corners[i].y = entry.at("corners").at(i).at(1).get<double>();
            }
            model.markers.push_back(m);
        }
        for (const auto& entry : doc.at("chessboard_centers"))
            model.chessboard_centers.push_back({entry.at(0).get<double>(), entry.at(1).get<double>()});
        const auto& dish = doc.at("dish_circle");
        model.dish.center = {dish.at("cx").get<double>(), dish.at("cy").get<double>()};
        model.dish.radius = dish.at("radius").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("grid model " + path.string() + ": " + e.what());
    }
    return model;
}

} // namespace grainpipe
