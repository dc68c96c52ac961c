#include "grainpipe/fiducial.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "grainpipe/errors.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

std::uint16_t rotate_code_cw(std::uint16_t code) {
    std::uint16_t out = 0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (code >> ((3 - c) * 4 + r) & 1) out |= static_cast<std::uint16_t>(1 << (r * 4 + c));
    return out;
}

namespace {

std::array<std::uint16_t, 4> code_rotations(std::uint16_t code) {
    std::array<std::uint16_t, 4> rots{};
    rots[0] = code;
    for (int i = 1; i < 4; ++i) rots[static_cast<std::size_t>(i)] =
        rotate_code_cw(rots[static_cast<std::size_t>(i - 1)]);
    return rots;
}

std::array<std::uint16_t, 16> generate_dictionary() {
    std::array<std::uint16_t, 16> dict{};
    std::size_t n = 0;
    for (std::uint32_t cand = 1; cand < 0xFFFF && n < dict.size(); ++cand) {
        const auto rc = code_rotations(static_cast<std::uint16_t>(cand));
        bool ok = rc[0] != rc[1] && rc[0] != rc[2] && rc[0] != rc[3] && rc[1] != rc[2] &&
                  rc[1] != rc[3] && rc[2] != rc[3];
        for (std::size_t i = 0; ok && i < n; ++i) {
            if (std::popcount(static_cast<unsigned>(dict[i] ^ cand)) < 8) ok = false;
            const auto ra = code_rotations(dict[i]);
            for (auto a : ra)
                for (auto c : rc)
                    if (a == c) ok = false;
        }
        if (ok) dict[n++] = static_cast<std::uint16_t>(cand);
    }
    if (n != dict.size()) throw Error("marker dictionary generation fell short");
    return dict;
}

} // namespace

const std::array<std::uint16_t, 16>& marker_dictionary() {
    static const std::array<std::uint16_t, 16> dict = generate_dictionary();
    return dict;
}

Point2 marker_center(const MarkerDetection& m) {
    Point2 sum{0, 0};
    for (const auto& c : m.corners) sum = sum + c;
    return sum * 0.25;
}

Homography marker_homography(const MarkerDetection& m) {
    return homography_from_points({Point2{0, 0}, Point2{6, 0}, Point2{6, 6}, Point2{0, 6}},
                                  m.corners);
}

namespace {

struct Quad {
    std::array<Point2, 4> corners; // TL, TR, BR, BL in image space
};

// Total-least-squares line through points: centroid + principal direction.
struct FitLine {
    Point2 point;
    Point2 dir;
};

FitLine fit_line(const std::vector<Point2>& pts) {
    Point2 mean{0, 0};
    for (const auto& p : pts) mean = mean + p;
    mean = mean * (1.0 / static_cast<double>(pts.size()));
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& p : pts) {
        const double dx = p.x - mean.x, dy = p.y - mean.y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Leading eigenvector of the 2x2 scatter matrix.
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double lambda = tr / 2 + std::sqrt(std::max(tr * tr / 4 - det, 0.0));
    Point2 dir{sxy, lambda - sxx};
    if (dir.norm() < 1e-12) dir = sxx >= syy ? Point2{1, 0} : Point2{0, 1};
    return {mean, dir * (1.0 / dir.norm())};
}

std::optional<Point2> line_cross(const FitLine& a, const FitLine& b) {
    const double denom = a.dir.x * b.dir.y - a.dir.y * b.dir.x;
    if (std::abs(denom) < 1e-9) return std::nullopt;
    const double t = ((b.point.x - a.point.x) * b.dir.y - (b.point.y - a.point.y) * b.dir.x) / denom;
    return a.point + a.dir * t;
}

// Corner candidates from the diagonal extremes of the boundary (valid for
// tilts below 45 degrees), then each side refined by a least-squares line
// over its central stretch and corners recomputed as line intersections.
std::optional<Quad> fit_quad(const std::vector<Point2>& boundary) {
    if (boundary.size() < 12) return std::nullopt;
    Quad q;
    double best_tl = 1e300, best_br = -1e300, best_tr = -1e300, best_bl = 1e300;
    for (const auto& p : boundary) {
        if (p.x + p.y < best_tl) { best_tl = p.x + p.y; q.corners[0] = p; }
        if (p.x - p.y > best_tr) { best_tr = p.x - p.y; q.corners[1] = p; }
        if (p.x + p.y > best_br) { best_br = p.x + p.y; q.corners[2] = p; }
        if (p.x - p.y < best_bl) { best_bl = p.x - p.y; q.corners[3] = p; }
    }

    std::array<FitLine, 4> sides;
    for (int s = 0; s < 4; ++s) {
        const Point2 a = q.corners[static_cast<std::size_t>(s)];
        const Point2 b = q.corners[static_cast<std::size_t>((s + 1) % 4)];
        const Point2 ab = b - a;
        const double len2 = ab.dot(ab);
        if (len2 < 1e-9) return std::nullopt;
        std::vector<Point2> near;
        for (const auto& p : boundary) {
            const double t = (p - a).dot(ab) / len2;
            if (t < 0.15 || t > 0.85) continue;
            const Point2 foot = a + ab * t;
            if (distance(p, foot) <= 2.5) near.push_back(p);
        }
        if (near.size() < 5)
            sides[static_cast<std::size_t>(s)] = {a, ab * (1.0 / std::sqrt(len2))};
        else
            sides[static_cast<std::size_t>(s)] = fit_line(near);
    }
    for (int s = 0; s < 4; ++s) {
        // Corner s sits between side s-1 and side s.
        const auto p = line_cross(sides[static_cast<std::size_t>((s + 3) % 4)],
                                  sides[static_cast<std::size_t>(s)]);
        if (!p) return std::nullopt;
        q.corners[static_cast<std::size_t>(s)] = *p;
    }
    return q;
}

// Mean gray over a 3x3 subsample of module (r, c) in the canonical frame.
double sample_module(const GrayImage& gray, const Homography& h, int r, int c) {
    static constexpr double offs[3] = {-0.27, 0.0, 0.27};
    double acc = 0.0;
    for (double dv : offs) {
        for (double du : offs) {
            const Point2 p = h.apply({c + 0.5 + du, r + 0.5 + dv});
            acc += bilinear_sample(gray, p.x, p.y);
        }
    }
    return acc / 9.0;
}

} // namespace

std::vector<MarkerDetection> find_markers(const GrayImage& gray, const MarkerParams& params) {
    double threshold;
    try {
        threshold = otsu_threshold(gray);
    } catch (const DetectionError&) {
        return {};
    }

    BinaryMask dark;
    dark.height = gray.height;
    dark.width = gray.width;
    dark.bits.resize(gray.values.size());
    for (std::size_t i = 0; i < gray.values.size(); ++i)
        dark.bits[i] = gray.values[i] <= threshold ? 1 : 0;

    const LabeledRegions regions = connected_components(dark, 4);
    const double min_area = params.min_side_px * params.min_side_px * params.min_fill;
    const double max_area = params.max_side_px * params.max_side_px * 1.05;
    const auto& dict = marker_dictionary();

    std::vector<MarkerDetection> found;
    for (int label = 1; label <= regions.count; ++label) {
        const double area = static_cast<double>(regions.areas[static_cast<std::size_t>(label)]);
        if (area < min_area || area > max_area) continue;

        std::vector<Point2> boundary;
        for (int r = 0; r < gray.height; ++r) {
            for (int c = 0; c < gray.width; ++c) {
                if (regions.labels[static_cast<std::size_t>(r) * gray.width + c] != label) continue;
                const bool edge =
                    r == 0 || r == gray.height - 1 || c == 0 || c == gray.width - 1 ||
                    regions.labels[static_cast<std::size_t>(r - 1) * gray.width + c] != label ||
                    regions.labels[static_cast<std::size_t>(r + 1) * gray.width + c] != label ||
                    regions.labels[static_cast<std::size_t>(r) * gray.width + c - 1] != label ||
                    regions.labels[static_cast<std::size_t>(r) * gray.width + c + 1] != label;
                if (edge) boundary.push_back({static_cast<double>(c), static_cast<double>(r)});
            }
        }
        const auto quad = fit_quad(boundary);
        if (!quad) continue;

        std::array<double, 4> side_len;
        for (int s = 0; s < 4; ++s)
            side_len[static_cast<std::size_t>(s)] =
                distance(quad->corners[static_cast<std::size_t>(s)],
                         quad->corners[static_cast<std::size_t>((s + 1) % 4)]);
        const auto [lo, hi] = std::minmax_element(side_len.begin(), side_len.end());
        const double mean_side = (side_len[0] + side_len[1] + side_len[2] + side_len[3]) / 4.0;
        if (mean_side < params.min_side_px || mean_side > params.max_side_px) continue;
        if (*lo <= 0 || *hi / *lo > params.max_side_ratio) continue;
        const std::vector<Point2> poly(quad->corners.begin(), quad->corners.end());
        const double quad_area = polygon_area(poly);
        if (quad_area <= 0 || area / quad_area < params.min_fill || area / quad_area > 1.1)
            continue;

        Homography h;
        try {
            h = homography_from_points(
                {Point2{0, 0}, Point2{6, 0}, Point2{6, 6}, Point2{0, 6}}, quad->corners);
        } catch (const GeometryError&) {
            continue;
        }

        // Border ring must be uniformly dark, the outside margin uniformly
        // bright; their midpoint thresholds the code bits.
        double ring_sum = 0, margin_sum = 0;
        int ring_n = 0, margin_n = 0;
        std::array<double, 36> module_mean{};
        for (int r = -1; r <= 6; ++r) {
            for (int c = -1; c <= 6; ++c) {
                const bool margin = r == -1 || r == 6 || c == -1 || c == 6;
                const bool ring = !margin && (r == 0 || r == 5 || c == 0 || c == 5);
                if (!margin && !ring && !(r >= 1 && r <= 4 && c >= 1 && c <= 4)) continue;
                const double v = sample_module(gray, h, r, c);
                if (margin) {
                    margin_sum += v;
                    ++margin_n;
                } else {
                    module_mean[static_cast<std::size_t>(r * 6 + c)] = v;
                    if (ring) {
                        ring_sum += v;
                        ++ring_n;
                    }
                }
            }
        }
        const double ring_mean = ring_sum / ring_n;
        const double margin_mean = margin_sum / margin_n;
        if (!(ring_mean < margin_mean)) continue;
        const double bit_threshold = 0.5 * (ring_mean + margin_mean);

        bool ring_ok = true;
        for (int r = 0; r < 6 && ring_ok; ++r)
            for (int c = 0; c < 6 && ring_ok; ++c)
                if (r == 0 || r == 5 || c == 0 || c == 5)
                    if (module_mean[static_cast<std::size_t>(r * 6 + c)] >= bit_threshold)
                        ring_ok = false;
        if (!ring_ok) continue;

        std::uint16_t code = 0;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                if (module_mean[static_cast<std::size_t>((r + 1) * 6 + (c + 1))] < bit_threshold)
                    code |= static_cast<std::uint16_t>(1 << (r * 4 + c));

        // sampled == cw^k(dict[id]) <=> cw^j(sampled) == dict[id], k = (4-j)%4.
        int id = -1, k = 0;
        std::uint16_t probe = code;
        for (int j = 0; j < 4 && id < 0; ++j) {
            for (std::size_t i = 0; i < dict.size(); ++i) {
                if (probe == dict[i]) {
                    id = static_cast<int>(i);
                    k = (4 - j) % 4;
                    break;
                }
            }
            probe = rotate_code_cw(probe);
        }
        if (id < 0) continue;

        MarkerDetection det;
        det.id = id;
        for (int i = 0; i < 4; ++i)
            det.corners[static_cast<std::size_t>(i)] = quad->corners[static_cast<std::size_t>((k + i) % 4)];
        found.push_back(det);
    }
    return found;
}

std::vector<MarkerDetection> detect_markers(const PlateImage& plate, const MarkerParams& params) {
    auto markers = find_markers(grayscale(plate.cube), params);
    std::string ids;
    for (const auto& m : markers) ids += (ids.empty() ? "" : ", ") + std::to_string(m.id);
    if (markers.size() != 2)
        throw DetectionError("marker detection found " + std::to_string(markers.size()) +
                             " marker(s) (ids: " + (ids.empty() ? "none" : ids) +
                             "), expected 2");
    if (markers[0].id == markers[1].id)
        throw DetectionError("marker detection found duplicate id " +
                             std::to_string(markers[0].id) + ", expected 2 distinct markers");
    std::sort(markers.begin(), markers.end(),
              [](const MarkerDetection& a, const MarkerDetection& b) { return a.id < b.id; });
    return markers;
}

std::vector<MarkerDetection> load_marker_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open marker file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("marker file " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw FormatError("marker file " + path.string() + ": expected an array");

    std::vector<MarkerDetection> markers;
    for (const auto& entry : doc) {
        try {
            MarkerDetection m;
            m.id = entry.at("id").get<int>();
            const auto& corners = entry.at("corners");
            if (!corners.is_array() || corners.size() != 4)
                throw FormatError("marker file " + path.string() + ": need 4 corners per marker");
            for (std::size_t i = 0; i < 4; ++i) {
                m.corners[i].x = corners[i].at(0).get<double>();
                m.corners[i].y = corners[i].at(1).get<double>();
            }
            markers.push_back(m);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("marker file " + path.string() + ": " + e.what());
        }
    }
    return markers;
}

void save_marker_file(const std::vector<MarkerDetection>& markers,
                      const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& m : markers) {
        nlohmann::json corners = nlohmann::json::array();
        for (const auto& c : m.corners) corners.push_back({c.x, c.y});
        doc.push_back({{"id", m.id}, {"corners", corners}});
    }
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write marker file: " + path.string());
    out << doc.dump(2) << "\n";
}

} // namespace grainpipe
