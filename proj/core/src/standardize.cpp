#include "grainpipe/standardize.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>

#include "grainpipe/errors.hpp"

namespace grainpipe {

std::size_t RowReferences::find_row(int raw_row) const {
    if (rows.empty()) throw ValueError("row references are empty");
    auto it = std::lower_bound(rows.begin(), rows.end(), raw_row);
    if (it == rows.end()) return rows.size() - 1;
    if (it == rows.begin()) return 0;
    const std::size_t hi = static_cast<std::size_t>(it - rows.begin());
    return (*it - raw_row) < (raw_row - rows[hi - 1]) ? hi : hi - 1;
}

WhiteReferences locate_white_references(const ImageCube& raw) {
    const GrayImage gray = grayscale(raw);
    double threshold;
    try {
        threshold = otsu_threshold(gray);
    } catch (const DetectionError&) {
        throw DetectionError("white references not found: frame has no contrast");
    }
    const BinaryMask fg = binarize(gray, threshold);
    const LabeledRegions regions = connected_components(fg, 8);
    if (regions.count < 2)
        throw DetectionError("white references not found: " + std::to_string(regions.count) +
                             " bright component(s), need 2");
    WhiteReferences refs;
    refs.mask = largest_components(regions, 2);

    refs.bbox = {raw.height, raw.width, -1, -1};
    for (int r = 0; r < raw.height; ++r) {
        for (int c = 0; c < raw.width; ++c) {
            if (!refs.mask.at(r, c)) continue;
            refs.bbox.row0 = std::min(refs.bbox.row0, r);
            refs.bbox.col0 = std::min(refs.bbox.col0, c);
            refs.bbox.row1 = std::max(refs.bbox.row1, r);
            refs.bbox.col1 = std::max(refs.bbox.col1, c);
        }
    }
    return refs;
}

RowReferences build_row_references(const ImageCube& raw, const BinaryMask& white_mask,
                                   const ImageCube* dark_frame) {
    const RowStats white = row_quantile(raw, white_mask, 0.75);
    if (white.rows.empty())
        throw DetectionError("build_row_references: white mask selects no rows");

    RowReferences refs;
    refs.rows = white.rows;
    refs.white = white.values;

    if (dark_frame) {
        if (dark_frame->width != raw.width || dark_frame->channels != raw.channels ||
            dark_frame->height < raw.height)
            throw ValueError("build_row_references: dark frame does not match the raw frame");
        const RowStats dark = row_median(*dark_frame, refs.rows);
        refs.dark = dark.values;
    } else {
        refs.dark.assign(refs.rows.size(),
                         std::vector<double>(static_cast<std::size_t>(raw.channels), 0.0));
    }

    for (std::size_t i = 0; i < refs.rows.size(); ++i) {
        for (int c = 0; c < raw.channels; ++c) {
            if (refs.white[i][static_cast<std::size_t>(c)] <=
                refs.dark[i][static_cast<std::size_t>(c)])
                throw ValueError("invalid references: W <= D at row " +
                                 std::to_string(refs.rows[i]) + ", channel " + std::to_string(c));
        }
    }
    return refs;
}

PlateImage correct_intensity(const ImageCube& raw_crop, const RowReferences& refs,
                             std::pair<int, int> crop_origin, bool clamp01) {
    PlateImage plate;
    plate.cube = ImageCube(raw_crop.height, raw_crop.width, raw_crop.channels, raw_crop.bit_depth,
                           raw_crop.modality, true);
    plate.crop_row = crop_origin.first;
    plate.crop_col = crop_origin.second;

    int missing_rows = 0;
    for (int r = 0; r < raw_crop.height; ++r) {
        const int raw_row = crop_origin.first + r;
        const std::size_t ri = refs.find_row(raw_row);
        if (refs.rows[ri] != raw_row) ++missing_rows;
        const auto& w = refs.white[ri];
        const auto& d = refs.dark[ri];
        for (int k = 0; k < raw_crop.channels; ++k) {
            const double denom = w[static_cast<std::size_t>(k)] - d[static_cast<std::size_t>(k)];
            if (denom <= 0.0)
                throw ValueError("correct_intensity: W <= D at row " + std::to_string(raw_row) +
                                 ", channel " + std::to_string(k));
            for (int c = 0; c < raw_crop.width; ++c) {
                double v = (raw_crop.at(r, c, k) - d[static_cast<std::size_t>(k)]) / denom;
                if (clamp01) v = std::clamp(v, 0.0, 1.0);
                plate.cube.data[plate.cube.index(r, c, k)] = v;
            }
        }
    }
    if (missing_rows > 0)
        std::cerr << "correct_intensity: " << missing_rows
                  << " crop row(s) had no reference; used nearest retained row\n";
    return plate;
}

namespace {

// Checkerboard saddle response: difference between the two diagonal probe
// pairs at offset d. Interior corners respond with twice the square contrast,
// plain edges and outer corners with at most once.
GrayImage saddle_response(const GrayImage& img, int d) {
    GrayImage resp;
    resp.height = img.height;
    resp.width = img.width;
    resp.values.assign(img.values.size(), 0.0);
    for (int r = d; r < img.height - d; ++r) {
        for (int c = d; c < img.width - d; ++c) {
            const double main_diag = img.at(r - d, c - d) + img.at(r + d, c + d);
            const double anti_diag = img.at(r - d, c + d) + img.at(r + d, c - d);
            resp.values[static_cast<std::size_t>(r) * img.width + c] =
                std::abs(main_diag - anti_diag);
        }
    }
    return resp;
}

// Subpixel corner position: critical point of the local quadratic fit of the
// smoothed intensity (checker corners are intensity saddles).
Point2 refine_saddle(const GrayImage& img, int r, int c) {
    const Point2 integer_pos{static_cast<double>(c), static_cast<double>(r)};
    if (r < 1 || r >= img.height - 1 || c < 1 || c >= img.width - 1) return integer_pos;
    auto v = [&](int dr, int dc) { return img.at(r + dr, c + dc); };
    const double gx = (v(0, 1) - v(0, -1)) / 2.0;
    const double gy = (v(1, 0) - v(-1, 0)) / 2.0;
    const double hxx = v(0, 1) - 2.0 * v(0, 0) + v(0, -1);
    const double hyy = v(1, 0) - 2.0 * v(0, 0) + v(-1, 0);
    const double hxy = (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / 4.0;
    const double det = hxx * hyy - hxy * hxy;
    if (std::abs(det) < 1e-12) return integer_pos;
    const double dx = (-gx * hyy + gy * hxy) / det;
    const double dy = (gx * hxy - gy * hxx) / det;
    if (std::abs(dx) > 1.5 || std::abs(dy) > 1.5) return integer_pos;
    return {c + dx, r + dy};
}

struct Cluster {
    std::vector<Point2> points;
};

std::vector<Cluster> link_clusters(const std::vector<Point2>& points, double radius) {
    std::vector<int> parent(points.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            parent[static_cast<std::size_t>(i)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if (distance(points[i], points[j]) <= radius)
                parent[static_cast<std::size_t>(find(static_cast<int>(j)))] =
                    find(static_cast<int>(i));

    std::vector<Cluster> clusters;
    std::vector<int> root_to_cluster(points.size(), -1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const int root = find(static_cast<int>(i));
        if (root_to_cluster[static_cast<std::size_t>(root)] < 0) {
            root_to_cluster[static_cast<std::size_t>(root)] = static_cast<int>(clusters.size());
            clusters.emplace_back();
        }
        clusters[static_cast<std::size_t>(root_to_cluster[static_cast<std::size_t>(root)])]
            .points.push_back(points[i]);
    }
    return clusters;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Arrange a cluster into a (k x k) lattice and validate spacing regularity.
std::optional<Chessboard> validate_lattice(const Cluster& cluster, int k,
                                           const ChessboardParams& params) {
    if (static_cast<int>(cluster.points.size()) != k * k) return std::nullopt;

    std::vector<Point2> pts = cluster.points;
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.y < b.y; });
    for (int row = 0; row < k; ++row) {
        std::sort(pts.begin() + static_cast<std::ptrdiff_t>(row) * k,
                  pts.begin() + static_cast<std::ptrdiff_t>(row + 1) * k,
                  [](const Point2& a, const Point2& b) { return a.x < b.x; });
    }

    const double lo = params.min_size_factor * params.square_size_hint_px;
    const double hi = params.max_size_factor * params.square_size_hint_px;
    std::vector<double> h_spacings, v_spacings;
    for (int row = 0; row < k; ++row) {
        for (int col = 0; col + 1 < k; ++col)
            h_spacings.push_back(
                distance(pts[static_cast<std::size_t>(row * k + col)],
                         pts[static_cast<std::size_t>(row * k + col + 1)]));
    }
    for (int row = 0; row + 1 < k; ++row) {
        for (int col = 0; col < k; ++col)
            v_spacings.push_back(
                distance(pts[static_cast<std::size_t>(row * k + col)],
                         pts[static_cast<std::size_t>((row + 1) * k + col)]));
    }
    auto regular = [&](const std::vector<double>& s) {
        const double med = median_of(s);
        if (med < lo || med > hi) return false;
        for (double d : s)
            if (std::abs(d - med) > 0.2 * med) return false;
        return true;
    };
    if (k > 1 && (!regular(h_spacings) || !regular(v_spacings))) return std::nullopt;

    Chessboard board;
    board.corners = std::move(pts);
    Point2 sum{0, 0};
    for (const auto& p : board.corners) sum = sum + p;
    board.center = sum * (1.0 / static_cast<double>(board.corners.size()));
    board.square_width = k > 1 ? median_of(h_spacings) : params.square_size_hint_px;
    board.square_height = k > 1 ? median_of(v_spacings) : params.square_size_hint_px;
    return board;
}

} // namespace

std::vector<Chessboard> find_chessboards(const GrayImage& gray, const ChessboardParams& params) {
    if (params.pattern < 2) throw ValueError("find_chessboards: pattern must be >= 2");
    const GrayImage smooth = gaussian_smooth(gray, params.smooth_sigma);
    const int d = std::max(2, static_cast<int>(std::lround(params.square_size_hint_px / 3.0)));
    const GrayImage resp = saddle_response(smooth, d);

    const double max_resp = *std::max_element(resp.values.begin(), resp.values.end());
    if (max_resp <= 0.0) return {};
    const double threshold = params.response_ratio * max_resp;

    // Thresholded local maxima of the response map, then subpixel refinement
    // on the smoothed intensity.
    std::vector<Point2> corners;
    for (int r = 0; r < resp.height; ++r) {
        for (int c = 0; c < resp.width; ++c) {
            const double v = resp.at(r, c);
            if (v < threshold) continue;
            bool is_max = true;
            for (int dr = -d; dr <= d && is_max; ++dr) {
                for (int dc = -d; dc <= d && is_max; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= resp.height || cc < 0 || cc >= resp.width) continue;
                    const double other = resp.at(rr, cc);
                    if (other > v) is_max = false;
                    if (other == v && (dr < 0 || (dr == 0 && dc < 0))) is_max = false;
                }
            }
            if (is_max) corners.push_back(refine_saddle(smooth, r, c));
        }
    }

    const double link_radius = params.link_radius_factor * params.square_size_hint_px;
    const int k = params.pattern - 1;
    std::vector<Chessboard> boards;
    for (const auto& cluster : link_clusters(corners, link_radius)) {
        if (auto board = validate_lattice(cluster, k, params)) boards.push_back(std::move(*board));
    }
    std::sort(boards.begin(), boards.end(), [](const Chessboard& a, const Chessboard& b) {
        if (a.center.y != b.center.y) return a.center.y < b.center.y;
        return a.center.x < b.center.x;
    });
    return boards;
}

std::vector<Chessboard> detect_chessboards(const PlateImage& plate,
                                           const ChessboardParams& params) {
    auto boards = find_chessboards(grayscale(plate.cube), params);
    if (boards.size() != 4)
        throw DetectionError("chessboard detection found " + std::to_string(boards.size()) +
                             " board(s), expected 4");
    return boards;
}

double estimate_size_factor(const std::vector<Chessboard>& boards) {
    if (boards.empty()) throw ValueError("estimate_size_factor: no boards");
    double w = 0.0, h = 0.0;
    for (const auto& b : boards) {
        w += b.square_width;
        h += b.square_height;
    }
    return h / w;
}

Chessboard rescale_chessboard(const Chessboard& board, double factor) {
    Chessboard out = board;
    for (auto& p : out.corners) p.x = resize_dst_x(p.x, factor);
    out.center.x = resize_dst_x(board.center.x, factor);
    out.square_width = board.square_width * factor;
    return out;
}

PlateImage size_correct(const PlateImage& plate, const std::vector<Chessboard>& boards) {
    double factor = estimate_size_factor(boards);
    // Allow a hair of measurement noise around an already-square plate, but
    // refuse a genuine horizontal up-scale.
    if (factor > 1.02)
        throw GeometryError("size_correct: squares taller than wide (factor " +
                            std::to_string(factor) + "); refusing to upscale");
    factor = std::min(factor, 1.0);

    PlateImage out;
    out.cube = bilinear_resize_horizontal(plate.cube, factor);
    out.crop_row = plate.crop_row;
    out.crop_col = plate.crop_col;
    out.size_factor = plate.size_factor * factor;
    return out;
}

StandardizedFrame standardize_frame(const ImageCube& raw, const ImageCube* dark_frame,
                                    const ChessboardParams& params) {
    const WhiteReferences white = locate_white_references(raw);
    const RowReferences refs = build_row_references(raw, white.mask, dark_frame);
    const ImageCube raw_crop = crop(raw, white.bbox);
    PlateImage plate = correct_intensity(raw_crop, refs, {white.bbox.row0, white.bbox.col0});

    const auto boards = detect_chessboards(plate, params);
    const double factor = std::min(estimate_size_factor(boards), 1.0);

    StandardizedFrame frame;
    frame.plate = size_correct(plate, boards);
    frame.boards.reserve(boards.size());
    for (const auto& b : boards) frame.boards.push_back(rescale_chessboard(b, factor));
    frame.refs = refs;
    return frame;
}

} // namespace grainpipe
