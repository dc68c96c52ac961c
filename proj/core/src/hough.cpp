#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "grainpipe/errors.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

std::vector<HoughLine> hough_lines(const BinaryMask& edges, const LineHoughParams& params) {
    const double diag = std::hypot(edges.width, edges.height);
    const int n_rho = 2 * static_cast<int>(std::ceil(diag / params.rho_step)) + 1;
    const int rho_offset = n_rho / 2;
    const double theta_step = params.theta_step_deg * M_PI / 180.0;
    const int n_theta = static_cast<int>(std::round(M_PI / theta_step));

    std::vector<double> cos_t(static_cast<std::size_t>(n_theta));
    std::vector<double> sin_t(static_cast<std::size_t>(n_theta));
    for (int t = 0; t < n_theta; ++t) {
        cos_t[static_cast<std::size_t>(t)] = std::cos(t * theta_step);
        sin_t[static_cast<std::size_t>(t)] = std::sin(t * theta_step);
    }

    std::vector<int> acc(static_cast<std::size_t>(n_rho) * n_theta, 0);
    for (int r = 0; r < edges.height; ++r) {
        for (int c = 0; c < edges.width; ++c) {
            if (!edges.at(r, c)) continue;
            for (int t = 0; t < n_theta; ++t) {
                const double rho = c * cos_t[static_cast<std::size_t>(t)] +
                                   r * sin_t[static_cast<std::size_t>(t)];
                const int rb = static_cast<int>(std::lround(rho / params.rho_step)) + rho_offset;
                if (rb >= 0 && rb < n_rho)
                    ++acc[static_cast<std::size_t>(rb) * n_theta + t];
            }
        }
    }

    const int peak = *std::max_element(acc.begin(), acc.end());
    const int threshold = std::max(params.min_votes,
                                   static_cast<int>(std::ceil(params.vote_ratio * peak)));

    // Local maxima in a (rho, theta) window; theta wraps with rho mirrored.
    auto vote_at = [&](int rb, int tb) -> int {
        if (tb < 0 || tb >= n_theta) {
            tb = tb < 0 ? tb + n_theta : tb - n_theta;
            rb = 2 * rho_offset - rb;
        }
        if (rb < 0 || rb >= n_rho) return 0;
        return acc[static_cast<std::size_t>(rb) * n_theta + tb];
    };

    std::vector<HoughLine> lines;
    for (int rb = 0; rb < n_rho; ++rb) {
        for (int tb = 0; tb < n_theta; ++tb) {
            const int votes = acc[static_cast<std::size_t>(rb) * n_theta + tb];
            if (votes < threshold) continue;
            bool is_max = true;
            for (int dr = -params.nms_rho_bins; dr <= params.nms_rho_bins && is_max; ++dr) {
                for (int dt = -params.nms_theta_bins; dt <= params.nms_theta_bins && is_max; ++dt) {
                    if (dr == 0 && dt == 0) continue;
                    const int other = vote_at(rb + dr, tb + dt);
                    if (other > votes) is_max = false;
                    // Equal-vote plateau: keep only the lexicographically first bin.
                    if (other == votes && (dr < 0 || (dr == 0 && dt < 0))) is_max = false;
                }
            }
            if (!is_max) continue;
            lines.push_back(HoughLine{(rb - rho_offset) * params.rho_step, tb * theta_step, votes});
        }
    }
    std::stable_sort(lines.begin(), lines.end(),
                     [](const HoughLine& a, const HoughLine& b) { return a.votes > b.votes; });
    if (static_cast<int>(lines.size()) > params.max_lines)
        lines.resize(static_cast<std::size_t>(params.max_lines));
    return lines;
}

std::vector<HoughLine> average_similar_lines(const std::vector<HoughLine>& lines,
                                             double rho_tol, double theta_tol_deg) {
    const double theta_tol = theta_tol_deg * M_PI / 180.0;
    std::vector<int> cluster(lines.size(), -1);
    int n_clusters = 0;

    // Compare b against cluster representative a, handling the theta wrap
    // (theta + pi describes the same undirected line with rho negated).
    auto similar = [&](const HoughLine& a, const HoughLine& b) {
        double dt = b.theta - a.theta;
        double rho_b = b.rho;
        if (dt > M_PI / 2) { dt -= M_PI; rho_b = -rho_b; }
        if (dt < -M_PI / 2) { dt += M_PI; rho_b = -rho_b; }
        return std::abs(dt) <= theta_tol && std::abs(rho_b - a.rho) <= rho_tol;
    };

    std::vector<HoughLine> reps;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        for (std::size_t k = 0; k < reps.size(); ++k) {
            if (similar(reps[k], lines[i])) {
                cluster[i] = static_cast<int>(k);
                break;
            }
        }
        if (cluster[i] < 0) {
            cluster[i] = n_clusters++;
            reps.push_back(lines[i]);
        }
    }

    std::vector<HoughLine> merged;
    for (int k = 0; k < n_clusters; ++k) {
        double rho_sum = 0.0, theta_sum = 0.0;
        int votes = 0, n = 0;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (cluster[i] != k) continue;
            double theta = lines[i].theta, rho = lines[i].rho;
            double dt = theta - reps[static_cast<std::size_t>(k)].theta;
            if (dt > M_PI / 2) { theta -= M_PI; rho = -rho; }
            if (dt < -M_PI / 2) { theta += M_PI; rho = -rho; }
            rho_sum += rho;
            theta_sum += theta;
            votes += lines[i].votes;
            ++n;
        }
        merged.push_back(HoughLine::normalized(rho_sum / n, theta_sum / n, votes));
    }
    std::stable_sort(merged.begin(), merged.end(),
                     [](const HoughLine& a, const HoughLine& b) { return a.votes > b.votes; });
    return merged;
}

std::vector<Point2> line_intersections(const std::vector<HoughLine>& lines, int width, int height) {
    std::vector<Point2> points;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            const auto p = intersect(lines[i], lines[j]);
            if (!p) continue;
            if (p->x >= 0 && p->x < width && p->y >= 0 && p->y < height)
                points.push_back(*p);
        }
    }
    return points;
}

std::vector<Circle> hough_circles(const BinaryMask& edges, const GrayImage& gradient_source,
                                  double r_min, double r_max, const CircleHoughParams& params) {
    if (edges.height != gradient_source.height || edges.width != gradient_source.width)
        throw ValueError("hough_circles: edge mask and gradient source differ in size");
    if (!(r_min > 0) || !(r_max > r_min))
        throw ValueError("hough_circles: need 0 < r_min < r_max");

    const Gradients g = sobel_gradients(gradient_source);
    const int h = edges.height, w = edges.width;
    std::vector<int> acc(static_cast<std::size_t>(h) * w, 0);

    // Each edge pixel votes along +/- gradient direction; circle centers
    // accumulate votes from the whole rim.
    struct EdgePix { int r, c; double nx, ny; };
    std::vector<EdgePix> pix;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!edges.at(r, c)) continue;
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            const double m = g.magnitude.values[i];
            if (m <= 0) continue;
            pix.push_back({r, c, g.gx.values[i] / m, g.gy.values[i] / m});
        }
    }

    const int ri_min = static_cast<int>(std::floor(r_min));
    const int ri_max = static_cast<int>(std::ceil(r_max));
    for (const auto& p : pix) {
        for (int sign = -1; sign <= 1; sign += 2) {
            for (int rad = ri_min; rad <= ri_max; ++rad) {
                const int cx = static_cast<int>(std::lround(p.c + sign * rad * p.nx));
                const int cy = static_cast<int>(std::lround(p.r + sign * rad * p.ny));
                if (cx < 0 || cx >= w || cy < 0 || cy >= h) continue;
                ++acc[static_cast<std::size_t>(cy) * w + cx];
            }
        }
    }

    const int peak = *std::max_element(acc.begin(), acc.end());
    if (peak == 0) return {};
    const int threshold = std::max(1, static_cast<int>(std::ceil(params.vote_ratio * peak)));

    // Candidate centers: thresholded local maxima, strongest first, spaced by
    // min_center_distance.
    struct Cand { int votes, r, c; };
    std::vector<Cand> cands;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int votes = acc[static_cast<std::size_t>(r) * w + c];
            if (votes < threshold) continue;
            cands.push_back({votes, r, c});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.votes != b.votes) return a.votes > b.votes;
        if (a.r != b.r) return a.r < b.r;
        return a.c < b.c;
    });

    std::vector<Circle> circles;
    for (const auto& cand : cands) {
        if (static_cast<int>(circles.size()) >= params.max_candidates) break;
        bool close = false;
        for (const auto& c : circles) {
            if (distance(c.center, Point2{static_cast<double>(cand.c), static_cast<double>(cand.r)}) <
                params.min_center_distance) {
                close = true;
                break;
            }
        }
        if (close) continue;

        // Radius = mode of edge-pixel distances from the candidate center.
        std::vector<int> rad_hist(static_cast<std::size_t>(ri_max) + 2, 0);
        for (const auto& p : pix) {
            const double d = std::hypot(p.c - cand.c, p.r - cand.r);
            const int rb = static_cast<int>(std::lround(d));
            if (rb >= ri_min && rb <= ri_max) ++rad_hist[static_cast<std::size_t>(rb)];
        }
        int best_rad = ri_min, best_count = -1;
        for (int rad = ri_min; rad <= ri_max; ++rad) {
            if (rad_hist[static_cast<std::size_t>(rad)] > best_count) {
                best_count = rad_hist[static_cast<std::size_t>(rad)];
                best_rad = rad;
            }
        }
        // Refine: centroid of distances within +/-2 px of the mode.
        double dsum = 0.0;
        int dcount = 0;
        for (const auto& p : pix) {
            const double d = std::hypot(p.c - cand.c, p.r - cand.r);
            if (std::abs(d - best_rad) <= 2.0) {
                dsum += d;
                ++dcount;
            }
        }
        const double radius = dcount > 0 ? dsum / dcount : best_rad;
        circles.push_back(Circle{Point2{static_cast<double>(cand.c), static_cast<double>(cand.r)},
                                 radius, cand.votes});
    }
    return circles;
}

Circle select_dish_circle(const std::vector<Circle>& circles, const RadiusBand& band,
                          int image_height, const Point2& image_center) {
    const double r_lo = band.min_frac * image_height;
    const double r_hi = band.max_frac * image_height;
    const Circle* best = nullptr;
    double best_dist = 0.0;
    for (const auto& c : circles) {
        if (c.radius < r_lo || c.radius > r_hi) continue;
        const double d = distance(c.center, image_center);
        if (!best || d < best_dist) {
            best = &c;
            best_dist = d;
        }
    }
    if (!best)
        throw DetectionError("select_dish_circle: no circle with radius in [" +
                             std::to_string(r_lo) + ", " + std::to_string(r_hi) + "]");
    return *best;
}

} // namespace grainpipe
