#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "grainpipe/detail/linalg.hpp"
#include "grainpipe/errors.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

namespace {

using detail::solve_linear;

Affine2D affine_from_triplet(const Point2& s0, const Point2& s1, const Point2& s2,
                             const Point2& d0, const Point2& d1, const Point2& d2) {
    // Exact fit of [a b tx; c d ty] from three correspondences: one 3x3 solve
    // per output coordinate, shared coefficient matrix.
    auto solve_row = [&](double u0, double u1, double u2) {
        std::array<std::array<double, 4>, 3> m{{{s0.x, s0.y, 1.0, u0},
                                                {s1.x, s1.y, 1.0, u1},
                                                {s2.x, s2.y, 1.0, u2}}};
        return solve_linear<3>(m);
    };
    const auto rx = solve_row(d0.x, d1.x, d2.x);
    const auto ry = solve_row(d0.y, d1.y, d2.y);
    Affine2D t;
    t.m = {rx[0], rx[1], rx[2], ry[0], ry[1], ry[2]};
    return t;
}

std::vector<std::size_t> inliers_of(const Affine2D& t, const std::vector<Point2>& src,
                                    const std::vector<Point2>& dst, double tol) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < src.size(); ++i)
        if (distance(t.apply(src[i]), dst[i]) <= tol) in.push_back(i);
    return in;
}

} // namespace

Affine2D fit_affine_least_squares(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
    if (src.size() != dst.size())
        throw ValueError("fit_affine: src/dst size mismatch");
    if (src.size() < 3)
        throw EstimationError("fit_affine: need at least 3 correspondences, got " +
                              std::to_string(src.size()));

    // Normal equations (A^T A) theta = A^T u with rows [x y 1]; the
    // coefficient matrix is shared between the x and y output rows.
    double sxx = 0, sxy = 0, sx = 0, syy = 0, sy = 0;
    double bux = 0, buy = 0, bu = 0, bvx = 0, bvy = 0, bv = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto& s = src[i];
        const auto& d = dst[i];
        sxx += s.x * s.x;
        sxy += s.x * s.y;
        sx += s.x;
        syy += s.y * s.y;
        sy += s.y;
        bux += s.x * d.x;
        buy += s.y * d.x;
        bu += d.x;
        bvx += s.x * d.y;
        bvy += s.y * d.y;
        bv += d.y;
    }
    const double n = static_cast<double>(src.size());
    const auto rx = solve_linear<3>({{{sxx, sxy, sx, bux}, {sxy, syy, sy, buy}, {sx, sy, n, bu}}});
    const auto ry = solve_linear<3>({{{sxx, sxy, sx, bvx}, {sxy, syy, sy, bvy}, {sx, sy, n, bv}}});
    Affine2D t;
    t.m = {rx[0], rx[1], rx[2], ry[0], ry[1], ry[2]};
    return t;
}

AffineEstimate estimate_affine_ransac(const std::vector<Point2>& src,
                                      const std::vector<Point2>& dst,
                                      const RansacParams& params) {
    if (src.size() != dst.size())
        throw ValueError("estimate_affine_ransac: src/dst size mismatch");
    const std::size_t n = src.size();
    if (n < 3)
        throw EstimationError("estimate_affine_ransac: need at least 3 correspondences, got " +
                              std::to_string(n));

    // Too few points for consensus sampling: least squares plus inlier audit.
    if (n <= 4) {
        AffineEstimate est;
        est.transform = fit_affine_least_squares(src, dst);
        est.inliers = inliers_of(est.transform, src, dst, params.inlier_tol_px);
        if (est.inliers.size() < 3)
            throw EstimationError("estimate_affine_ransac: only " +
                                  std::to_string(est.inliers.size()) +
                                  " of " + std::to_string(n) + " points fit within tolerance");
        return est;
    }

    std::mt19937_64 rng(params.seed);
    auto draw = [&]() { return static_cast<std::size_t>(rng() % n); };

    std::vector<std::size_t> best_inliers;
    for (int iter = 0; iter < params.iterations; ++iter) {
        std::size_t i0 = draw(), i1 = draw(), i2 = draw();
        if (i0 == i1 || i0 == i2 || i1 == i2) continue;
        Affine2D model;
        try {
            model = affine_from_triplet(src[i0], src[i1], src[i2], dst[i0], dst[i1], dst[i2]);
        } catch (const GeometryError&) {
            continue; // collinear sample
        }
        auto in = inliers_of(model, src, dst, params.inlier_tol_px);
        if (in.size() > best_inliers.size()) best_inliers = std::move(in);
    }
    if (best_inliers.size() < 3)
        throw EstimationError("estimate_affine_ransac: no consensus model (best support " +
                              std::to_string(best_inliers.size()) + " of " + std::to_string(n) +
                              ")");

    std::vector<Point2> in_src, in_dst;
    in_src.reserve(best_inliers.size());
    in_dst.reserve(best_inliers.size());
    for (std::size_t i : best_inliers) {
        in_src.push_back(src[i]);
        in_dst.push_back(dst[i]);
    }
    AffineEstimate est;
    est.transform = fit_affine_least_squares(in_src, in_dst);
    est.inliers = inliers_of(est.transform, src, dst, params.inlier_tol_px);
    if (est.inliers.size() < best_inliers.size()) {
        // Refit drifted off the consensus set; keep the sample-model inliers.
        est.inliers = std::move(best_inliers);
    }
    return est;
}

} // namespace grainpipe
