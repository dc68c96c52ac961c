#include "grainpipe/geometry.hpp"

#include <numbers>

#include "grainpipe/detail/linalg.hpp"
#include "grainpipe/errors.hpp"

namespace grainpipe {

double distance(const Point2& a, const Point2& b) { return (a - b).norm(); }

HoughLine HoughLine::normalized(double rho, double theta, int votes) {
    constexpr double pi = std::numbers::pi;
    double t = std::fmod(theta, 2.0 * pi);
    if (t < 0.0)
        t += 2.0 * pi;
    if (t >= pi) {
        t -= pi;
        rho = -rho;
    }
    return HoughLine{rho, t, votes};
}

std::optional<Point2> intersect(const HoughLine& a, const HoughLine& b, double parallel_eps) {
    const double denom = std::sin(b.theta - a.theta);
    if (std::abs(denom) < parallel_eps)
        return std::nullopt;
    const double x = (a.rho * std::sin(b.theta) - b.rho * std::sin(a.theta)) / denom;
    const double y = (b.rho * std::cos(a.theta) - a.rho * std::cos(b.theta)) / denom;
    return Point2{x, y};
}

Affine2D Affine2D::translation(double tx, double ty) {
    Affine2D t;
    t.m = {1.0, 0.0, tx, 0.0, 1.0, ty};
    return t;
}

Affine2D Affine2D::scaling(double sx, double sy) {
    Affine2D t;
    t.m = {sx, 0.0, 0.0, 0.0, sy, 0.0};
    return t;
}

Affine2D Affine2D::similarity(double radians, double scale, const Point2& translate,
                              const Point2& center) {
    const double c = std::cos(radians) * scale;
    const double s = std::sin(radians) * scale;
    Affine2D t;
    // rotate/scale about `center`, then translate
    t.m = {c, -s, center.x - c * center.x + s * center.y + translate.x,
           s, c,  center.y - s * center.x - c * center.y + translate.y};
    return t;
}

Affine2D Affine2D::inverse() const {
    const double d = det();
    if (std::abs(d) <= 1e-9)
        throw GeometryError("affine transform is not invertible (|det| <= 1e-9)");
    const double ia = m[4] / d;
    const double ib = -m[1] / d;
    const double ic = -m[3] / d;
    const double id = m[0] / d;
    Affine2D inv;
    inv.m = {ia, ib, -(ia * m[2] + ib * m[5]), ic, id, -(ic * m[2] + id * m[5])};
    return inv;
}

Affine2D Affine2D::then(const Affine2D& after) const {
    const auto& f = m;
    const auto& g = after.m;
    Affine2D r;
    r.m = {g[0] * f[0] + g[1] * f[3],
           g[0] * f[1] + g[1] * f[4],
           g[0] * f[2] + g[1] * f[5] + g[2],
           g[3] * f[0] + g[4] * f[3],
           g[3] * f[1] + g[4] * f[4],
           g[3] * f[2] + g[4] * f[5] + g[5]};
    return r;
}

std::vector<Point2> apply_affine(const Affine2D& t, const std::vector<Point2>& pts) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts)
        out.push_back(t.apply(p));
    return out;
}

double polygon_area(const std::vector<Point2>& poly) {
    double acc = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    return std::abs(acc) * 0.5;
}

bool point_in_convex_polygon(const Point2& p, const std::vector<Point2>& poly) {
    const std::size_t n = poly.size();
    if (n < 3)
        return false;
    int sign = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if (cross > 1e-12) {
            if (sign < 0)
                return false;
            sign = 1;
        } else if (cross < -1e-12) {
            if (sign > 0)
                return false;
            sign = -1;
        }
    }
    return true;
}

Homography homography_from_points(const std::array<Point2, 4>& src,
                                  const std::array<Point2, 4>& dst) {
    // DLT with h[8] = 1: two rows per correspondence,
    //   u = h0 x + h1 y + h2 - u x h6 - u y h7
    //   v = h3 x + h4 y + h5 - v x h6 - v y h7
    std::array<std::array<double, 9>, 8> m{};
    for (int i = 0; i < 4; ++i) {
        const auto& s = src[static_cast<std::size_t>(i)];
        const auto& d = dst[static_cast<std::size_t>(i)];
        m[static_cast<std::size_t>(2 * i)] = {s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y, d.x};
        m[static_cast<std::size_t>(2 * i + 1)] = {0, 0, 0, s.x, s.y, 1,
                                                  -d.y * s.x, -d.y * s.y, d.y};
    }
    const auto x = detail::solve_linear<8>(m);
    Homography h;
    for (int i = 0; i < 8; ++i) h.h[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    h.h[8] = 1.0;
    return h;
}

} // namespace grainpipe
