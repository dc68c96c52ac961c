#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace grainpipe {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
    Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
    Point2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Point2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

double distance(const Point2& a, const Point2& b);

/// Line in normal form: x*cos(theta) + y*sin(theta) = rho, theta in [0, pi).
struct HoughLine {
    double rho = 0.0;   // signed pixels
    double theta = 0.0; // radians in [0, pi)
    int votes = 0;

    /// Wraps theta into [0, pi), negating rho when flipping by pi.
    static HoughLine normalized(double rho, double theta, int votes = 0);

    /// Signed distance from a point to the line.
    double signed_distance(const Point2& p) const {
        return p.x * std::cos(theta) + p.y * std::sin(theta) - rho;
    }
};

/// Intersection of two lines; empty when |sin(dtheta)| < parallel_eps.
std::optional<Point2> intersect(const HoughLine& a, const HoughLine& b,
                                double parallel_eps = 1e-6);

struct Circle {
    Point2 center;
    double radius = 0.0;
    int votes = 0;
};

/// 2x3 planar affine transform; m maps (x, y, 1) -> (x', y').
struct Affine2D {
    // Row-major: [ a b tx ; c d ty ]
    std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

    static Affine2D identity() { return {}; }
    static Affine2D translation(double tx, double ty);
    static Affine2D scaling(double sx, double sy);
    /// Rotation by `radians` about `center`, then scale, then translate.
    static Affine2D similarity(double radians, double scale, const Point2& translate,
                               const Point2& center = {0.0, 0.0});

    Point2 apply(const Point2& p) const {
        return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
    }

    double det() const { return m[0] * m[4] - m[1] * m[3]; }

    /// Throws GeometryError when |det| <= 1e-9.
    Affine2D inverse() const;

    /// Returns the transform equivalent to applying *this first, then `after`.
    Affine2D then(const Affine2D& after) const;
};

std::vector<Point2> apply_affine(const Affine2D& t, const std::vector<Point2>& pts);

/// Area of a simple polygon (shoelace, absolute value).
double polygon_area(const std::vector<Point2>& poly);

/// Point-in-convex-polygon test (vertices in consistent winding order).
bool point_in_convex_polygon(const Point2& p, const std::vector<Point2>& poly);

/// Plane projective transform, row-major 3x3 with h[8] fixed to 1.
struct Homography {
    std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Point2 apply(const Point2& p) const {
        const double w = h[6] * p.x + h[7] * p.y + h[8];
        return {(h[0] * p.x + h[1] * p.y + h[2]) / w, (h[3] * p.x + h[4] * p.y + h[5]) / w};
    }
};

/// Exact 4-point homography src -> dst. Throws GeometryError on degenerate
/// configurations (e.g. three collinear points).
Homography homography_from_points(const std::array<Point2, 4>& src,
                                  const std::array<Point2, 4>& dst);

} // namespace grainpipe
