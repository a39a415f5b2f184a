#ifndef GRIDMPC_GEOMETRY_HPP
#define GRIDMPC_GEOMETRY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gridmpc {

using Vec2 = Eigen::Vector2d;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Convex polygon with vertices in counter-clockwise order.
struct ConvexPolygon {
    std::vector<Vec2> pts;

    int size() const { return static_cast<int>(pts.size()); }
    const Vec2 &operator[](int i) const { return pts[static_cast<size_t>(i)]; }
};

struct Aabb {
    Vec2 lo{kInf, kInf};
    Vec2 hi{-kInf, -kInf};

    void expand(const Vec2 &p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void pad(double r) {
        lo.array() -= r;
        hi.array() += r;
    }
};

inline Aabb bounding_box(const ConvexPolygon &poly) {
    Aabb box;
    for (const Vec2 &p : poly.pts) box.expand(p);
    return box;
}

inline Vec2 rotate(const Vec2 &p, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return Vec2(c * p.x() - s * p.y(), s * p.x() + c * p.y());
}

// Axis-aligned rectangle of the given side lengths, rotated about its center.
inline ConvexPolygon make_rectangle(const Vec2 &center, double len_x, double len_y,
                                    double angle = 0.0) {
    if (len_x <= 0.0 || len_y <= 0.0)
        throw std::invalid_argument("make_rectangle: side lengths must be positive");
    const double hx = 0.5 * len_x, hy = 0.5 * len_y;
    ConvexPolygon poly;
    poly.pts = {center + rotate({hx, hy}, angle), center + rotate({-hx, hy}, angle),
                center + rotate({-hx, -hy}, angle), center + rotate({hx, -hy}, angle)};
    return poly;
}

inline ConvexPolygon make_square(const Vec2 &center, double side, double angle = 0.0) {
    return make_rectangle(center, side, side, angle);
}

// Equilateral triangle with the given side length, one vertex pointing along
// +y when angle = 0.
inline ConvexPolygon make_equilateral_triangle(const Vec2 &center, double side,
                                               double angle = 0.0) {
    if (side <= 0.0)
        throw std::invalid_argument("make_equilateral_triangle: side must be positive");
    const double circumradius = side / std::sqrt(3.0);
    ConvexPolygon poly;
    poly.pts.reserve(3);
    for (int k = 0; k < 3; ++k) {
        const double a = angle + 0.5 * M_PI + 2.0 * M_PI * k / 3.0;
        poly.pts.push_back(center + circumradius * Vec2(std::cos(a), std::sin(a)));
    }
    return poly;
}

inline double point_segment_distance(const Vec2 &p, const Vec2 &a, const Vec2 &b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0.0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

inline double segment_segment_distance(const Vec2 &a0, const Vec2 &a1, const Vec2 &b0,
                                       const Vec2 &b1) {
    // Proper crossing test via orientation signs; endpoints otherwise dominate.
    auto cross = [](const Vec2 &u, const Vec2 &v) { return u.x() * v.y() - u.y() * v.x(); };
    const Vec2 da = a1 - a0, db = b1 - b0;
    const double d1 = cross(db, a0 - b0);
    const double d2 = cross(db, a1 - b0);
    const double d3 = cross(da, b0 - a0);
    const double d4 = cross(da, b1 - a0);
    if (((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) &&
        ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)))
        return 0.0;
    return std::min(std::min(point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1)),
                    std::min(point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)));
}

// Signed distance of p to the polygon boundary: negative magnitude is not
// tracked, inside simply reports zero.
inline double point_polygon_distance(const Vec2 &p, const ConvexPolygon &poly) {
    const int n = poly.size();
    if (n == 0) return kInf;
    if (n == 1) return (p - poly[0]).norm();
    bool inside = true;
    double best = kInf;
    for (int i = 0; i < n; ++i) {
        const Vec2 &a = poly[i];
        const Vec2 &b = poly[(i + 1) % n];
        const Vec2 e = b - a;
        if (e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()) < 0.0) inside = false;
        best = std::min(best, point_segment_distance(p, a, b));
    }
    return inside ? 0.0 : best;
}

// Minimum separating-axis overlap of two convex polygons.  Positive means the
// interiors intersect, zero or negative means touching or separated.
inline double convex_overlap(const ConvexPolygon &a, const ConvexPolygon &b) {
    double min_overlap = kInf;
    auto test_axes = [&](const ConvexPolygon &src) {
        const int n = src.size();
        for (int i = 0; i < n; ++i) {
            const Vec2 e = src[(i + 1) % n] - src[i];
            Vec2 axis(-e.y(), e.x());
            const double len = axis.norm();
            if (len <= 0.0) continue;
            axis /= len;
            double a_lo = kInf, a_hi = -kInf, b_lo = kInf, b_hi = -kInf;
            for (const Vec2 &p : a.pts) {
                const double v = axis.dot(p);
                a_lo = std::min(a_lo, v);
                a_hi = std::max(a_hi, v);
            }
            for (const Vec2 &p : b.pts) {
                const double v = axis.dot(p);
                b_lo = std::min(b_lo, v);
                b_hi = std::max(b_hi, v);
            }
            min_overlap = std::min(min_overlap, std::min(a_hi - b_lo, b_hi - a_lo));
            if (min_overlap <= 0.0) return;
        }
    };
    test_axes(a);
    if (min_overlap > 0.0) test_axes(b);
    return min_overlap;
}

inline bool polygons_intersect(const ConvexPolygon &a, const ConvexPolygon &b) {
    return convex_overlap(a, b) > 0.0;
}

// Euclidean distance between two convex polygons, zero when they overlap.
inline double polygon_distance(const ConvexPolygon &a, const ConvexPolygon &b) {
    if (convex_overlap(a, b) >= 0.0) return 0.0;
    double best = kInf;
    const int na = a.size(), nb = b.size();
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j)
            best = std::min(best, segment_segment_distance(a[i], a[(i + 1) % na], b[j],
                                                           b[(j + 1) % nb]));
    return best;
}

}  // namespace gridmpc

#endif  // GRIDMPC_GEOMETRY_HPP
