#ifndef GRIDMPC_OBSTACLES_HPP
#define GRIDMPC_OBSTACLES_HPP

#include "gridmpc/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridmpc {

// Rigid obstacle moving with constant linear and angular velocity.  Poses are
// always derived in closed form from the initial pose so that maps predicted
// for the same absolute time are identical no matter when they are requested.
struct ObstacleShape {
    enum class Kind { Square, Triangle, Circle, Fan };

    Kind kind = Kind::Square;
    double side = 0.0;          // squares and triangles
    double radius = 0.0;        // circles
    int blade_count = 0;        // fans
    double blade_length = 0.0;  // fans, hub to tip
    double blade_width = 0.0;   // fans

    Vec2 center{0.0, 0.0};
    double rotation = 0.0;
    Vec2 linear_velocity{0.0, 0.0};
    double angular_velocity = 0.0;

    static ObstacleShape square(double side) {
        ObstacleShape s;
        s.kind = Kind::Square;
        s.side = side;
        s.validate();
        return s;
    }
    static ObstacleShape triangle(double side) {
        ObstacleShape s;
        s.kind = Kind::Triangle;
        s.side = side;
        s.validate();
        return s;
    }
    static ObstacleShape circle(double radius) {
        ObstacleShape s;
        s.kind = Kind::Circle;
        s.radius = radius;
        s.validate();
        return s;
    }
    static ObstacleShape fan(int blades, double length, double width) {
        ObstacleShape s;
        s.kind = Kind::Fan;
        s.blade_count = blades;
        s.blade_length = length;
        s.blade_width = width;
        s.validate();
        return s;
    }

    void validate() const {
        switch (kind) {
            case Kind::Square:
            case Kind::Triangle:
                if (side <= 0.0) throw std::invalid_argument("obstacle: side must be positive");
                break;
            case Kind::Circle:
                if (radius <= 0.0)
                    throw std::invalid_argument("obstacle: radius must be positive");
                break;
            case Kind::Fan:
                if (blade_count < 3 || blade_count > 5)
                    throw std::invalid_argument("obstacle: fan blade count must be 3, 4 or 5");
                if (blade_length <= 0.0 || blade_width <= 0.0)
                    throw std::invalid_argument("obstacle: fan blade dimensions must be positive");
                break;
        }
    }

    Vec2 center_at(double time_s) const { return center + time_s * linear_velocity; }
    double rotation_at(double time_s) const { return rotation + time_s * angular_velocity; }

    // Upper bound on the distance from the center to any boundary point.
    double circumradius() const {
        switch (kind) {
            case Kind::Square:
                return side * std::sqrt(0.5);
            case Kind::Triangle:
                return side / std::sqrt(3.0);
            case Kind::Circle:
                return radius;
            case Kind::Fan:
                return std::hypot(blade_length, 0.5 * blade_width);
        }
        return 0.0;
    }

    // Convex decomposition at a given time; empty for circles, which are
    // handled analytically by callers.
    std::vector<ConvexPolygon> convex_parts_at(double time_s) const {
        const Vec2 c = center_at(time_s);
        const double rot = rotation_at(time_s);
        std::vector<ConvexPolygon> parts;
        switch (kind) {
            case Kind::Square:
                parts.push_back(make_square(c, side, rot));
                break;
            case Kind::Triangle:
                parts.push_back(make_equilateral_triangle(c, side, rot));
                break;
            case Kind::Circle:
                break;
            case Kind::Fan:
                // Each blade is a rectangle with one short edge at the hub.
                parts.reserve(static_cast<size_t>(blade_count));
                for (int k = 0; k < blade_count; ++k) {
                    const double a = rot + 2.0 * M_PI * k / blade_count;
                    const Vec2 blade_center = c + rotate({0.5 * blade_length, 0.0}, a);
                    parts.push_back(make_rectangle(blade_center, blade_length, blade_width, a));
                }
                break;
        }
        return parts;
    }

    // Euclidean distance from a point to the shape at the given time; zero
    // inside the shape.
    double distance_to_point(const Vec2 &p, double time_s) const {
        if (kind == Kind::Circle)
            return std::max(0.0, (p - center_at(time_s)).norm() - radius);
        double best = kInf;
        for (const ConvexPolygon &part : convex_parts_at(time_s))
            best = std::min(best, point_polygon_distance(p, part));
        return best;
    }
};

inline std::string to_string(ObstacleShape::Kind kind) {
    switch (kind) {
        case ObstacleShape::Kind::Square:
            return "square";
        case ObstacleShape::Kind::Triangle:
            return "triangle";
        case ObstacleShape::Kind::Circle:
            return "circle";
        case ObstacleShape::Kind::Fan:
            return "fan";
    }
    return "unknown";
}

}  // namespace gridmpc

#endif  // GRIDMPC_OBSTACLES_HPP
