#ifndef GRIDMPC_PATH_REFERENCE_HPP
#define GRIDMPC_PATH_REFERENCE_HPP

#include "gridmpc/distance_map.hpp"
#include "gridmpc/dynamics.hpp"
#include "gridmpc/grid_map.hpp"
#include "gridmpc/jps.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gridmpc {

// Visits every cell the segment crosses (Amanatides-Woo traversal) and
// requires all of them free.  Exact corner hits step both axes and so check
// both adjacent cells, which errs on the safe side.
inline bool segment_free(const OccupancyGrid &grid, const Vec2 &a, const Vec2 &b) {
    if (!grid.contains(a) || !grid.contains(b)) return false;
    CellIndex cell = grid.point_to_cell(a);
    const CellIndex end = grid.point_to_cell(b);
    if (!grid.free(cell)) return false;

    const Vec2 dir = b - a;
    const double d = grid.cell_size();
    const int step_c = dir.x() > 0.0 ? 1 : -1;
    const int step_r = dir.y() > 0.0 ? 1 : -1;
    const double h = grid.half_extent();

    auto axis_t = [](double origin, double cell_edge, double dir_v) {
        return dir_v != 0.0 ? (cell_edge - origin) / dir_v : kInf;
    };
    double t_max_x = axis_t(a.x(), -h + (cell.col + (step_c > 0 ? 1 : 0)) * d, dir.x());
    double t_max_y = axis_t(a.y(), -h + (cell.row + (step_r > 0 ? 1 : 0)) * d, dir.y());
    const double t_delta_x = dir.x() != 0.0 ? d / std::abs(dir.x()) : kInf;
    const double t_delta_y = dir.y() != 0.0 ? d / std::abs(dir.y()) : kInf;

    const int guard = 2 * (grid.rows() + grid.cols()) + 4;
    for (int i = 0; i < guard; ++i) {
        if (cell == end) return true;
        if (t_max_x <= t_max_y) {
            t_max_x += t_delta_x;
            cell.col += step_c;
        } else {
            t_max_y += t_delta_y;
            cell.row += step_r;
        }
        if (!grid.in_bounds(cell.row, cell.col) || !grid.free(cell)) return false;
    }
    return cell == end;
}

// Moves interior waypoints along the distance-field gradient until they reach
// the requested clearance from occupied cell centers.  Endpoints stay fixed;
// every move is validated to keep the waypoint and its incident segments in
// free cells, and each iteration travels at most one cell size so waypoints
// cannot hop across walls.
inline GridPath push_away(const GridPath &path, const OccupancyGrid &grid, double clearance,
                          int max_iterations = 10) {
    if (path.metric_points.size() <= 2 || clearance <= 0.0) return path;
    const DistanceMap dm = DistanceMap::build(grid);
    if (!dm.any_occupied()) return path;

    GridPath out = path;
    const double d = grid.cell_size();
    for (size_t i = 1; i + 1 < out.metric_points.size(); ++i) {
        Vec2 wp = out.metric_points[i];
        for (int iter = 0; iter < max_iterations; ++iter) {
            const double dist = dm.sample(wp);
            if (dist >= clearance) break;
            const Vec2 g = dm.gradient(wp);
            const double gn = g.norm();
            if (gn < 1e-9) break;
            const double step_len = std::min(clearance - dist, d);
            const Vec2 cand = wp + (g / gn) * step_len;
            if (!grid.contains(cand) || !grid.free(grid.point_to_cell(cand))) break;
            if (!segment_free(grid, out.metric_points[i - 1], cand) ||
                !segment_free(grid, cand, out.metric_points[i + 1]))
                break;
            wp = cand;
        }
        out.metric_points[i] = wp;
        out.cells[i] = grid.point_to_cell(wp);
    }

    // Waypoints no longer sit on cell centers; report the polyline length.
    out.cost = 0.0;
    for (size_t i = 1; i < out.metric_points.size(); ++i)
        out.cost += (out.metric_points[i] - out.metric_points[i - 1]).norm();
    return out;
}

struct ReferenceState {
    Vec2 position{0.0, 0.0};
    double heading = 0.0;
    double speed = 0.0;

    Vec4 vec() const { return Vec4(position.x(), position.y(), heading, speed); }
};

struct ReferenceTrajectory {
    std::vector<ReferenceState> states;  // horizon + 1 entries
    std::vector<Vec2> densified;         // resampled path, kept for diagnostics
};

inline double wrap_to_pi(double angle) { return std::remainder(angle, 2.0 * M_PI); }

// Resamples the path to at most v_ref * dt spacing, walks it from the point
// nearest the current position, and attaches headings from forward
// differences, unwrapped so the sequence stays continuous from the current
// heading.  The reference speed is the waypoint spacing over dt -- v_ref
// while the path lasts, falling to zero where the references clamp at the
// path end, which is what makes the tracker brake into the goal instead of
// orbiting it at its minimum turn radius.
//
// With a positive brake_accel the references also respect the braking
// envelope sqrt(2 * brake_accel * remaining): both the marching pace and the
// speed labels taper toward the path end, so the tracker starts slowing as
// soon as the stopping distance demands it rather than when the path end
// enters its short preview window.
inline ReferenceTrajectory reconstruct(const GridPath &path, const StateVector &current,
                                       double v_ref, double dt, int N,
                                       double brake_accel = 0.0) {
    if (path.metric_points.empty())
        throw std::invalid_argument("reconstruct: path must not be empty");
    if (v_ref <= 0.0 || dt <= 0.0)
        throw std::invalid_argument("reconstruct: v_ref and dt must be positive");
    if (N < 1) throw std::invalid_argument("reconstruct: horizon must be >= 1");
    if (brake_accel < 0.0)
        throw std::invalid_argument("reconstruct: brake accel must be non-negative");

    ReferenceTrajectory ref;
    const double spacing = v_ref * dt;
    auto &dense = ref.densified;
    dense.push_back(path.metric_points.front());
    for (size_t i = 1; i < path.metric_points.size(); ++i) {
        const Vec2 &a = path.metric_points[i - 1];
        const Vec2 &b = path.metric_points[i];
        const double len = (b - a).norm();
        if (len <= 0.0) continue;
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing)));
        for (int j = 1; j <= pieces; ++j)
            dense.push_back(a + (b - a) * (static_cast<double>(j) / pieces));
    }

    size_t start = 0;
    double best = kInf;
    for (size_t i = 0; i < dense.size(); ++i) {
        const double dist2 = (dense[i] - current.position()).squaredNorm();
        if (dist2 < best) {
            best = dist2;
            start = i;
        }
    }

    ref.states.resize(static_cast<size_t>(N) + 1);
    if (brake_accel > 0.0) {
        std::vector<double> arc(dense.size(), 0.0);
        for (size_t i = 1; i < dense.size(); ++i)
            arc[i] = arc[i - 1] + (dense[i] - dense[i - 1]).norm();

        double s = arc[start];
        size_t seg = start;
        for (int k = 0; k <= N; ++k) {
            while (seg + 1 < dense.size() && arc[seg + 1] <= s) ++seg;
            Vec2 p = dense[seg];
            if (seg + 1 < dense.size()) {
                const double len = arc[seg + 1] - arc[seg];
                if (len > 0.0) p += (dense[seg + 1] - dense[seg]) * ((s - arc[seg]) / len);
            }
            const double remaining = std::max(0.0, arc.back() - s);
            const double speed = std::min(v_ref, std::sqrt(2.0 * brake_accel * remaining));
            ref.states[static_cast<size_t>(k)].position = p;
            ref.states[static_cast<size_t>(k)].speed = speed;
            s = std::min(s + speed * dt, arc.back());
        }
    } else {
        for (int k = 0; k <= N; ++k) {
            const size_t idx = std::min(start + static_cast<size_t>(k), dense.size() - 1);
            const size_t next = std::min(idx + 1, dense.size() - 1);
            ref.states[static_cast<size_t>(k)].position = dense[idx];
            ref.states[static_cast<size_t>(k)].speed = (dense[next] - dense[idx]).norm() / dt;
        }
    }

    double prev_heading = current.theta;
    double prev_raw = current.theta;
    for (int k = 0; k <= N; ++k) {
        double raw = prev_raw;
        if (k < N) {
            const Vec2 delta =
                ref.states[static_cast<size_t>(k) + 1].position - ref.states[static_cast<size_t>(k)].position;
            if (delta.norm() > 1e-12) raw = std::atan2(delta.y(), delta.x());
        }
        const double heading = prev_heading + wrap_to_pi(raw - prev_heading);
        ref.states[static_cast<size_t>(k)].heading = heading;
        prev_heading = heading;
        prev_raw = raw;
    }
    return ref;
}

}  // namespace gridmpc

#endif  // GRIDMPC_PATH_REFERENCE_HPP
