#ifndef GRIDMPC_SAFE_POLYTOPE_HPP
#define GRIDMPC_SAFE_POLYTOPE_HPP

#include "gridmpc/geometry.hpp"
#include "gridmpc/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gridmpc {

enum class EdgeSource : uint8_t { ObstacleCell, DetectionBoxEdge };

// One face of a safe region: h(p) = normal . p + offset, with the unit
// normal pointing into the safe side so h > 0 means clear of the face.
struct HalfPlane {
    Vec2 normal = Vec2::Zero();
    double offset = 0.0;
    EdgeSource source = EdgeSource::DetectionBoxEdge;
    int cell_row = -1;  // generator cell when source is ObstacleCell
    int cell_col = -1;

    double value(const Vec2 &p) const { return normal.dot(p) + offset; }
};

// Convex safe region around a nominal position: the intersection of the
// obstacle separating edges and the four detection box faces.
struct SafePolytope {
    std::vector<HalfPlane> edges;
    Vec2 nominal = Vec2::Zero();
    double detection_half_side = 0.0;

    // Corner points of the region, counter-clockwise around the nominal.
    std::vector<Vec2> vertices() const {
        std::vector<Vec2> pts;
        const int n = static_cast<int>(edges.size());
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const Vec2 &a = edges[i].normal;
                const Vec2 &b = edges[j].normal;
                const double det = a.x() * b.y() - a.y() * b.x();
                if (std::abs(det) <= 1e-12) continue;
                const double oi = edges[i].offset, oj = edges[j].offset;
                const Vec2 p((-oi * b.y() + oj * a.y()) / det,
                             (-a.x() * oj + b.x() * oi) / det);
                bool inside = true;
                for (const HalfPlane &e : edges) {
                    if (e.value(p) < -1e-7) {
                        inside = false;
                        break;
                    }
                }
                if (!inside) continue;
                bool dupe = false;
                for (const Vec2 &q : pts) {
                    if ((q - p).norm() <= 1e-9) {
                        dupe = true;
                        break;
                    }
                }
                if (!dupe) pts.push_back(p);
            }
        }
        std::sort(pts.begin(), pts.end(), [&](const Vec2 &u, const Vec2 &v) {
            return std::atan2(u.y() - nominal.y(), u.x() - nominal.x()) <
                   std::atan2(v.y() - nominal.y(), v.x() - nominal.x());
        });
        return pts;
    }
};

// Carves a convex free region around `nominal` out of the occupancy grid.
// Occupied cell centers inside the detection box are separated one at a
// time, closest first; each separating line discards every center it
// already shields, so the loop touches each candidate once.  Returns
// nothing when the nominal is outside the map or inside an occupied cell.
inline std::optional<SafePolytope> extract_polytope(const OccupancyGrid &grid,
                                                    const Vec2 &nominal,
                                                    double half_side) {
    if (half_side <= 0.0)
        throw std::invalid_argument("polytope: detection half side must be positive");
    if (!grid.contains(nominal)) return std::nullopt;
    const CellIndex home = grid.point_to_cell(nominal);
    if (grid.occupied(home.row, home.col)) return std::nullopt;

    struct Candidate {
        Vec2 center;
        int row, col;
    };
    std::vector<Candidate> candidates;
    const double d = grid.cell_size();
    const double h = grid.half_extent();
    auto axis_range = [&](double lo, double hi, int &first, int &last) {
        first = std::max(0, static_cast<int>(std::floor((lo + h) / d - 0.5)));
        last = std::min(grid.rows() - 1, static_cast<int>(std::ceil((hi + h) / d)));
    };
    int r0, r1, c0, c1;
    axis_range(nominal.y() - half_side, nominal.y() + half_side, r0, r1);
    axis_range(nominal.x() - half_side, nominal.x() + half_side, c0, c1);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (!grid.occupied(r, c)) continue;
            const Vec2 center = grid.center_of(r, c);
            if (std::abs(center.x() - nominal.x()) > half_side) continue;
            if (std::abs(center.y() - nominal.y()) > half_side) continue;
            candidates.push_back({center, r, c});
        }
    }

    SafePolytope poly;
    poly.nominal = nominal;
    poly.detection_half_side = half_side;

    while (!candidates.empty()) {
        size_t best = 0;
        double best_d2 = kInf;
        for (size_t i = 0; i < candidates.size(); ++i) {
            const double d2 = (candidates[i].center - nominal).squaredNorm();
            const bool closer =
                d2 < best_d2 ||
                (d2 == best_d2 &&
                 CellIndex{candidates[i].row, candidates[i].col} <
                     CellIndex{candidates[best].row, candidates[best].col});
            if (closer) {
                best = i;
                best_d2 = d2;
            }
        }
        const Candidate c = candidates[best];
        HalfPlane edge;
        edge.normal = (nominal - c.center).normalized();
        edge.offset = -edge.normal.dot(c.center);
        edge.source = EdgeSource::ObstacleCell;
        edge.cell_row = c.row;
        edge.cell_col = c.col;
        poly.edges.push_back(edge);
        // The generator sits exactly on the line; the tolerance keeps
        // rounding from re-admitting it.
        std::erase_if(candidates, [&](const Candidate &q) {
            return edge.value(q.center) <= 1e-9;
        });
    }

    auto box_edge = [&](const Vec2 &normal) {
        HalfPlane edge;
        edge.normal = normal;
        edge.offset = half_side - normal.dot(nominal);
        edge.source = EdgeSource::DetectionBoxEdge;
        poly.edges.push_back(edge);
    };
    box_edge(Vec2(1.0, 0.0));
    box_edge(Vec2(-1.0, 0.0));
    box_edge(Vec2(0.0, 1.0));
    box_edge(Vec2(0.0, -1.0));
    return poly;
}

// One linear safety row tied to a polytope edge at a horizon step:
//   normal . p_k + slack_coeff * omega >= rhs
// where omega is the per-row relaxation variable.  With omega pinned at 1
// the row enforces h(p_k) >= (1 - gamma)^k h(p_0).
struct CbfConstraintRow {
    int step = 0;
    int edge = 0;
    Vec2 position_coeff = Vec2::Zero();
    double slack_coeff = 0.0;
    double rhs = 0.0;
};

struct CompiledCbf {
    std::vector<CbfConstraintRow> rows;
    int dropped_edges = 0;  // edges the initial position already violates
};

inline void compile_step_constraints(const SafePolytope &poly,
                                     const Vec2 &initial_position, double gamma,
                                     int step, CompiledCbf &out) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::invalid_argument("cbf: decay rate must lie in (0, 1]");
    if (step < 1) throw std::invalid_argument("cbf: constraints start at step 1");
    const double factor = std::pow(1.0 - gamma, step);
    for (size_t e = 0; e < poly.edges.size(); ++e) {
        const double psi0 = poly.edges[e].value(initial_position);
        // A non-positive start value cannot seed the decay chain; the edge
        // is skipped and reported so the caller can track how often.
        if (psi0 <= 0.0) {
            ++out.dropped_edges;
            continue;
        }
        CbfConstraintRow row;
        row.step = step;
        row.edge = static_cast<int>(e);
        row.position_coeff = poly.edges[e].normal;
        row.slack_coeff = -factor * psi0;
        row.rhs = -poly.edges[e].offset;
        out.rows.push_back(row);
    }
}

// Compiles rows for steps 1..polytopes.size(), in step order; polytopes[i]
// is the safe region carved around the nominal position at step i + 1.
inline CompiledCbf compile_constraints(const std::vector<SafePolytope> &polytopes,
                                       const Vec2 &initial_position,
                                       double gamma) {
    CompiledCbf out;
    for (size_t i = 0; i < polytopes.size(); ++i) {
        compile_step_constraints(polytopes[i], initial_position, gamma,
                                 static_cast<int>(i) + 1, out);
    }
    return out;
}

}  // namespace gridmpc

#endif
