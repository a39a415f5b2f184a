#ifndef GRIDMPC_JPS_HPP
#define GRIDMPC_JPS_HPP

#include "gridmpc/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

namespace gridmpc {

// Grid path as an ordered run of cells; metric_points holds the matching cell
// centers.  Cost is the octile length: straight moves cost one cell size,
// diagonal moves sqrt(2) times that.
struct GridPath {
    std::vector<CellIndex> cells;
    std::vector<Vec2> metric_points;
    double cost = 0.0;
};

enum class PlanStatus { Success, StartUnsnappable, GoalUnsnappable, NoPath };

struct PlanResult {
    PlanStatus status = PlanStatus::NoPath;
    GridPath path;

    bool ok() const { return status == PlanStatus::Success; }
};

inline const char *to_string(PlanStatus status) {
    switch (status) {
        case PlanStatus::Success:
            return "success";
        case PlanStatus::StartUnsnappable:
            return "start not snappable to a free cell";
        case PlanStatus::GoalUnsnappable:
            return "goal not snappable to a free cell";
        case PlanStatus::NoPath:
            return "no path";
    }
    return "unknown";
}

// Nearest free cell center within a square window of the given cell radius;
// ties resolve to the lexicographically smallest (row, col).
inline std::optional<CellIndex> snap_to_free(const OccupancyGrid &grid, const Vec2 &p,
                                             int radius = 5) {
    const double h = grid.half_extent();
    const Vec2 clamped(std::clamp(p.x(), -h, h), std::clamp(p.y(), -h, h));
    const CellIndex base = grid.point_to_cell(clamped);
    std::optional<CellIndex> best;
    double best_d2 = kInf;
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            const CellIndex cand{base.row + dr, base.col + dc};
            if (!grid.in_bounds(cand.row, cand.col) || !grid.free(cand)) continue;
            const double d2 = (grid.center_of(cand) - p).squaredNorm();
            if (d2 < best_d2 || (d2 == best_d2 && best && cand < *best)) {
                best_d2 = d2;
                best = cand;
            }
        }
    }
    return best;
}

namespace detail {

constexpr double kSqrt2 = 1.4142135623730951;

// Jump point search over an 8-connected grid where diagonal moves require
// both adjacent orthogonal cells free (no corner cutting).  Under that rule
// only straight moves can have forced neighbors, which sit behind the blocked
// cell diagonally trailing the move direction.
class JpsSearch {
public:
    explicit JpsSearch(const OccupancyGrid &grid, CellIndex start, CellIndex goal)
        : grid_(grid),
          cols_(grid.cols()),
          start_(flat(start.row, start.col)),
          goal_(flat(goal.row, goal.col)),
          goal_cell_(goal) {
        const size_t n = static_cast<size_t>(grid.rows()) * grid.cols();
        g_.assign(n, kInf);
        parent_.assign(n, -1);
        closed_.assign(n, 0);
    }

    // Runs the search; returns true when the goal was reached.
    bool run() {
        g_[static_cast<size_t>(start_)] = 0.0;
        push(start_, heuristic(start_));
        while (!open_.empty()) {
            const Node top = open_.top();
            open_.pop();
            const size_t idx = static_cast<size_t>(top.idx);
            if (closed_[idx] || top.g != g_[idx]) continue;
            closed_[idx] = 1;
            if (top.idx == goal_) return true;
            expand(top.idx);
        }
        return false;
    }

    // Optimal goal-to-start jump point chain, reversed to run start to goal.
    std::vector<CellIndex> jump_points() const {
        std::vector<CellIndex> chain;
        for (int idx = goal_; idx != -1; idx = parent_[static_cast<size_t>(idx)])
            chain.push_back(cell(idx));
        std::reverse(chain.begin(), chain.end());
        return chain;
    }

    double goal_cost_cells() const { return g_[static_cast<size_t>(goal_)]; }

private:
    struct Node {
        double f, g;
        int idx;
    };
    struct NodeOrder {
        // Smaller f wins, then larger g, then lexicographic (row, col) which
        // matches flat row-major order.
        bool operator()(const Node &a, const Node &b) const {
            if (a.f != b.f) return a.f > b.f;
            if (a.g != b.g) return a.g < b.g;
            return a.idx > b.idx;
        }
    };

    int flat(int r, int c) const { return r * cols_ + c; }
    CellIndex cell(int idx) const { return CellIndex{idx / cols_, idx % cols_}; }

    bool walkable(int r, int c) const { return grid_.in_bounds(r, c) && grid_.free(r, c); }

    bool diag_ok(int r, int c, int dr, int dc) const {
        return walkable(r + dr, c + dc) && walkable(r + dr, c) && walkable(r, c + dc);
    }

    double heuristic(int idx) const {
        const CellIndex a = cell(idx);
        const double dr = std::abs(a.row - goal_cell_.row);
        const double dc = std::abs(a.col - goal_cell_.col);
        return dr + dc + (kSqrt2 - 2.0) * std::min(dr, dc);
    }

    void push(int idx, double f) {
        open_.push(Node{f, g_[static_cast<size_t>(idx)], idx});
    }

    void relax(int from, int to, double step_cost) {
        const double cand = g_[static_cast<size_t>(from)] + step_cost;
        if (cand < g_[static_cast<size_t>(to)]) {
            g_[static_cast<size_t>(to)] = cand;
            parent_[static_cast<size_t>(to)] = from;
            push(to, cand + heuristic(to));
        }
    }

    // True when continuing straight through (r, c) in direction d exposes a
    // neighbor reachable only via this node: the diagonally trailing cell on
    // one side is blocked while the side cell itself is free.
    bool forced_straight(int r, int c, int dr, int dc) const {
        if (dr == 0) {
            return (!walkable(r - 1, c - dc) && walkable(r - 1, c)) ||
                   (!walkable(r + 1, c - dc) && walkable(r + 1, c));
        }
        return (!walkable(r - dr, c - 1) && walkable(r, c - 1)) ||
               (!walkable(r - dr, c + 1) && walkable(r, c + 1));
    }

    // Walks straight from (r, c); returns the flat index of the next jump
    // point (goal or forced-neighbor node) or -1 at a dead end.
    int jump_straight(int r, int c, int dr, int dc) const {
        for (;;) {
            r += dr;
            c += dc;
            if (!walkable(r, c)) return -1;
            const int idx = flat(r, c);
            if (idx == goal_) return idx;
            if (forced_straight(r, c, dr, dc)) return idx;
        }
    }

    // Walks diagonally; a node is a jump point when a straight probe in
    // either component direction finds one.
    int jump_diag(int r, int c, int dr, int dc) const {
        for (;;) {
            if (!diag_ok(r, c, dr, dc)) return -1;
            r += dr;
            c += dc;
            const int idx = flat(r, c);
            if (idx == goal_) return idx;
            if (jump_straight(r, c, dr, 0) != -1) return idx;
            if (jump_straight(r, c, 0, dc) != -1) return idx;
        }
    }

    double octile(CellIndex a, CellIndex b) const {
        const double dr = std::abs(a.row - b.row);
        const double dc = std::abs(a.col - b.col);
        return dr + dc + (kSqrt2 - 2.0) * std::min(dr, dc);
    }

    void probe_straight(int idx, int dr, int dc) {
        const CellIndex n = cell(idx);
        const int jp = jump_straight(n.row, n.col, dr, dc);
        if (jp != -1) relax(idx, jp, octile(n, cell(jp)));
    }

    void probe_diag(int idx, int dr, int dc) {
        const CellIndex n = cell(idx);
        const int jp = jump_diag(n.row, n.col, dr, dc);
        if (jp != -1) relax(idx, jp, octile(n, cell(jp)));
    }

    void expand(int idx) {
        const CellIndex n = cell(idx);
        const int p = parent_[static_cast<size_t>(idx)];
        if (p == -1) {
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    if (dr != 0 && dc != 0)
                        probe_diag(idx, dr, dc);
                    else
                        probe_straight(idx, dr, dc);
                }
            }
            return;
        }
        const CellIndex pc = cell(p);
        const int dr = (n.row > pc.row) - (n.row < pc.row);
        const int dc = (n.col > pc.col) - (n.col < pc.col);
        if (dr != 0 && dc != 0) {
            probe_straight(idx, dr, 0);
            probe_straight(idx, 0, dc);
            probe_diag(idx, dr, dc);
            return;
        }
        probe_straight(idx, dr, dc);
        // Forced turns: continue around the blocked trailing cell, both
        // straight to the side and diagonally forward.
        if (dr == 0) {
            for (int side : {-1, 1}) {
                if (!walkable(n.row + side, n.col - dc) && walkable(n.row + side, n.col)) {
                    probe_straight(idx, side, 0);
                    probe_diag(idx, side, dc);
                }
            }
        } else {
            for (int side : {-1, 1}) {
                if (!walkable(n.row - dr, n.col + side) && walkable(n.row, n.col + side)) {
                    probe_straight(idx, 0, side);
                    probe_diag(idx, dr, side);
                }
            }
        }
    }

    const OccupancyGrid &grid_;
    int cols_;
    int start_;
    int goal_;
    CellIndex goal_cell_;
    std::vector<double> g_;
    std::vector<int> parent_;
    std::vector<uint8_t> closed_;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open_;
};

}  // namespace detail

// Shortest grid path between the free cells nearest to the metric start and
// goal.  The result lists every cell along the path, not only the turning
// points, so downstream smoothing sees a dense waypoint sequence.
inline PlanResult plan_path(const OccupancyGrid &grid, const Vec2 &start, const Vec2 &goal,
                            int snap_radius = 5) {
    PlanResult result;
    const std::optional<CellIndex> s = snap_to_free(grid, start, snap_radius);
    if (!s) {
        result.status = PlanStatus::StartUnsnappable;
        return result;
    }
    const std::optional<CellIndex> t = snap_to_free(grid, goal, snap_radius);
    if (!t) {
        result.status = PlanStatus::GoalUnsnappable;
        return result;
    }

    if (*s == *t) {
        result.status = PlanStatus::Success;
        result.path.cells = {*s};
        result.path.metric_points = {grid.center_of(*s)};
        result.path.cost = 0.0;
        return result;
    }

    detail::JpsSearch search(grid, *s, *t);
    if (!search.run()) {
        result.status = PlanStatus::NoPath;
        return result;
    }

    // Expand the jump point chain into the full cell run.
    const std::vector<CellIndex> chain = search.jump_points();
    GridPath &path = result.path;
    path.cells.push_back(chain.front());
    for (size_t i = 1; i < chain.size(); ++i) {
        CellIndex cur = path.cells.back();
        const CellIndex next = chain[i];
        while (!(cur == next)) {
            cur.row += (next.row > cur.row) - (next.row < cur.row);
            cur.col += (next.col > cur.col) - (next.col < cur.col);
            path.cells.push_back(cur);
        }
    }
    path.metric_points.reserve(path.cells.size());
    for (const CellIndex &c : path.cells) path.metric_points.push_back(grid.center_of(c));
    path.cost = search.goal_cost_cells() * grid.cell_size();
    result.status = PlanStatus::Success;
    return result;
}

// Octile move counts of a dense cell run; useful for exact cost comparisons
// since a length s + sqrt(2) k determines (s, k) uniquely.
struct MoveCounts {
    long straight = 0;
    long diagonal = 0;

    double length_cells() const { return straight + detail::kSqrt2 * diagonal; }
};

inline MoveCounts count_moves(const std::vector<CellIndex> &cells) {
    MoveCounts counts;
    for (size_t i = 1; i < cells.size(); ++i) {
        const int dr = std::abs(cells[i].row - cells[i - 1].row);
        const int dc = std::abs(cells[i].col - cells[i - 1].col);
        counts.diagonal += std::min(dr, dc);
        counts.straight += std::max(dr, dc) - std::min(dr, dc);
    }
    return counts;
}

}  // namespace gridmpc

#endif  // GRIDMPC_JPS_HPP
