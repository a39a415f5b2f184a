#ifndef GRIDMPC_GRID_MAP_HPP
#define GRIDMPC_GRID_MAP_HPP

#include "gridmpc/geometry.hpp"
#include "gridmpc/obstacles.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridmpc {

enum class CellClass : uint8_t { Free = 0, PartiallyOccupied = 1, FullyOccupied = 2 };

struct CellIndex {
    int row = 0;
    int col = 0;

    bool operator==(const CellIndex &) const = default;
    // Lexicographic order used for deterministic tie-breaking.
    bool operator<(const CellIndex &o) const {
        return row != o.row ? row < o.row : col < o.col;
    }
};

// Square map of side 2 * half_extent split into cells_per_side cells per axis.
struct GridParams {
    double half_extent = 50.0;
    int cells_per_side = 240;

    double cell_size() const { return 2.0 * half_extent / cells_per_side; }

    static GridParams from_cell_size(double half_extent, double cell_size) {
        if (half_extent <= 0.0 || cell_size <= 0.0)
            throw std::invalid_argument("grid: half_extent and cell_size must be positive");
        const double n = 2.0 * half_extent / cell_size;
        const double rounded = std::round(n);
        if (rounded < 1.0 || std::abs(n - rounded) > 1e-9 * std::max(1.0, n))
            throw std::invalid_argument("grid: cell_size must divide the map side evenly");
        GridParams p;
        p.half_extent = half_extent;
        p.cells_per_side = static_cast<int>(rounded);
        return p;
    }

    void validate() const {
        if (half_extent <= 0.0) throw std::invalid_argument("grid: half_extent must be positive");
        if (cells_per_side < 1) throw std::invalid_argument("grid: cells_per_side must be >= 1");
    }
};

// Center of the cell addressed by signed nonzero indices.  Index i covers
// x in [(i-1)*d, i*d] for i > 0 and [i*d, (i+1)*d] for i < 0; index zero does
// not name a cell.
inline Vec2 cell_center(int i, int j, double cell_size) {
    if (i == 0 || j == 0) throw std::invalid_argument("cell_center: index zero is not a cell");
    auto coord = [cell_size](int k) {
        const double s = k > 0 ? 1.0 : -1.0;
        return (std::abs(k) - 0.5) * cell_size * s;
    };
    return Vec2(coord(i), coord(j));
}

// Conversion between the signed axis index and the zero-based internal index
// (internal index 0 sits at the -half_extent edge).
inline int signed_to_internal(int signed_index, int cells_per_side) {
    if (signed_index == 0) throw std::invalid_argument("signed index zero is not a cell");
    const int half = cells_per_side / 2;
    const int internal = signed_index < 0 ? signed_index + half : signed_index + half - 1;
    if (internal < 0 || internal >= cells_per_side)
        throw std::out_of_range("signed index outside map bounds");
    return internal;
}

inline int internal_to_signed(int internal_index, int cells_per_side) {
    const int half = cells_per_side / 2;
    if (internal_index < 0 || internal_index >= cells_per_side)
        throw std::out_of_range("internal index outside map bounds");
    return internal_index < half ? internal_index - half : internal_index - half + 1;
}

// Occupancy map over a square region.  Internal row 0 sits at minimum y and
// column 0 at minimum x; rows index y, columns index x.
class OccupancyGrid {
public:
    OccupancyGrid() = default;

    explicit OccupancyGrid(const GridParams &params)
        : params_(params),
          cells_(static_cast<size_t>(params.cells_per_side) * params.cells_per_side,
                 CellClass::Free) {
        params_.validate();
    }

    // Builds a grid from a row-major occupied mask and classifies occupied
    // cells into partially and fully occupied.
    static OccupancyGrid from_occupancy_mask(const GridParams &params,
                                             const std::vector<uint8_t> &occupied_mask) {
        OccupancyGrid grid(params);
        const size_t expected =
            static_cast<size_t>(params.cells_per_side) * params.cells_per_side;
        if (occupied_mask.size() != expected)
            throw std::invalid_argument("occupancy mask size does not match grid");
        for (size_t i = 0; i < expected; ++i)
            grid.cells_[i] = occupied_mask[i] ? CellClass::PartiallyOccupied : CellClass::Free;
        grid.reclassify();
        return grid;
    }

    int rows() const { return params_.cells_per_side; }
    int cols() const { return params_.cells_per_side; }
    double cell_size() const { return params_.cell_size(); }
    double half_extent() const { return params_.half_extent; }
    const GridParams &params() const { return params_; }

    bool in_bounds(int row, int col) const {
        return row >= 0 && row < rows() && col >= 0 && col < cols();
    }

    CellClass at(int row, int col) const { return cells_[index(row, col)]; }
    CellClass at(const CellIndex &c) const { return at(c.row, c.col); }

    bool occupied(int row, int col) const { return at(row, col) != CellClass::Free; }
    bool free(int row, int col) const { return at(row, col) == CellClass::Free; }
    bool free(const CellIndex &c) const { return free(c.row, c.col); }

    void set(int row, int col, CellClass value) { cells_[index(row, col)] = value; }

    Vec2 center_of(int row, int col) const {
        if (!in_bounds(row, col)) throw std::out_of_range("cell index outside map bounds");
        const double d = cell_size();
        return Vec2(-params_.half_extent + (col + 0.5) * d,
                    -params_.half_extent + (row + 0.5) * d);
    }
    Vec2 center_of(const CellIndex &c) const { return center_of(c.row, c.col); }

    // Cell containing a metric point; the closed upper boundary maps into the
    // last cell so the whole square [-H, H]^2 is covered.
    CellIndex point_to_cell(const Vec2 &p) const {
        const double h = params_.half_extent;
        if (p.x() < -h || p.x() > h || p.y() < -h || p.y() > h)
            throw std::out_of_range("point outside map bounds");
        const double d = cell_size();
        auto to_axis = [&](double v) {
            int k = static_cast<int>(std::floor((v + h) / d));
            return std::min(std::max(k, 0), params_.cells_per_side - 1);
        };
        return CellIndex{to_axis(p.y()), to_axis(p.x())};
    }

    bool contains(const Vec2 &p) const {
        const double h = params_.half_extent;
        return p.x() >= -h && p.x() <= h && p.y() >= -h && p.y() <= h;
    }

    // Metric bounds [lo, hi) of a cell square.
    Aabb cell_bounds(int row, int col) const {
        const double d = cell_size();
        Aabb box;
        box.lo = Vec2(-params_.half_extent + col * d, -params_.half_extent + row * d);
        box.hi = box.lo + Vec2(d, d);
        return box;
    }

    // Occupied cells with every existing 8-neighbor occupied become fully
    // occupied, occupied cells with at least one free neighbor partially
    // occupied.  Idempotent.
    void reclassify() {
        const int n = params_.cells_per_side;
        std::vector<CellClass> out(cells_.size());
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (!occupied(r, c)) {
                    out[index(r, c)] = CellClass::Free;
                    continue;
                }
                bool interior = true;
                for (int dr = -1; dr <= 1 && interior; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (!in_bounds(rr, cc)) continue;  // missing neighbors do not count
                        if (!occupied(rr, cc)) {
                            interior = false;
                            break;
                        }
                    }
                }
                out[index(r, c)] =
                    interior ? CellClass::FullyOccupied : CellClass::PartiallyOccupied;
            }
        }
        cells_ = std::move(out);
    }

    // Rows printed top-down: first output row is the maximum-y row.
    std::string ascii() const {
        std::string out;
        out.reserve(static_cast<size_t>(rows()) * (cols() + 1));
        for (int r = rows() - 1; r >= 0; --r) {
            for (int c = 0; c < cols(); ++c) {
                switch (at(r, c)) {
                    case CellClass::Free:
                        out.push_back('.');
                        break;
                    case CellClass::PartiallyOccupied:
                        out.push_back('o');
                        break;
                    case CellClass::FullyOccupied:
                        out.push_back('#');
                        break;
                }
            }
            out.push_back('\n');
        }
        return out;
    }

    bool operator==(const OccupancyGrid &o) const {
        return params_.half_extent == o.params_.half_extent &&
               params_.cells_per_side == o.params_.cells_per_side && cells_ == o.cells_;
    }

private:
    size_t index(int row, int col) const {
        if (!in_bounds(row, col)) throw std::out_of_range("cell index outside map bounds");
        return static_cast<size_t>(row) * cols() + col;
    }

    GridParams params_;
    std::vector<CellClass> cells_;
};

namespace detail {

// True when the shape, grown by inflate_by, overlaps the cell square with
// positive area; mere boundary contact does not occupy a cell.
inline bool cell_hit(const OccupancyGrid &grid, int row, int col, const ObstacleShape &shape,
                     const std::vector<ConvexPolygon> &parts, const Vec2 &circle_center,
                     double inflate_by) {
    const Aabb bounds = grid.cell_bounds(row, col);
    if (shape.kind == ObstacleShape::Kind::Circle) {
        ConvexPolygon cell;
        cell.pts = {bounds.lo, Vec2(bounds.hi.x(), bounds.lo.y()), bounds.hi,
                    Vec2(bounds.lo.x(), bounds.hi.y())};
        return point_polygon_distance(circle_center, cell) < shape.radius + inflate_by;
    }
    ConvexPolygon cell;
    cell.pts = {bounds.lo, Vec2(bounds.hi.x(), bounds.lo.y()), bounds.hi,
                Vec2(bounds.lo.x(), bounds.hi.y())};
    for (const ConvexPolygon &part : parts) {
        if (inflate_by > 0.0) {
            if (polygon_distance(cell, part) < inflate_by) return true;
        } else {
            if (convex_overlap(cell, part) > 0.0) return true;
        }
    }
    return false;
}

}  // namespace detail

// Occupancy map of all shapes at absolute time step * dt, each shape grown by
// inflate_by (the planning robot radius).
inline OccupancyGrid rasterize(std::span<const ObstacleShape> shapes, int step, double dt,
                               double inflate_by, const GridParams &params) {
    if (inflate_by < 0.0) throw std::invalid_argument("rasterize: inflate_by must be >= 0");
    if (step < 0) throw std::invalid_argument("rasterize: step must be >= 0");
    OccupancyGrid grid(params);
    const double time_s = step * dt;
    const double d = params.cell_size();
    const double h = params.half_extent;
    for (const ObstacleShape &shape : shapes) {
        shape.validate();
        const Vec2 c = shape.center_at(time_s);
        const std::vector<ConvexPolygon> parts = shape.convex_parts_at(time_s);
        Aabb box;
        if (shape.kind == ObstacleShape::Kind::Circle) {
            box.expand(c);
            box.pad(shape.radius);
        } else {
            for (const ConvexPolygon &part : parts)
                for (const Vec2 &p : part.pts) box.expand(p);
        }
        box.pad(inflate_by);
        const int col_lo = std::max(0, static_cast<int>(std::floor((box.lo.x() + h) / d)));
        const int col_hi = std::min(params.cells_per_side - 1,
                                    static_cast<int>(std::floor((box.hi.x() + h) / d)));
        const int row_lo = std::max(0, static_cast<int>(std::floor((box.lo.y() + h) / d)));
        const int row_hi = std::min(params.cells_per_side - 1,
                                    static_cast<int>(std::floor((box.hi.y() + h) / d)));
        for (int r = row_lo; r <= row_hi; ++r)
            for (int cidx = col_lo; cidx <= col_hi; ++cidx)
                if (!grid.occupied(r, cidx) &&
                    detail::cell_hit(grid, r, cidx, shape, parts, c, inflate_by))
                    grid.set(r, cidx, CellClass::PartiallyOccupied);
    }
    grid.reclassify();
    return grid;
}

// Maps for steps t .. t+N assuming obstacles keep their current velocities.
inline std::vector<OccupancyGrid> predict_maps(std::span<const ObstacleShape> shapes, int t,
                                               int N, double dt, double inflate_by,
                                               const GridParams &params) {
    if (N < 1) throw std::invalid_argument("predict_maps: horizon must be >= 1");
    std::vector<OccupancyGrid> maps;
    maps.reserve(static_cast<size_t>(N) + 1);
    for (int k = 0; k <= N; ++k) maps.push_back(rasterize(shapes, t + k, dt, inflate_by, params));
    return maps;
}

// Shared source of occupancy maps keyed by absolute step.  Maps are cached so
// the horizon windows of consecutive control steps only rasterize once per
// new step; for a fully static world a single map serves every step.
class MapProvider {
public:
    MapProvider(std::vector<ObstacleShape> shapes, const GridParams &params, double dt,
                double inflate_by)
        : shapes_(std::move(shapes)), params_(params), dt_(dt), inflate_by_(inflate_by) {
        params_.validate();
        if (dt <= 0.0) throw std::invalid_argument("map provider: dt must be positive");
        static_ = true;
        for (const ObstacleShape &s : shapes_) {
            s.validate();
            if (s.linear_velocity.squaredNorm() > 0.0 || s.angular_velocity != 0.0)
                static_ = false;
        }
    }

    const OccupancyGrid &map_at(int step) {
        const int key = static_ ? 0 : step;
        auto it = cache_.find(key);
        if (it == cache_.end())
            it = cache_.emplace(key, rasterize(shapes_, key, dt_, inflate_by_, params_)).first;
        return it->second;
    }

    // Drops cached maps older than the given step to bound memory use.
    void prune_below(int step) {
        if (static_) return;
        cache_.erase(cache_.begin(), cache_.lower_bound(step));
    }

    const std::vector<ObstacleShape> &shapes() const { return shapes_; }
    const GridParams &params() const { return params_; }
    double dt() const { return dt_; }
    double inflation() const { return inflate_by_; }

private:
    std::vector<ObstacleShape> shapes_;
    GridParams params_;
    double dt_ = 0.01;
    double inflate_by_ = 0.0;
    bool static_ = true;
    std::map<int, OccupancyGrid> cache_;
};

}  // namespace gridmpc

#endif  // GRIDMPC_GRID_MAP_HPP
