#ifndef GRIDMPC_DISTANCE_MAP_HPP
#define GRIDMPC_DISTANCE_MAP_HPP

#include "gridmpc/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gridmpc {

// Euclidean distance from every cell center to the nearest occupied cell
// center, built with the exact two-pass lower-envelope transform.  Between
// centers the field is sampled bilinearly, which also yields a gradient for
// pushing waypoints away from obstacles.
class DistanceMap {
public:
    static DistanceMap build(const OccupancyGrid &grid) {
        DistanceMap dm;
        dm.rows_ = grid.rows();
        dm.cols_ = grid.cols();
        dm.cell_size_ = grid.cell_size();
        dm.half_extent_ = grid.half_extent();

        const double far = 1e20;
        std::vector<double> sq(static_cast<size_t>(dm.rows_) * dm.cols_);
        dm.any_occupied_ = false;
        for (int r = 0; r < dm.rows_; ++r)
            for (int c = 0; c < dm.cols_; ++c) {
                const bool occ = grid.occupied(r, c);
                dm.any_occupied_ |= occ;
                sq[static_cast<size_t>(r) * dm.cols_ + c] = occ ? 0.0 : far;
            }

        // Vertical pass per column, then horizontal per row (squared units).
        std::vector<double> line(static_cast<size_t>(std::max(dm.rows_, dm.cols_)));
        std::vector<double> out(line.size());
        for (int c = 0; c < dm.cols_; ++c) {
            for (int r = 0; r < dm.rows_; ++r)
                line[static_cast<size_t>(r)] = sq[static_cast<size_t>(r) * dm.cols_ + c];
            transform_1d(line.data(), out.data(), dm.rows_);
            for (int r = 0; r < dm.rows_; ++r)
                sq[static_cast<size_t>(r) * dm.cols_ + c] = out[static_cast<size_t>(r)];
        }
        for (int r = 0; r < dm.rows_; ++r) {
            double *row = sq.data() + static_cast<size_t>(r) * dm.cols_;
            std::copy(row, row + dm.cols_, line.data());
            transform_1d(line.data(), out.data(), dm.cols_);
            std::copy(out.data(), out.data() + dm.cols_, row);
        }

        dm.dist_.resize(sq.size());
        for (size_t i = 0; i < sq.size(); ++i)
            dm.dist_[i] = std::sqrt(sq[i]) * dm.cell_size_;
        return dm;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool any_occupied() const { return any_occupied_; }

    // Distance in meters from the cell center; effectively infinite on a map
    // with no occupied cells.
    double at(int row, int col) const {
        return dist_[static_cast<size_t>(row) * cols_ + col];
    }

    double sample(const Vec2 &p) const {
        double fx, fy;
        int c0, r0;
        locate(p, c0, r0, fx, fy);
        const int c1 = std::min(c0 + 1, cols_ - 1), r1 = std::min(r0 + 1, rows_ - 1);
        return at(r0, c0) * (1.0 - fx) * (1.0 - fy) + at(r0, c1) * fx * (1.0 - fy) +
               at(r1, c0) * (1.0 - fx) * fy + at(r1, c1) * fx * fy;
    }

    // Gradient of the bilinear interpolant; piecewise constant per patch.
    Vec2 gradient(const Vec2 &p) const {
        double fx, fy;
        int c0, r0;
        locate(p, c0, r0, fx, fy);
        const int c1 = std::min(c0 + 1, cols_ - 1), r1 = std::min(r0 + 1, rows_ - 1);
        const double gx =
            ((at(r0, c1) - at(r0, c0)) * (1.0 - fy) + (at(r1, c1) - at(r1, c0)) * fy) /
            cell_size_;
        const double gy =
            ((at(r1, c0) - at(r0, c0)) * (1.0 - fx) + (at(r1, c1) - at(r0, c1)) * fx) /
            cell_size_;
        return Vec2(gx, gy);
    }

private:
    // Lower envelope of parabolas rooted at the input values (squared
    // distances in cell units).
    static void transform_1d(const double *f, double *d, int n) {
        std::vector<int> v(static_cast<size_t>(n));
        std::vector<double> z(static_cast<size_t>(n) + 1);
        int k = 0;
        v[0] = 0;
        z[0] = -1e30;
        z[1] = 1e30;
        for (int q = 1; q < n; ++q) {
            double s;
            for (;;) {
                const int p = v[static_cast<size_t>(k)];
                s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
                if (s > z[static_cast<size_t>(k)]) break;
                --k;
            }
            ++k;
            v[static_cast<size_t>(k)] = q;
            z[static_cast<size_t>(k)] = s;
            z[static_cast<size_t>(k) + 1] = 1e30;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (z[static_cast<size_t>(k) + 1] < q) ++k;
            const int p = v[static_cast<size_t>(k)];
            d[q] = (q - p) * static_cast<double>(q - p) + f[p];
        }
    }

    void locate(const Vec2 &p, int &c0, int &r0, double &fx, double &fy) const {
        const double gx =
            std::clamp((p.x() + half_extent_) / cell_size_ - 0.5, 0.0, cols_ - 1.0);
        const double gy =
            std::clamp((p.y() + half_extent_) / cell_size_ - 0.5, 0.0, rows_ - 1.0);
        c0 = std::min(static_cast<int>(gx), cols_ - 2 >= 0 ? cols_ - 2 : 0);
        r0 = std::min(static_cast<int>(gy), rows_ - 2 >= 0 ? rows_ - 2 : 0);
        fx = gx - c0;
        fy = gy - r0;
    }

    int rows_ = 0, cols_ = 0;
    double cell_size_ = 1.0, half_extent_ = 0.0;
    bool any_occupied_ = false;
    std::vector<double> dist_;
};

}  // namespace gridmpc

#endif  // GRIDMPC_DISTANCE_MAP_HPP
