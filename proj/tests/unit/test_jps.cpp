#include "gridmpc/jps.hpp"

#include "support/dijkstra_oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace gridmpc;
using gridmpc_tests::dijkstra_cost;
using gridmpc_tests::MovePair;
using gridmpc_tests::pair_equal;

namespace {

OccupancyGrid grid_from_rows(const std::vector<std::string> &rows_top_down, double half_extent) {
    const int n = static_cast<int>(rows_top_down.size());
    GridParams params;
    params.half_extent = half_extent;
    params.cells_per_side = n;
    std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
    for (int top = 0; top < n; ++top) {
        REQUIRE(static_cast<int>(rows_top_down[static_cast<size_t>(top)].size()) == n);
        const int r = n - 1 - top;  // first string row is the maximum-y row
        for (int c = 0; c < n; ++c)
            mask[static_cast<size_t>(r) * n + c] =
                rows_top_down[static_cast<size_t>(top)][static_cast<size_t>(c)] != '.';
    }
    return OccupancyGrid::from_occupancy_mask(params, mask);
}

OccupancyGrid random_grid(std::mt19937_64 &rng, int n, double occupancy) {
    GridParams params;
    params.half_extent = n / 2.0;
    params.cells_per_side = n;  // d = 1
    std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
    for (auto &m : mask) m = ((rng() >> 11) * 0x1.0p-53) < occupancy;
    return OccupancyGrid::from_occupancy_mask(params, mask);
}

}  // namespace

TEST_CASE("straight corridor costs its cell count", "[jps]") {
    const OccupancyGrid grid = grid_from_rows(
        {
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
            "............",
        },
        6.0);
    // Ten straight moves east between two centers on the same row.
    const Vec2 start = grid.center_of(6, 0);
    const Vec2 goal = grid.center_of(6, 10);
    const PlanResult res = plan_path(grid, start, goal);
    REQUIRE(res.ok());
    CHECK(res.path.cost == Catch::Approx(10.0).margin(1e-12));
    CHECK(res.path.cells.size() == 11);
    CHECK(res.path.cells.front() == CellIndex{6, 0});
    CHECK(res.path.cells.back() == CellIndex{6, 10});
    const MoveCounts counts = count_moves(res.path.cells);
    CHECK(counts.straight == 10);
    CHECK(counts.diagonal == 0);
}

TEST_CASE("diagonal runs cost sqrt(2) per move", "[jps]") {
    GridParams params;
    params.half_extent = 8.0;
    params.cells_per_side = 16;
    const OccupancyGrid grid(params);
    const PlanResult res = plan_path(grid, grid.center_of(2, 2), grid.center_of(12, 12));
    REQUIRE(res.ok());
    CHECK(res.path.cost == Catch::Approx(10.0 * std::sqrt(2.0)).margin(1e-9));
    const MoveCounts counts = count_moves(res.path.cells);
    CHECK(counts.straight == 0);
    CHECK(counts.diagonal == 10);
}

TEST_CASE("paths never cut corners", "[jps]") {
    std::mt19937_64 rng(2024);
    int planned = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const OccupancyGrid grid = random_grid(rng, 32, 0.25);
        const PlanResult res =
            plan_path(grid, grid.center_of(1, 1), grid.center_of(30, 30), 3);
        if (!res.ok()) continue;
        ++planned;
        const auto &cells = res.path.cells;
        for (size_t i = 1; i < cells.size(); ++i) {
            const int dr = cells[i].row - cells[i - 1].row;
            const int dc = cells[i].col - cells[i - 1].col;
            REQUIRE(std::abs(dr) <= 1);
            REQUIRE(std::abs(dc) <= 1);
            REQUIRE((dr != 0 || dc != 0));
            REQUIRE(grid.free(cells[i]));
            if (dr != 0 && dc != 0) {
                // Both orthogonal cells of a diagonal move must be free.
                REQUIRE(grid.free(cells[i - 1].row + dr, cells[i - 1].col));
                REQUIRE(grid.free(cells[i - 1].row, cells[i - 1].col + dc));
            }
        }
    }
    REQUIRE(planned > 10);
}

TEST_CASE("costs match a reference search exactly on random grids", "[jps]") {
    std::mt19937_64 rng(99);
    int reachable = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const OccupancyGrid grid = random_grid(rng, 64, 0.20);
        // Snap-free endpoints: pick random free cells directly.
        std::vector<CellIndex> free_cells;
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c)
                if (grid.free(r, c)) free_cells.push_back(CellIndex{r, c});
        if (free_cells.size() < 2) continue;
        const CellIndex s = free_cells[rng() % free_cells.size()];
        const CellIndex t = free_cells[rng() % free_cells.size()];
        if (s == t) continue;

        const auto oracle = dijkstra_cost(grid, s, t);
        const PlanResult res = plan_path(grid, grid.center_of(s), grid.center_of(t), 0);

        INFO("trial " << trial << " start " << s.row << "," << s.col << " goal " << t.row << ","
                      << t.col);
        REQUIRE(res.ok() == oracle.reachable);
        if (!oracle.reachable) continue;
        ++reachable;

        const MoveCounts counts = count_moves(res.path.cells);
        const MovePair planner_pair{counts.straight, counts.diagonal};
        REQUIRE(pair_equal(planner_pair, oracle.cost));
        // The reported metric cost agrees with the move decomposition.
        REQUIRE(res.path.cost ==
                Catch::Approx(counts.length_cells() * grid.cell_size()).margin(1e-9));
    }
    REQUIRE(reachable > 30);
}

TEST_CASE("planning is deterministic", "[jps]") {
    std::mt19937_64 rng(5);
    const OccupancyGrid grid = random_grid(rng, 48, 0.25);
    const Vec2 start = grid.center_of(2, 2);
    const Vec2 goal = grid.center_of(45, 44);
    const PlanResult a = plan_path(grid, start, goal);
    const PlanResult b = plan_path(grid, start, goal);
    REQUIRE(a.status == b.status);
    if (a.ok()) {
        REQUIRE(a.path.cells.size() == b.path.cells.size());
        for (size_t i = 0; i < a.path.cells.size(); ++i) REQUIRE(a.path.cells[i] == b.path.cells[i]);
        REQUIRE(a.path.cost == b.path.cost);
    }
}

TEST_CASE("endpoints snap to the nearest free cell within the window", "[jps]") {
    const OccupancyGrid grid = grid_from_rows(
        {
            "........",
            "........",
            "..ooo...",
            "..o.o...",
            "..ooo...",
            "........",
            "........",
            "........",
        },
        4.0);
    // Start inside the ring: cell (4, 3) in internal coordinates is the hole.
    const Vec2 inside = grid.center_of(4, 3);
    CHECK(grid.free(4, 3));
    const std::optional<CellIndex> snap = snap_to_free(grid, inside, 5);
    REQUIRE(snap.has_value());
    CHECK(*snap == CellIndex{4, 3});

    // A point inside an occupied ring cell snaps to a free neighbor.
    const Vec2 wall = grid.center_of(4, 2);
    const std::optional<CellIndex> moved = snap_to_free(grid, wall, 5);
    REQUIRE(moved.has_value());
    CHECK(grid.free(*moved));
    CHECK((grid.center_of(*moved) - wall).norm() <= grid.cell_size() * 1.5);

    // Radius zero cannot escape an occupied cell.
    CHECK_FALSE(snap_to_free(grid, wall, 0).has_value());
}

TEST_CASE("fully separated regions yield no path", "[jps]") {
    const OccupancyGrid grid = grid_from_rows(
        {
            "....o...",
            "....o...",
            "....o...",
            "....o...",
            "....o...",
            "....o...",
            "....o...",
            "....o...",
        },
        4.0);
    const PlanResult res = plan_path(grid, grid.center_of(4, 1), grid.center_of(4, 6), 2);
    CHECK(res.status == PlanStatus::NoPath);
    CHECK_FALSE(res.ok());
}

TEST_CASE("identical snapped endpoints give a single-cell path", "[jps]") {
    GridParams params;
    params.half_extent = 4.0;
    params.cells_per_side = 8;
    const OccupancyGrid grid(params);
    const Vec2 p = grid.center_of(3, 3) + Vec2(0.1, -0.1);
    const PlanResult res = plan_path(grid, p, p);
    REQUIRE(res.ok());
    CHECK(res.path.cells.size() == 1);
    CHECK(res.path.cost == 0.0);
}
