#include "gridmpc/path_reference.hpp"

#include "gridmpc/jps.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace gridmpc;

namespace {

OccupancyGrid grid_from_rows(const std::vector<std::string> &rows_top_down, double half_extent) {
    const int n = static_cast<int>(rows_top_down.size());
    GridParams params;
    params.half_extent = half_extent;
    params.cells_per_side = n;
    std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
    for (int top = 0; top < n; ++top) {
        const int r = n - 1 - top;
        for (int c = 0; c < n; ++c)
            mask[static_cast<size_t>(r) * n + c] =
                rows_top_down[static_cast<size_t>(top)][static_cast<size_t>(c)] != '.';
    }
    return OccupancyGrid::from_occupancy_mask(params, mask);
}

GridPath straight_path(const OccupancyGrid &grid, CellIndex from, CellIndex to) {
    GridPath path;
    CellIndex cur = from;
    path.cells.push_back(cur);
    while (!(cur == to)) {
        cur.row += (to.row > cur.row) - (to.row < cur.row);
        cur.col += (to.col > cur.col) - (to.col < cur.col);
        path.cells.push_back(cur);
    }
    for (const CellIndex &c : path.cells) path.metric_points.push_back(grid.center_of(c));
    path.cost = (grid.center_of(to) - grid.center_of(from)).norm();
    return path;
}

}  // namespace

TEST_CASE("distance map matches a brute-force scan", "[path]") {
    std::mt19937_64 rng(17);
    GridParams params;
    params.half_extent = 6.0;
    params.cells_per_side = 24;
    std::vector<uint8_t> mask(24 * 24, 0);
    for (auto &m : mask) m = ((rng() >> 11) * 0x1.0p-53) < 0.15;
    const OccupancyGrid grid = OccupancyGrid::from_occupancy_mask(params, mask);
    const DistanceMap dm = DistanceMap::build(grid);

    for (int r = 0; r < 24; ++r) {
        for (int c = 0; c < 24; ++c) {
            double best = kInf;
            for (int rr = 0; rr < 24; ++rr)
                for (int cc = 0; cc < 24; ++cc)
                    if (grid.occupied(rr, cc))
                        best = std::min(best,
                                        (grid.center_of(rr, cc) - grid.center_of(r, c)).norm());
            if (best == kInf) continue;
            INFO("cell " << r << "," << c);
            REQUIRE(dm.at(r, c) == Catch::Approx(best).margin(1e-9));
        }
    }
}

TEST_CASE("distance map of an empty grid reports no occupancy", "[path]") {
    GridParams params;
    params.half_extent = 4.0;
    params.cells_per_side = 8;
    const OccupancyGrid grid(params);
    const DistanceMap dm = DistanceMap::build(grid);
    CHECK_FALSE(dm.any_occupied());
    CHECK(dm.at(3, 3) > 1e6);
}

TEST_CASE("distance field sampling interpolates between centers", "[path]") {
    GridParams params;
    params.half_extent = 4.0;
    params.cells_per_side = 8;  // d = 1
    std::vector<uint8_t> mask(64, 0);
    mask[3 * 8 + 3] = 1;  // single occupied cell
    const OccupancyGrid grid = OccupancyGrid::from_occupancy_mask(params, mask);
    const DistanceMap dm = DistanceMap::build(grid);

    const Vec2 occ = grid.center_of(3, 3);
    CHECK(dm.sample(occ) == Catch::Approx(0.0).margin(1e-12));
    // Halfway between two centers on the same row the field is the average.
    const Vec2 mid = 0.5 * (grid.center_of(3, 5) + grid.center_of(3, 6));
    CHECK(dm.sample(mid) == Catch::Approx(0.5 * (dm.at(3, 5) + dm.at(3, 6))).margin(1e-12));
    // The gradient points away from the occupied cell along the row.
    const Vec2 g = dm.gradient(grid.center_of(3, 5) + Vec2(0.2, 0.0));
    CHECK(g.x() > 0.0);
}

TEST_CASE("segment traversal flags cells crossed by the segment", "[path]") {
    const OccupancyGrid grid = grid_from_rows(
        {
            "........",
            "........",
            "........",
            "....o...",
            "........",
            "........",
            "........",
            "........",
        },
        4.0);
    // Occupied cell at internal (4, 4).
    REQUIRE(grid.occupied(4, 4));
    CHECK(segment_free(grid, grid.center_of(1, 1), grid.center_of(1, 6)));
    CHECK_FALSE(segment_free(grid, grid.center_of(4, 1), grid.center_of(4, 6)));
    // Diagonal through the occupied cell fails, a parallel one passes.
    CHECK_FALSE(segment_free(grid, grid.center_of(2, 2), grid.center_of(6, 6)));
    CHECK(segment_free(grid, grid.center_of(2, 0), grid.center_of(6, 4)));
    // Degenerate segment: the containing cell decides.
    CHECK(segment_free(grid, grid.center_of(0, 0), grid.center_of(0, 0)));
    CHECK_FALSE(segment_free(grid, grid.center_of(4, 4), grid.center_of(4, 4)));
}

TEST_CASE("paths far from every obstacle are unchanged", "[path]") {
    const OccupancyGrid grid = grid_from_rows(
        {
            "................",
            "................",
            "oo..............",
            "oo..............",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
            "................",
        },
        8.0);
    const GridPath path = straight_path(grid, CellIndex{2, 4}, CellIndex{2, 12});
    const GridPath pushed = push_away(path, grid, 2.0);
    REQUIRE(pushed.metric_points.size() == path.metric_points.size());
    for (size_t i = 0; i < path.metric_points.size(); ++i)
        CHECK((pushed.metric_points[i] - path.metric_points[i]).norm() == 0.0);
}

TEST_CASE("waypoints hugging a block move out to the requested clearance", "[path]") {
    // Solid block on columns 6..9, path running straight up column 5.
    std::vector<std::string> rows(16, "................");
    for (int top = 2; top <= 13; ++top)
        for (int c = 6; c <= 9; ++c) rows[static_cast<size_t>(top)][static_cast<size_t>(c)] = 'o';
    const OccupancyGrid grid = grid_from_rows(rows, 8.0);

    const GridPath path = straight_path(grid, CellIndex{1, 5}, CellIndex{14, 5});
    const double clearance = 2.0 * grid.cell_size();
    const GridPath pushed = push_away(path, grid, clearance);
    const DistanceMap dm = DistanceMap::build(grid);

    // Endpoints pinned.
    CHECK((pushed.metric_points.front() - path.metric_points.front()).norm() == 0.0);
    CHECK((pushed.metric_points.back() - path.metric_points.back()).norm() == 0.0);
    // Interior waypoints well inside the run reach the clearance.
    for (size_t i = 3; i + 3 < pushed.metric_points.size(); ++i) {
        INFO("waypoint " << i);
        CHECK(dm.sample(pushed.metric_points[i]) >= clearance - 1e-9);
        CHECK(grid.free(grid.point_to_cell(pushed.metric_points[i])));
    }
    // Moved waypoints still connect through free cells.
    for (size_t i = 1; i < pushed.metric_points.size(); ++i)
        CHECK(segment_free(grid, pushed.metric_points[i - 1], pushed.metric_points[i]));
}

TEST_CASE("a corridor path settles near the centerline", "[path]") {
    // Free corridor on columns 5..8 (width 4 cells), walls on both sides.
    std::vector<std::string> rows(16, "");
    for (auto &row : rows) {
        row = std::string(5, 'o') + std::string(4, '.') + std::string(7, 'o');
    }
    const OccupancyGrid grid = grid_from_rows(rows, 8.0);
    const double d = grid.cell_size();

    const GridPath path = straight_path(grid, CellIndex{0, 5}, CellIndex{15, 5});
    const GridPath pushed = push_away(path, grid, 10.0);  // unreachable clearance: centers
    // Free columns 5..8 span x in [-3, 1]; the centerline is x = -1.
    for (size_t i = 2; i + 2 < pushed.metric_points.size(); ++i) {
        INFO("waypoint " << i << " x " << pushed.metric_points[i].x());
        CHECK(std::abs(pushed.metric_points[i].x() - (-1.0)) <= 0.5 * d + 1e-9);
    }
}

TEST_CASE("reference positions space at most v_ref dt apart", "[path]") {
    GridParams params;
    params.half_extent = 8.0;
    params.cells_per_side = 16;
    const OccupancyGrid grid(params);

    GridPath path;
    path.cells = {CellIndex{8, 2}, CellIndex{8, 12}};
    path.metric_points = {grid.center_of(8, 2), grid.center_of(8, 12)};  // 10 m apart
    path.cost = 10.0;

    const StateVector current{path.metric_points.front().x(), path.metric_points.front().y(),
                              0.0, 25.0};
    const ReferenceTrajectory ref = reconstruct(path, current, 25.0, 0.01, 30);
    REQUIRE(ref.states.size() == 31);
    for (size_t i = 1; i < ref.densified.size(); ++i) {
        const double gap = (ref.densified[i] - ref.densified[i - 1]).norm();
        REQUIRE(gap <= 0.25 + 1e-9);
    }
    // A 10 m segment splits into exactly 40 pieces of 0.25.
    CHECK(ref.densified.size() == 41);
    CHECK((ref.densified[1] - ref.densified[0]).norm() == Catch::Approx(0.25).margin(1e-12));
    for (int k = 0; k < 30; ++k) {
        CHECK(ref.states[static_cast<size_t>(k)].heading == Catch::Approx(0.0).margin(1e-12));
        CHECK(ref.states[static_cast<size_t>(k)].speed == 25.0);
        const double step_gap = (ref.states[static_cast<size_t>(k) + 1].position -
                                 ref.states[static_cast<size_t>(k)].position)
                                    .norm();
        CHECK(step_gap <= 25.0 * 0.01 + 1e-9);
    }
}

TEST_CASE("heading switches exactly at a right-angle corner", "[path]") {
    GridParams params;
    params.half_extent = 8.0;
    params.cells_per_side = 16;
    const OccupancyGrid grid(params);

    GridPath path;
    path.cells = {CellIndex{2, 2}, CellIndex{2, 10}, CellIndex{10, 10}};
    path.metric_points = {grid.center_of(2, 2), grid.center_of(2, 10), grid.center_of(10, 10)};
    path.cost = 16.0;

    const StateVector current{grid.center_of(2, 2).x(), grid.center_of(2, 2).y(), 0.0, 25.0};
    const ReferenceTrajectory ref = reconstruct(path, current, 25.0, 0.01, 60);
    const Vec2 corner = grid.center_of(2, 10);
    for (int k = 0; k < 60; ++k) {
        const auto &s = ref.states[static_cast<size_t>(k)];
        const auto &n = ref.states[static_cast<size_t>(k) + 1];
        if (n.position.x() <= corner.x() && s.position.y() == corner.y() &&
            n.position == s.position)
            continue;
        if (s.position.x() < corner.x() && s.position.y() == corner.y()) {
            CHECK(s.heading == Catch::Approx(0.0).margin(1e-12));  // heading east before corner
        } else if (s.position.x() == corner.x() && n.position.y() > s.position.y()) {
            CHECK(s.heading == Catch::Approx(M_PI / 2.0).margin(1e-12));  // north after corner
        }
    }
    // Unwrapped sequence never jumps by more than pi between steps.
    for (int k = 1; k <= 60; ++k)
        CHECK(std::abs(ref.states[static_cast<size_t>(k)].heading -
                       ref.states[static_cast<size_t>(k) - 1].heading) <= M_PI + 1e-12);
}

TEST_CASE("degenerate single-point paths repeat the goal pose", "[path]") {
    GridParams params;
    params.half_extent = 4.0;
    params.cells_per_side = 8;
    const OccupancyGrid grid(params);

    GridPath path;
    path.cells = {CellIndex{3, 3}};
    path.metric_points = {grid.center_of(3, 3)};

    const StateVector current{grid.center_of(3, 3).x(), grid.center_of(3, 3).y(), 1.2, 0.0};
    const ReferenceTrajectory ref = reconstruct(path, current, 25.0, 0.01, 10);
    REQUIRE(ref.states.size() == 11);
    for (const auto &s : ref.states) {
        CHECK((s.position - grid.center_of(3, 3)).norm() == 0.0);
        CHECK(s.heading == Catch::Approx(1.2).margin(1e-12));  // stationary holds heading
        CHECK(s.speed == 0.0);  // a reference that does not move asks for no speed
    }
}

TEST_CASE("reference speed falls to zero where the path ends", "[path]") {
    GridParams params;
    params.half_extent = 8.0;
    params.cells_per_side = 16;
    const OccupancyGrid grid(params);

    GridPath path;
    path.cells = {CellIndex{8, 8}, CellIndex{8, 10}};
    path.metric_points = {grid.center_of(8, 8), grid.center_of(8, 10)};  // 2 m apart

    const StateVector current{grid.center_of(8, 8).x(), grid.center_of(8, 8).y(), 0.0, 25.0};
    const ReferenceTrajectory ref = reconstruct(path, current, 25.0, 0.01, 12);
    REQUIRE(ref.states.size() == 13);
    // 2 m at 0.25 m spacing: eight moving hops, then the goal pose repeats.
    for (int k = 0; k < 8; ++k)
        CHECK(ref.states[static_cast<size_t>(k)].speed == Catch::Approx(25.0));
    for (int k = 8; k <= 12; ++k) {
        CHECK(ref.states[static_cast<size_t>(k)].speed == 0.0);
        CHECK((ref.states[static_cast<size_t>(k)].position - grid.center_of(8, 10)).norm() ==
              0.0);
    }
}

TEST_CASE("heading unwraps continuously from the current state", "[path]") {
    GridParams params;
    params.half_extent = 8.0;
    params.cells_per_side = 16;
    const OccupancyGrid grid(params);

    GridPath path;
    path.cells = {CellIndex{8, 12}, CellIndex{8, 2}};
    path.metric_points = {grid.center_of(8, 12), grid.center_of(8, 2)};  // heading west: pi

    // Current heading near -pi: the reference must pick the nearby branch.
    const StateVector current{grid.center_of(8, 12).x(), grid.center_of(8, 12).y(), -3.1, 25.0};
    const ReferenceTrajectory ref = reconstruct(path, current, 25.0, 0.01, 10);
    CHECK(ref.states[0].heading == Catch::Approx(-M_PI).margin(1e-9));
    for (int k = 1; k <= 10; ++k)
        CHECK(std::abs(ref.states[static_cast<size_t>(k)].heading -
                       ref.states[static_cast<size_t>(k) - 1].heading) < 1e-9);
}

TEST_CASE("references from planned paths stay in free cells", "[path]") {
    std::mt19937_64 rng(23);
    int produced = 0;
    for (int trial = 0; trial < 15; ++trial) {
        GridParams params;
        params.half_extent = 10.0;
        params.cells_per_side = 40;
        std::vector<uint8_t> mask(1600, 0);
        for (auto &m : mask) m = ((rng() >> 11) * 0x1.0p-53) < 0.2;
        const OccupancyGrid grid = OccupancyGrid::from_occupancy_mask(params, mask);

        const PlanResult planned = plan_path(grid, Vec2(-9.0, -9.0), Vec2(9.0, 9.0));
        if (!planned.ok()) continue;
        ++produced;
        const GridPath pushed = push_away(planned.path, grid, 1.0);
        const StateVector current{-9.0, -9.0, 0.8, 25.0};
        const ReferenceTrajectory ref = reconstruct(pushed, current, 25.0, 0.01, 30);
        for (const auto &s : ref.states) {
            INFO("trial " << trial << " position " << s.position.transpose());
            REQUIRE(grid.contains(s.position));
            REQUIRE(grid.free(grid.point_to_cell(s.position)));
        }
    }
    REQUIRE(produced >= 5);
}
