#include "gridmpc/impc.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace gridmpc;

namespace {

OccupancyGrid empty_grid(double half_extent, int cells) {
    GridParams params;
    params.half_extent = half_extent;
    params.cells_per_side = cells;
    return OccupancyGrid(params);
}

CftocConfig small_config(int horizon, double dt, double v_ref) {
    CftocConfig config;
    config.horizon = horizon;
    config.dt = dt;
    config.v_ref = v_ref;
    return config;
}

// Worst linearization defect along the accepted trajectory.
double dynamics_defect(const IterationResult &result, double dt) {
    double worst = 0.0;
    for (size_t k = 0; k + 1 < result.states.size(); ++k) {
        const StateVector propagated = step(result.states[k], result.inputs[k], dt);
        worst = std::max(worst,
                         (propagated.vec() - result.states[k + 1].vec()).cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace

TEST_CASE("a one-step problem has the expected shape", "[impc]") {
    const OccupancyGrid grid = empty_grid(4.0, 8);
    const std::vector<const OccupancyGrid *> maps = {&grid, &grid};

    CftocConfig config = small_config(1, 0.1, 1.0);
    const StateVector measured{0.0, 0.0, 0.0, 0.0};
    const std::vector<StateVector> nominal_states = {measured, step(measured, {}, config.dt)};
    const std::vector<ControlInput> nominal_inputs = {ControlInput{}};
    ReferenceTrajectory reference;
    reference.states = {ReferenceState{Vec2(0.0, 0.0), 0.0, 0.0},
                        ReferenceState{Vec2(0.1, 0.0), 0.0, 1.0}};

    const auto problem =
        build_cftoc(measured, nominal_states, nominal_inputs, reference, maps, config);
    REQUIRE(problem.has_value());

    // Empty map: the step-1 polytope is just the detection box, and the
    // start clears all four faces, so every edge becomes a relaxed row.
    REQUIRE(problem->polytopes.size() == 1);
    CHECK(problem->polytopes.front().edges.size() == 4);
    CHECK(problem->cbf.rows.size() == 4);
    CHECK(problem->cbf.dropped_edges == 0);
    CHECK(problem->layout.n_slacks == 4);
    CHECK(problem->layout.state_offset(1) == 4);
    CHECK(problem->layout.input_offset(0) == 8);
    CHECK(problem->layout.slack_offset(0) == 10);
    CHECK(problem->layout.n_vars() == 14);
    CHECK(problem->qp.n_vars == 14);
    // 4 start pins + 4 dynamics rows + 4 state box + 2 trust rows
    // + 2 input box + 4 safety rows + 4 relaxation bounds.
    CHECK(problem->qp.n_cons() == 24);
}

TEST_CASE("mismatched trajectory lengths are rejected", "[impc]") {
    const OccupancyGrid grid = empty_grid(4.0, 8);
    const std::vector<const OccupancyGrid *> maps = {&grid, &grid};
    CftocConfig config = small_config(1, 0.1, 1.0);
    const StateVector measured{0.0, 0.0, 0.0, 0.0};
    ReferenceTrajectory reference;
    reference.states = {ReferenceState{}, ReferenceState{}};

    CHECK_THROWS_AS(build_cftoc(measured, {measured}, {ControlInput{}}, reference, maps, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_cftoc(measured, {measured, measured}, {}, reference, maps, config),
                    std::invalid_argument);
}

TEST_CASE("tracking a straight reference speeds up and stays consistent", "[impc]") {
    const OccupancyGrid grid = empty_grid(25.0, 60);
    CftocConfig config = small_config(20, 0.05, 5.0);
    const std::vector<const OccupancyGrid *> maps(config.horizon + 1, &grid);

    const StateVector start{-10.0, 0.0, 0.0, 0.0};
    const PlanResult plan = plan_path(grid, start.position(), Vec2(10.0, 0.0));
    REQUIRE(plan.ok());
    const ReferenceTrajectory reference =
        reconstruct(plan.path, start, config.v_ref, config.dt, config.horizon);

    std::vector<ControlInput> zero_inputs(config.horizon);
    std::vector<StateVector> coast = rollout(start, zero_inputs, config.dt);
    const IterationResult result =
        iterate(start, reference, maps, coast, zero_inputs, config);

    REQUIRE(result.feasible);
    CHECK(result.converged);
    CHECK(result.last_status == QpStatus::Optimal);

    // The robot accelerates from rest toward the reference speed, eastward,
    // settling toward the reference lane (the path's cell-center row).
    CHECK(result.inputs.front().accel > 0.5);
    CHECK(result.states.back().x > start.x + 1.0);
    CHECK(result.states.back().v > 2.0);
    CHECK(std::abs(result.states.back().y - reference.states.back().position.y()) < 0.5);

    CHECK(dynamics_defect(result, config.dt) <= 0.05);
    // Box rows hold to the solver's feasibility tolerance, not exactly.
    for (size_t k = 1; k < result.states.size(); ++k) {
        CHECK(config.limits.state_in_bounds(result.states[k], 1e-2));
    }
    for (const ControlInput &u : result.inputs) {
        CHECK(config.limits.input_in_bounds(u, 1e-2));
    }
}

TEST_CASE("the pass budget is honored", "[impc]") {
    const OccupancyGrid grid = empty_grid(25.0, 60);
    CftocConfig config = small_config(10, 0.05, 5.0);
    config.max_linearizations = 1;
    const std::vector<const OccupancyGrid *> maps(config.horizon + 1, &grid);

    const StateVector start{-10.0, 0.0, 0.0, 0.0};
    const PlanResult plan = plan_path(grid, start.position(), Vec2(10.0, 0.0));
    REQUIRE(plan.ok());
    const ReferenceTrajectory reference =
        reconstruct(plan.path, start, config.v_ref, config.dt, config.horizon);

    std::vector<ControlInput> zero_inputs(config.horizon);
    const IterationResult result = iterate(start, reference, maps,
                                           rollout(start, zero_inputs, config.dt),
                                           zero_inputs, config);
    REQUIRE(result.feasible);
    CHECK(result.linearizations == 1);
}

TEST_CASE("re-solving at an accepted trajectory stays near it", "[impc]") {
    const OccupancyGrid grid = empty_grid(25.0, 60);
    CftocConfig config = small_config(15, 0.05, 5.0);
    const std::vector<const OccupancyGrid *> maps(config.horizon + 1, &grid);

    const StateVector start{-8.0, 2.0, 0.3, 1.0};
    const PlanResult plan = plan_path(grid, start.position(), Vec2(10.0, -3.0));
    REQUIRE(plan.ok());
    const ReferenceTrajectory reference =
        reconstruct(plan.path, start, config.v_ref, config.dt, config.horizon);

    std::vector<ControlInput> zero_inputs(config.horizon);
    const IterationResult first = iterate(start, reference, maps,
                                          rollout(start, zero_inputs, config.dt),
                                          zero_inputs, config);
    REQUIRE(first.feasible);

    const IterationResult again =
        iterate(start, reference, maps, first.states, first.inputs, config);
    REQUIRE(again.feasible);
    CHECK(again.converged);
    double dist_sq = 0.0;
    for (size_t k = 0; k < first.states.size(); ++k)
        dist_sq += (first.states[k].vec() - again.states[k].vec()).squaredNorm();
    CHECK(std::sqrt(dist_sq) < 0.5);
}

TEST_CASE("pinned relaxations enforce the decay chain", "[impc]") {
    GridParams params;
    params.half_extent = 10.0;
    params.cells_per_side = 48;
    ObstacleShape block = ObstacleShape::square(2.0);
    block.center = Vec2(2.5, -1.4);
    const std::vector<ObstacleShape> blocks = {block};
    const OccupancyGrid grid = rasterize(blocks, 0, 0.05, 0.0, params);

    CftocConfig config = small_config(15, 0.05, 4.0);
    config.pin_slacks = true;
    config.detection_half_side = 6.0;
    config.qp.tol_abs = 1e-9;
    config.qp.tol_rel = 1e-9;
    config.qp.max_iterations = 200000;
    const std::vector<const OccupancyGrid *> maps(config.horizon + 1, &grid);

    const StateVector start{-2.0, 0.0, 0.0, 2.0};
    const PlanResult plan = plan_path(grid, start.position(), Vec2(8.0, 0.0));
    REQUIRE(plan.ok());
    const ReferenceTrajectory reference =
        reconstruct(plan.path, start, config.v_ref, config.dt, config.horizon);

    std::vector<ControlInput> zero_inputs(config.horizon);
    const IterationResult result = iterate(start, reference, maps,
                                           rollout(start, zero_inputs, config.dt),
                                           zero_inputs, config);
    REQUIRE(result.feasible);
    REQUIRE(result.polytopes.size() == static_cast<size_t>(config.horizon));

    // Every compiled row must hold with the relaxation at exactly one:
    // h(p_k) >= (1 - gamma)^k h(p_0).
    const CompiledCbf rows =
        compile_constraints(result.polytopes, start.position(), config.gamma);
    for (const CbfConstraintRow &row : rows.rows) {
        const Vec2 p = result.states[static_cast<size_t>(row.step)].position();
        const double lhs = row.position_coeff.dot(p) + row.slack_coeff;
        INFO("step " << row.step << " edge " << row.edge);
        CHECK(lhs >= row.rhs - 1e-6);
    }
}

TEST_CASE("the controller drives to a goal on an empty map", "[impc]") {
    GridParams params;
    params.half_extent = 20.0;
    params.cells_per_side = 96;
    CftocConfig config = small_config(15, 0.05, 4.0);
    MapProvider provider({}, params, config.dt, config.robot_radius);

    const StateVector start{-3.0, 0.5, 0.0, 0.0};
    const Vec2 goal(3.0, 0.0);
    Controller controller(provider, config, start, goal);

    bool arrived = false;
    int infeasible_steps = 0;
    for (int i = 0; i < 400 && !arrived; ++i) {
        const ControlStepRecord rec = controller.advance();
        arrived = rec.arrived;
        if (!rec.arrived && !rec.feasible) ++infeasible_steps;
        if (rec.feasible && !rec.arrived) {
            CHECK(rec.plan_status == PlanStatus::Success);
            CHECK(!rec.polytopes.empty());
            CHECK(rec.solve_seconds >= 0.0);
        }
    }
    CHECK(arrived);
    CHECK(infeasible_steps == 0);
    CHECK((controller.state().position() - goal).norm() <= config.arrival_radius);

    // Once arrived the controller freezes and keeps reporting arrival.
    const ControlStepRecord held = controller.advance();
    CHECK(held.arrived);
    CHECK(held.input.turn_rate == 0.0);
    CHECK(held.input.accel == 0.0);
    CHECK(held.next_state.vec() == controller.state().vec());
}

TEST_CASE("an enclosed start holds zero input", "[impc]") {
    GridParams params;
    params.half_extent = 10.0;
    params.cells_per_side = 48;
    std::vector<ObstacleShape> walls;
    for (const Vec2 &c : {Vec2(2.0, 0.0), Vec2(-2.0, 0.0), Vec2(0.0, 2.0), Vec2(0.0, -2.0)}) {
        ObstacleShape s = ObstacleShape::square(4.0);
        s.center = c;
        walls.push_back(s);
    }
    CftocConfig config = small_config(10, 0.05, 4.0);
    MapProvider provider(walls, params, config.dt, config.robot_radius);

    const StateVector start{0.0, 0.0, 0.0, 0.0};
    Controller controller(provider, config, start, Vec2(8.0, 8.0));

    const ControlStepRecord rec = controller.advance();
    CHECK_FALSE(rec.feasible);
    CHECK_FALSE(rec.arrived);
    CHECK(rec.plan_status != PlanStatus::Success);
    CHECK(rec.input.turn_rate == 0.0);
    CHECK(rec.input.accel == 0.0);
    CHECK(rec.next_state.vec() == start.vec());  // at rest, the hold freezes it
}

TEST_CASE("provider and solver step sizes must agree", "[impc]") {
    GridParams params;
    params.half_extent = 10.0;
    params.cells_per_side = 48;
    CftocConfig config = small_config(5, 0.05, 4.0);
    MapProvider provider({}, params, 0.1, config.robot_radius);
    CHECK_THROWS_AS(Controller(provider, config, StateVector{}, Vec2(1.0, 1.0)),
                    std::invalid_argument);
}
