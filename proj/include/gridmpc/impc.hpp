#ifndef GRIDMPC_IMPC_HPP
#define GRIDMPC_IMPC_HPP

#include "gridmpc/dynamics.hpp"
#include "gridmpc/geometry.hpp"
#include "gridmpc/grid_map.hpp"
#include "gridmpc/jps.hpp"
#include "gridmpc/path_reference.hpp"
#include "gridmpc/qp.hpp"
#include "gridmpc/safe_polytope.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gridmpc {

// Solver accuracy for closed-loop tracking.  The outer linearization loop
// only resolves trajectory changes down to its own convergence tolerance,
// so demanding tight duals from the inner solver buys nothing and costs
// roughly an order of magnitude in iterations on the large-weight costs.
inline QpSettings tracking_qp_settings() {
    QpSettings settings;
    settings.tol_abs = 1e-4;
    settings.tol_rel = 1e-4;
    return settings;
}

// Weights and tolerances of the finite-horizon tracking problem and of the
// outer linearization loop wrapped around it.
struct CftocConfig {
    int horizon = 30;
    double dt = 0.01;
    Vec4 state_weight{1e4, 1e4, 100.0, 10.0};
    Vec4 terminal_weight{1e4, 1e4, 100.0, 10.0};
    Vec2 input_weight{1.0, 1.0};
    double slack_weight = 1e5;  // pulls each safety relaxation toward 1
    double gamma = 0.1;         // per-step barrier decay rate
    int max_linearizations = 10;
    double converge_abs = 0.05;
    double converge_rel = 1e-2;
    // Per-pass trust region on the two variables the model is nonlinear in;
    // keeps successive linearizations from leaving their region of validity.
    double trust_heading = 0.5;
    double trust_speed = 5.0;
    double detection_half_side = 20.0;
    OperatingLimits limits;
    double v_ref = 25.0;
    double path_clearance = 1.0;
    double robot_radius = 1.0;
    double arrival_radius = 0.1;
    bool pin_slacks = false;  // lock every relaxation at exactly one
    int snap_radius_cells = 5;
    QpSettings qp = tracking_qp_settings();

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("cftoc: horizon must be >= 1");
        if (dt <= 0.0) throw std::invalid_argument("cftoc: dt must be positive");
        if ((state_weight.array() < 0.0).any() || (terminal_weight.array() < 0.0).any() ||
            (input_weight.array() <= 0.0).any())
            throw std::invalid_argument("cftoc: weights must be non-negative");
        if (slack_weight <= 0.0)
            throw std::invalid_argument("cftoc: slack weight must be positive");
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("cftoc: decay rate must lie in (0, 1]");
        if (max_linearizations < 1)
            throw std::invalid_argument("cftoc: need at least one linearization pass");
        if (converge_abs <= 0.0 || converge_rel <= 0.0)
            throw std::invalid_argument("cftoc: convergence tolerances must be positive");
        if (trust_heading <= 0.0 || trust_speed <= 0.0)
            throw std::invalid_argument("cftoc: trust region radii must be positive");
        if (detection_half_side <= 0.0)
            throw std::invalid_argument("cftoc: detection half side must be positive");
        if (v_ref <= 0.0) throw std::invalid_argument("cftoc: reference speed must be positive");
        if (path_clearance < 0.0 || robot_radius < 0.0 || arrival_radius < 0.0)
            throw std::invalid_argument("cftoc: radii must be non-negative");
        if (snap_radius_cells < 0)
            throw std::invalid_argument("cftoc: snap radius must be non-negative");
    }
};

// Variable layout of one assembled problem: states x_0..x_N first, then
// inputs u_0..u_{N-1}, then one relaxation per safety row.
struct CftocLayout {
    int horizon = 0;
    int n_slacks = 0;

    int state_offset(int k) const { return 4 * k; }
    int input_offset(int k) const { return 4 * (horizon + 1) + 2 * k; }
    int slack_offset(int i) const { return 4 * (horizon + 1) + 2 * horizon + i; }
    int n_vars() const { return 4 * (horizon + 1) + 2 * horizon + n_slacks; }
};

struct CftocProblem {
    QuadraticProgram qp;
    CftocLayout layout;
    CompiledCbf cbf;
    std::vector<SafePolytope> polytopes;  // polytopes[k - 1] guards step k
};

// Assembles the tracking problem around a nominal trajectory: linearized
// dynamics as equalities, box limits, and barrier decay rows on the safe
// polytopes carved out of the per-step maps.  maps[k] is the occupancy
// snapshot for horizon step k; index 0 is only there to keep the indexing
// aligned.  Returns nothing when some step has no free cell to carve a
// region around, even after snapping.
inline std::optional<CftocProblem> build_cftoc(
    const StateVector &measured, const std::vector<StateVector> &nominal_states,
    const std::vector<ControlInput> &nominal_inputs, const ReferenceTrajectory &reference,
    const std::vector<const OccupancyGrid *> &maps, const CftocConfig &config) {
    config.validate();
    const int N = config.horizon;
    if (static_cast<int>(nominal_states.size()) != N + 1 ||
        static_cast<int>(nominal_inputs.size()) != N ||
        static_cast<int>(reference.states.size()) != N + 1 ||
        static_cast<int>(maps.size()) != N + 1)
        throw std::invalid_argument("cftoc: trajectory lengths must match the horizon");

    std::vector<SafePolytope> polytopes;
    polytopes.reserve(static_cast<size_t>(N));
    for (int k = 1; k <= N; ++k) {
        const OccupancyGrid &map = *maps[static_cast<size_t>(k)];
        const Vec2 seed = nominal_states[static_cast<size_t>(k)].position();
        auto poly = extract_polytope(map, seed, config.detection_half_side);
        if (!poly) {
            // The nominal drifted off the map or into an occupied cell; carve
            // around the nearest free cell center instead.
            const auto snapped = snap_to_free(map, seed, config.snap_radius_cells);
            if (!snapped) return std::nullopt;
            poly = extract_polytope(map, map.center_of(*snapped), config.detection_half_side);
            if (!poly) return std::nullopt;
        }
        polytopes.push_back(std::move(*poly));
    }

    CftocProblem out;
    out.cbf = compile_constraints(polytopes, measured.position(), config.gamma);
    out.polytopes = std::move(polytopes);
    out.layout.horizon = N;
    out.layout.n_slacks = static_cast<int>(out.cbf.rows.size());
    const CftocLayout &L = out.layout;

    QpBuilder builder(L.n_vars());

    for (int k = 1; k <= N; ++k) {
        const Vec4 w = (k == N) ? config.terminal_weight : config.state_weight;
        const Vec4 r = reference.states[static_cast<size_t>(k)].vec();
        for (int i = 0; i < 4; ++i) {
            if (w(i) == 0.0) continue;
            builder.add_quadratic(L.state_offset(k) + i, L.state_offset(k) + i, 2.0 * w(i));
            builder.add_linear(L.state_offset(k) + i, -2.0 * w(i) * r(i));
        }
    }
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < 2; ++i)
            builder.add_quadratic(L.input_offset(k) + i, L.input_offset(k) + i,
                                  2.0 * config.input_weight(i));
    }
    for (int i = 0; i < L.n_slacks; ++i) {
        builder.add_quadratic(L.slack_offset(i), L.slack_offset(i), 2.0 * config.slack_weight);
        builder.add_linear(L.slack_offset(i), -2.0 * config.slack_weight);
    }

    const Vec4 x0 = measured.vec();
    for (int i = 0; i < 4; ++i)
        builder.add_row({{L.state_offset(0) + i, 1.0}}, x0(i), x0(i));

    for (int k = 0; k < N; ++k) {
        const LinearizedDynamics lin = linearize(nominal_states[static_cast<size_t>(k)],
                                                 nominal_inputs[static_cast<size_t>(k)],
                                                 config.dt);
        const Vec4 c = lin.affine_term(config.dt);
        for (int i = 0; i < 4; ++i) {
            std::vector<std::pair<int, double>> coeffs;
            coeffs.reserve(7);
            coeffs.emplace_back(L.state_offset(k + 1) + i, 1.0);
            for (int j = 0; j < 4; ++j)
                if (lin.A(i, j) != 0.0) coeffs.emplace_back(L.state_offset(k) + j, -lin.A(i, j));
            for (int j = 0; j < 2; ++j)
                if (lin.B(i, j) != 0.0) coeffs.emplace_back(L.input_offset(k) + j, -lin.B(i, j));
            builder.add_row(coeffs, c(i), c(i));
        }
    }

    for (int k = 1; k <= N; ++k) {
        for (int i = 0; i < 4; ++i)
            builder.add_row({{L.state_offset(k) + i, 1.0}}, config.limits.state_lower(i),
                            config.limits.state_upper(i));
        const Vec4 nominal = nominal_states[static_cast<size_t>(k)].vec();
        builder.add_row({{L.state_offset(k) + 2, 1.0}}, nominal(2) - config.trust_heading,
                        nominal(2) + config.trust_heading);
        builder.add_row({{L.state_offset(k) + 3, 1.0}}, nominal(3) - config.trust_speed,
                        nominal(3) + config.trust_speed);
    }
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < 2; ++i)
            builder.add_row({{L.input_offset(k) + i, 1.0}}, config.limits.input_lower(i),
                            config.limits.input_upper(i));
    }

    for (int i = 0; i < L.n_slacks; ++i) {
        const CbfConstraintRow &row = out.cbf.rows[static_cast<size_t>(i)];
        builder.add_row({{L.state_offset(row.step) + 0, row.position_coeff.x()},
                         {L.state_offset(row.step) + 1, row.position_coeff.y()},
                         {L.slack_offset(i), row.slack_coeff}},
                        row.rhs, kInf);
    }
    for (int i = 0; i < L.n_slacks; ++i) {
        if (config.pin_slacks)
            builder.add_row({{L.slack_offset(i), 1.0}}, 1.0, 1.0);
        else
            builder.add_row({{L.slack_offset(i), 1.0}}, 0.0, kInf);
    }

    out.qp = builder.build();
    return out;
}

struct IterationResult {
    bool feasible = false;
    bool converged = false;  // the last pass changed less than the tolerance
    std::vector<StateVector> states;    // accepted nominal, horizon + 1 entries
    std::vector<ControlInput> inputs;   // horizon entries
    int linearizations = 0;
    int qp_iterations = 0;              // summed over the passes
    int dropped_edges = 0;              // from the last assembled problem
    std::vector<SafePolytope> polytopes;
    double build_seconds = 0.0;
    double qp_seconds = 0.0;
    QpStatus last_status = QpStatus::MaxIterations;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Solves the tracking problem by repeated linearization: assemble around the
// current nominal, solve, adopt the solution as the new nominal, stop when
// the stacked state change is small.  The initial nominal comes from the
// caller (shifted previous plan or a coasting rollout).
inline IterationResult iterate(const StateVector &measured,
                               const ReferenceTrajectory &reference,
                               const std::vector<const OccupancyGrid *> &maps,
                               std::vector<StateVector> nominal_states,
                               std::vector<ControlInput> nominal_inputs,
                               const CftocConfig &config) {
    IterationResult result;
    result.states = std::move(nominal_states);
    result.inputs = std::move(nominal_inputs);

    CftocConfig local = config;  // trust radii shrink when passes stop contracting
    double previous_change = kInf;
    std::optional<QpSolution> previous;
    int adopted = 0;  // passes whose solution was accepted into the nominal
    for (int pass = 1; pass <= config.max_linearizations; ++pass) {
        result.states.front() = measured;

        auto t0 = std::chrono::steady_clock::now();
        auto problem = build_cftoc(measured, result.states, result.inputs, reference, maps,
                                   local);
        result.build_seconds += detail::seconds_since(t0);
        if (!problem) {
            // A failed later pass falls back to the last accepted trajectory.
            result.feasible = adopted > 0;
            return result;
        }

        const Eigen::VectorXd *warm_x = nullptr;
        const Eigen::VectorXd *warm_y = nullptr;
        if (previous && previous->x.size() == problem->qp.n_vars &&
            previous->y.size() == problem->qp.n_cons()) {
            warm_x = &previous->x;
            warm_y = &previous->y;
        }

        t0 = std::chrono::steady_clock::now();
        const QpSolution sol = solve_qp(problem->qp, local.qp, warm_x, warm_y);
        result.qp_seconds += detail::seconds_since(t0);

        result.linearizations = pass;
        result.qp_iterations += sol.iterations;
        result.last_status = sol.status;
        if (sol.status != QpStatus::Optimal) {
            result.feasible = adopted > 0;
            return result;
        }
        // Keep the regions paired with the trajectory actually adopted.
        result.dropped_edges = problem->cbf.dropped_edges;
        result.polytopes = std::move(problem->polytopes);

        const CftocLayout &L = problem->layout;
        double change_sq = 0.0;
        double nominal_sq = 0.0;
        for (int k = 0; k <= config.horizon; ++k) {
            const Vec4 xk = sol.x.segment<4>(L.state_offset(k));
            change_sq += (xk - result.states[static_cast<size_t>(k)].vec()).squaredNorm();
            nominal_sq += result.states[static_cast<size_t>(k)].vec().squaredNorm();
            result.states[static_cast<size_t>(k)] = StateVector::from_vec(xk);
        }
        for (int k = 0; k < config.horizon; ++k) {
            result.inputs[static_cast<size_t>(k)] =
                ControlInput::from_vec(sol.x.segment<2>(L.input_offset(k)));
        }
        previous = sol;
        ++adopted;

        const double change = std::sqrt(change_sq);
        const double relative = change / std::max(std::sqrt(nominal_sq), 1e-9);
        if (change < config.converge_abs || relative < config.converge_rel) {
            result.converged = true;
            break;
        }
        // A pass that fails to contract signals the linear model is being
        // trusted too far (typically a heading limit cycle); tighten.
        if (change > 0.9 * previous_change) {
            local.trust_heading *= 0.5;
            local.trust_speed *= 0.5;
        }
        previous_change = change;
    }
    result.states.front() = measured;
    result.feasible = true;
    return result;
}

// What one closed-loop control step did, for logging and for the CSV dumps.
struct ControlStepRecord {
    int step = 0;             // absolute step index this input was applied at
    StateVector state;        // state the step started from
    ControlInput input;       // applied input (zero when holding)
    StateVector next_state;
    bool feasible = false;    // the tracking solve produced the input
    bool arrived = false;
    PlanStatus plan_status = PlanStatus::NoPath;
    QpStatus last_qp_status = QpStatus::MaxIterations;  // meaningful when a solve ran
    int linearizations = 0;
    int qp_iterations = 0;
    double plan_seconds = 0.0;
    double build_seconds = 0.0;
    double qp_seconds = 0.0;
    double solve_seconds = 0.0;
    std::vector<SafePolytope> polytopes;  // from the accepted solve
};

// Receding-horizon loop: replan the grid path every step, shape it away from
// obstacles, rebuild the reference, and track it with the linearized solver.
// When anything along that chain fails the step holds zero input and coasts.
class Controller {
public:
    Controller(MapProvider provider, const CftocConfig &config, const StateVector &start,
               const Vec2 &goal)
        : provider_(std::move(provider)), config_(config), state_(start), goal_(goal) {
        config_.validate();
        if (provider_.dt() != config_.dt)
            throw std::invalid_argument("controller: map provider and solver dt differ");
    }

    const StateVector &state() const { return state_; }
    const Vec2 &goal() const { return goal_; }
    int step_index() const { return step_; }
    bool arrived() const { return arrived_; }
    const CftocConfig &config() const { return config_; }

    ControlStepRecord advance() {
        ControlStepRecord rec;
        rec.step = step_;
        rec.state = state_;

        if ((state_.position() - goal_).norm() <= config_.arrival_radius) arrived_ = true;
        if (arrived_) {
            rec.arrived = true;
            rec.feasible = true;
            rec.next_state = state_;
            return rec;
        }

        // Renormalizing the heading keeps it inside the solver's box no
        // matter how long the run; the warm plan shifts by the same amount
        // so the linearization stays consistent.
        const double wrapped = wrap_to_pi(state_.theta);
        const double heading_shift = wrapped - state_.theta;
        if (heading_shift != 0.0) {
            state_.theta = wrapped;
            rec.state = state_;
            if (warm_states_.size() == static_cast<size_t>(config_.horizon) + 1) {
                for (StateVector &s : warm_states_) s.theta += heading_shift;
            }
        }

        auto t0 = std::chrono::steady_clock::now();
        const OccupancyGrid &map_now = provider_.map_at(step_);
        PlanResult plan = plan_path(map_now, state_.position(), goal_, config_.snap_radius_cells);
        if (plan.status == PlanStatus::StartUnsnappable ||
            plan.status == PlanStatus::GoalUnsnappable) {
            // An obstacle parked over an endpoint defeats the tight snap; a
            // map-wide search for the closest free cell keeps the tracker
            // moving toward the goal instead of coasting blind until the
            // cell uncovers.
            plan = plan_path(map_now, state_.position(), goal_,
                             std::max(map_now.rows(), map_now.cols()));
        }
        rec.plan_status = plan.status;
        ReferenceTrajectory reference;
        bool have_reference = false;
        if (plan.ok()) {
            GridPath path = plan.path;
            // The planner ends on the goal cell's center, which can sit up to
            // half a cell diagonal away from the goal itself; finish the
            // reference at the exact goal whenever it is freely reachable.
            if (!path.metric_points.empty() && map_now.contains(goal_) &&
                map_now.free(map_now.point_to_cell(goal_)) &&
                (goal_ - path.metric_points.back()).norm() > 1e-9 &&
                segment_free(map_now, path.metric_points.back(), goal_)) {
                path.metric_points.push_back(goal_);
                path.cells.push_back(map_now.point_to_cell(goal_));
            }
            const GridPath shaped = push_away(path, map_now, config_.path_clearance);
            reference = reconstruct(shaped, state_, config_.v_ref, config_.dt, config_.horizon,
                                    std::max(0.0, config_.limits.input_upper(1)));
            have_reference = true;
        }
        rec.plan_seconds = detail::seconds_since(t0);

        ControlInput input;      // zero hold unless the solve succeeds
        bool held_tail = false;  // fell back on the previous plan's tail
        if (have_reference) {
            const int N = config_.horizon;
            std::vector<const OccupancyGrid *> maps(static_cast<size_t>(N) + 1);
            for (int k = 0; k <= N; ++k) maps[static_cast<size_t>(k)] = &provider_.map_at(step_ + k);

            std::vector<StateVector> guess_states;
            std::vector<ControlInput> guess_inputs;
            if (warm_states_.size() == static_cast<size_t>(N) + 1) {
                guess_states = warm_states_;
                guess_inputs = warm_inputs_;
                for (size_t k = 0; k + 1 < guess_states.size(); ++k)
                    guess_states[k] = guess_states[k + 1];
                for (size_t k = 0; k + 1 < guess_inputs.size(); ++k)
                    guess_inputs[k] = guess_inputs[k + 1];
                guess_states.back() =
                    step(guess_states[guess_states.size() - 2], guess_inputs.back(), config_.dt);
            } else {
                guess_inputs.assign(static_cast<size_t>(N), ControlInput{});
                guess_states = rollout(state_, guess_inputs, config_.dt);
            }

            // Tail of the last accepted plan, shifted to this step.  While the
            // old certificate still has unconsumed steps it doubles as the
            // hold action of last resort below.
            std::vector<StateVector> tail_states;
            std::vector<ControlInput> tail_inputs;
            if (tail_left_ > 0) {
                tail_states = guess_states;
                tail_inputs = guess_inputs;
            }

            IterationResult it = iterate(state_, reference, maps, std::move(guess_states),
                                         std::move(guess_inputs), config_);
            if (!it.feasible) {
                // The shifted plan can be cornered: when obstacles sweep
                // across the lane, no trajectory near the failed nominal is
                // feasible and the passes never get to move it toward the
                // escape route.  Re-seed from a small family of braking arcs
                // -- straight, half turn, full turn either way -- scored on
                // the predicted grids, and polish the best one.
                const double lo_turn = config_.limits.input_lower(0);
                const double hi_turn = config_.limits.input_upper(0);
                const double turns[] = {0.0, 0.5 * lo_turn, 0.5 * hi_turn, lo_turn, hi_turn};
                double best_turn = 0.0;
                int best_score = -1;
                for (const double turn : turns) {
                    StateVector x = state_;
                    int score = 0;
                    for (int k = 1; k <= N; ++k) {
                        const double to_rest = -x.v / config_.dt;
                        const ControlInput u{turn,
                                             std::clamp(to_rest, config_.limits.input_lower(1),
                                                        config_.limits.input_upper(1))};
                        x = step(x, u, config_.dt);
                        const OccupancyGrid &map = *maps[static_cast<size_t>(k)];
                        if (!map.contains(x.position()) ||
                            !map.free(map.point_to_cell(x.position())))
                            break;
                        ++score;
                    }
                    if (score > best_score) {
                        best_score = score;
                        best_turn = turn;
                    }
                    if (score == N) break;  // first fully clear arc wins
                }

                std::vector<ControlInput> arc_inputs(static_cast<size_t>(N));
                std::vector<StateVector> arc_states;
                arc_states.reserve(static_cast<size_t>(N) + 1);
                arc_states.push_back(state_);
                for (int k = 0; k < N; ++k) {
                    const double to_rest = -arc_states.back().v / config_.dt;
                    const ControlInput u{best_turn,
                                         std::clamp(to_rest, config_.limits.input_lower(1),
                                                    config_.limits.input_upper(1))};
                    arc_inputs[static_cast<size_t>(k)] = u;
                    arc_states.push_back(step(arc_states.back(), u, config_.dt));
                }
                IterationResult retry = iterate(state_, reference, maps, std::move(arc_states),
                                                std::move(arc_inputs), config_);
                retry.linearizations += it.linearizations;
                retry.qp_iterations += it.qp_iterations;
                retry.build_seconds += it.build_seconds;
                retry.qp_seconds += it.qp_seconds;
                it = std::move(retry);
            }
            rec.linearizations = it.linearizations;
            rec.qp_iterations = it.qp_iterations;
            rec.build_seconds = it.build_seconds;
            rec.qp_seconds = it.qp_seconds;
            rec.last_qp_status = it.last_status;
            if (it.feasible) {
                input = config_.limits.clamp_input(it.inputs.front());
                rec.feasible = true;
                rec.polytopes = std::move(it.polytopes);
                warm_states_ = std::move(it.states);
                warm_inputs_ = std::move(it.inputs);
                tail_left_ = N - 1;
            } else if (!tail_inputs.empty()) {
                // Both solves failed, but the previous accepted plan was
                // checked against predictions of the same physical instants,
                // so its shifted tail is still a certified hold -- far better
                // mid-manoeuvre than freezing the inputs to zero.  Each reuse
                // consumes one step of that certificate; when it runs out the
                // zero hold below is all that is left.
                input = config_.limits.clamp_input(tail_inputs.front());
                held_tail = true;
                warm_states_ = std::move(tail_states);
                warm_inputs_ = std::move(tail_inputs);
                --tail_left_;
            }
        }
        if (!rec.feasible && !held_tail) {
            // The stale plan would misalign after an unapplied step; restart
            // from a coasting rollout next time.
            warm_states_.clear();
            warm_inputs_.clear();
            tail_left_ = 0;
        }

        rec.input = input;
        state_ = step(state_, input, config_.dt);
        rec.next_state = state_;
        rec.solve_seconds = rec.plan_seconds + rec.build_seconds + rec.qp_seconds;
        ++step_;
        provider_.prune_below(step_);
        return rec;
    }

private:
    MapProvider provider_;
    CftocConfig config_;
    StateVector state_;
    Vec2 goal_;
    int step_ = 0;
    bool arrived_ = false;
    std::vector<StateVector> warm_states_;
    std::vector<ControlInput> warm_inputs_;
    int tail_left_ = 0;  // unconsumed steps of the last accepted certificate
};

}  // namespace gridmpc

#endif
