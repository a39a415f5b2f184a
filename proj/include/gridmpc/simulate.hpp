#ifndef GRIDMPC_SIMULATE_HPP
#define GRIDMPC_SIMULATE_HPP

#include "gridmpc/impc.hpp"
#include "gridmpc/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace gridmpc {

// Controller configuration implied by a scenario: solve dimensions and the
// robot parameters come from the spec, weights keep their defaults.
inline CftocConfig controller_config(const ScenarioSpec &spec) {
    CftocConfig config;
    config.horizon = spec.horizon;
    config.dt = spec.dt;
    config.v_ref = spec.v_ref;
    config.robot_radius = spec.robot_radius;
    config.limits.state_lower.head<2>() = Vec2(-spec.half_extent, -spec.half_extent);
    config.limits.state_upper.head<2>() = Vec2(spec.half_extent, spec.half_extent);
    if (spec.constant_speed) {
        config.limits.input_lower(1) = 0.0;
        config.limits.input_upper(1) = 0.0;
    }
    return config;
}

// Aggregate outcome of one closed-loop trial.
struct TrialStats {
    bool feasible = false;   // reached the goal, collision-free, within budget
    bool reached = false;
    bool collided = false;
    int steps_used = 0;
    int infeasible_steps = 0;
    double trajectory_length = 0.0;
    double mean_solve_ms = 0.0;
    double std_solve_ms = 0.0;
    double mean_passes = 0.0;
};

// Everything one trial produced: outcome, the realized world, the per-step
// records, and the raw per-step solve times for pooled statistics.
struct TrialLog {
    TrialStats stats;
    RealizedTrial world;
    std::vector<ControlStepRecord> records;
    std::vector<double> solve_ms;
};

struct TrialOptions {
    // Keep the polytopes of every k-th record (0 drops them all); they
    // dominate the memory footprint of a long trial.
    int keep_polytopes_every = 0;
};

// True when the robot disc overlaps any obstacle's ground-truth (un-inflated)
// geometry at the given time.
inline bool disc_intersects_obstacles(const std::vector<ObstacleShape> &obstacles,
                                      const Vec2 &center, double radius, double time_s) {
    for (const ObstacleShape &shape : obstacles)
        if (shape.distance_to_point(center, time_s) < radius) return true;
    return false;
}

// Runs one closed-loop trial: steps the controller until arrival, collision,
// or budget exhaustion.  Collisions and goal arrival are both checked against
// ground truth at ten sub-samples per step -- at full speed one control step
// covers more ground than the arrival disc is wide, so a state-sampled check
// could fly straight across it.  When both fire inside the same sub-sample
// the collision wins.  Deterministic given the spec (timing fields aside).
inline TrialLog run_trial(const ScenarioSpec &spec, const TrialOptions &options = {}) {
    TrialLog log;
    log.world = realize_trial(spec);

    const GridParams params = GridParams::from_cell_size(spec.half_extent, spec.cell_size);
    MapProvider provider(log.world.obstacles, params, spec.dt, spec.robot_radius);
    const CftocConfig config = controller_config(spec);
    Controller controller(provider, config, log.world.start, log.world.goal);

    TrialStats &stats = log.stats;
    stats.collided = disc_intersects_obstacles(log.world.obstacles,
                                               log.world.start.position(),
                                               spec.robot_radius, 0.0);

    double passes = 0.0;
    bool crossed_goal = false;
    for (int t = 0; t < spec.step_budget && !stats.collided && !crossed_goal; ++t) {
        ControlStepRecord rec = controller.advance();
        if (rec.arrived) break;

        for (int j = 1; j <= 10 && !stats.collided && !crossed_goal; ++j) {
            // The discrete model moves in a straight segment per step, so
            // linear interpolation of the position is exact.
            const double tau = static_cast<double>(j) / 10.0;
            const Vec2 p = (1.0 - tau) * rec.state.position() + tau * rec.next_state.position();
            stats.collided = disc_intersects_obstacles(log.world.obstacles, p, spec.robot_radius,
                                                       (rec.step + tau) * spec.dt);
            if (!stats.collided && (p - log.world.goal).norm() <= config.arrival_radius)
                crossed_goal = true;
        }

        stats.trajectory_length += (rec.next_state.position() - rec.state.position()).norm();
        stats.infeasible_steps += rec.feasible ? 0 : 1;
        log.solve_ms.push_back(1e3 * rec.solve_seconds);
        passes += rec.linearizations;
        if (options.keep_polytopes_every <= 0 ||
            rec.step % options.keep_polytopes_every != 0)
            rec.polytopes.clear();
        log.records.push_back(std::move(rec));
    }

    stats.steps_used = static_cast<int>(log.records.size());
    stats.reached =
        crossed_goal ||
        (controller.state().position() - log.world.goal).norm() <= config.arrival_radius;
    stats.feasible = stats.reached && !stats.collided;

    const size_t n = log.solve_ms.size();
    if (n > 0) {
        double sum = 0.0;
        for (const double ms : log.solve_ms) sum += ms;
        stats.mean_solve_ms = sum / static_cast<double>(n);
        double sq = 0.0;
        for (const double ms : log.solve_ms) sq += (ms - stats.mean_solve_ms) * (ms - stats.mean_solve_ms);
        stats.std_solve_ms = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
        stats.mean_passes = passes / static_cast<double>(n);
    }
    return log;
}

namespace detail {

// Shortest round-trippable decimal form, so repeated runs serialize states
// byte-identically.
inline std::string csv_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

class CsvFile {
public:
    explicit CsvFile(const std::string &path) : file_(std::fopen(path.c_str(), "w")) {
        if (!file_) throw std::runtime_error("cannot write '" + path + "'");
    }
    ~CsvFile() {
        if (file_) std::fclose(file_);
    }
    CsvFile(const CsvFile &) = delete;
    CsvFile &operator=(const CsvFile &) = delete;

    void line(const std::string &text) {
        std::fputs(text.c_str(), file_);
        std::fputc('\n', file_);
    }

private:
    std::FILE *file_;
};

}  // namespace detail

// Per-step trajectory dump.  All columns except solve_ms are deterministic
// functions of the scenario and seed; solve_ms is wall-clock measurement.
inline void write_trajectory_csv(const TrialLog &log, double dt, const std::string &path) {
    detail::CsvFile out(path);
    out.line("step,time_s,x,y,theta,v,u1,u2,iterations,solve_ms,feasible_step");
    for (const ControlStepRecord &rec : log.records) {
        char solve[32];
        std::snprintf(solve, sizeof(solve), "%.6f", 1e3 * rec.solve_seconds);
        out.line(std::to_string(rec.step) + "," + detail::csv_double(rec.step * dt) + "," +
                 detail::csv_double(rec.state.x) + "," + detail::csv_double(rec.state.y) + "," +
                 detail::csv_double(rec.state.theta) + "," + detail::csv_double(rec.state.v) +
                 "," + detail::csv_double(rec.input.turn_rate) + "," +
                 detail::csv_double(rec.input.accel) + "," + std::to_string(rec.linearizations) +
                 "," + solve + "," + (rec.feasible ? "1" : "0"));
    }
}

// One safe region as half-plane rows (a_x, a_y, b with a.p + b >= 0 inside)
// followed by its corner points.
inline void write_polytope_csv(const SafePolytope &poly, const std::string &path) {
    detail::CsvFile out(path);
    out.line("kind,index,a_x,a_y,b");
    for (size_t i = 0; i < poly.edges.size(); ++i) {
        const HalfPlane &edge = poly.edges[i];
        out.line("edge," + std::to_string(i) + "," + detail::csv_double(edge.normal.x()) + "," +
                 detail::csv_double(edge.normal.y()) + "," + detail::csv_double(edge.offset));
    }
    const std::vector<Vec2> corners = poly.vertices();
    for (size_t i = 0; i < corners.size(); ++i)
        out.line("vertex," + std::to_string(i) + "," + detail::csv_double(corners[i].x()) + "," +
                 detail::csv_double(corners[i].y()) + ",");
}

// Writes the polytope guarding the first horizon step of every record that
// kept its regions; returns how many files were written.
inline int write_polytope_series(const TrialLog &log, const std::string &directory) {
    int written = 0;
    for (const ControlStepRecord &rec : log.records) {
        if (rec.polytopes.empty()) continue;
        write_polytope_csv(rec.polytopes.front(),
                           directory + "/polytope_" + std::to_string(rec.step) + ".csv");
        ++written;
    }
    return written;
}

inline void write_path_csv(const GridPath &path, const std::string &file_path) {
    detail::CsvFile out(file_path);
    out.line("index,x,y");
    for (size_t i = 0; i < path.metric_points.size(); ++i)
        out.line(std::to_string(i) + "," + detail::csv_double(path.metric_points[i].x()) + "," +
                 detail::csv_double(path.metric_points[i].y()));
}

}  // namespace gridmpc

#endif  // GRIDMPC_SIMULATE_HPP
