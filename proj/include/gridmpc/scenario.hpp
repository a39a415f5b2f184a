#ifndef GRIDMPC_SCENARIO_HPP
#define GRIDMPC_SCENARIO_HPP

#include "gridmpc/distance_map.hpp"
#include "gridmpc/dynamics.hpp"
#include "gridmpc/grid_map.hpp"
#include "gridmpc/jps.hpp"
#include "gridmpc/obstacles.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridmpc {

// Problem with a scenario file or with sampling a trial from it.  Carries a
// message naming the offending field so the CLI can print it verbatim.
struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One obstacle entry: a concrete shape plus the ranges the per-trial
// randomization draws from.  A zero-width range (max <= 0) leaves the
// corresponding field exactly as authored.
struct ScenarioObstacle {
    ObstacleShape shape;
    bool randomize_pose = false;
    double speed_min = 0.0, speed_max = 0.0;  // linear speed magnitude
    double spin_min = 0.0, spin_max = 0.0;    // angular velocity
};

// Declarative description of one closed-loop experiment: the map, the robot,
// the goal, the obstacle population, and the solve dimensions.
struct ScenarioSpec {
    int format_version = 1;
    double half_extent = 50.0;
    double cell_size = 5.0 / 12.0;
    StateVector start{-45.0, -45.0, M_PI / 4.0, 25.0};
    Vec2 goal{45.0, 45.0};
    double robot_radius = 1.0;
    double v_ref = 25.0;
    int horizon = 30;
    int step_budget = 3000;
    double dt = 0.01;
    std::uint64_t seed = 0;
    bool randomize_endpoints = false;  // draw start/goal in free space per trial
    bool constant_speed = false;       // pin acceleration to zero
    double endpoint_clearance = 5.0;   // minimum obstacle distance when drawing
    std::vector<ScenarioObstacle> obstacles;

    void validate() const {
        if (format_version != 1)
            throw ScenarioError("scenario: unsupported format_version " +
                                std::to_string(format_version));
        if (half_extent <= 0.0) throw ScenarioError("scenario: map.half_extent must be positive");
        if (cell_size <= 0.0) throw ScenarioError("scenario: map.cell_size must be positive");
        if (robot_radius <= 0.0) throw ScenarioError("scenario: robot.radius must be positive");
        if (v_ref <= 0.0) throw ScenarioError("scenario: robot.v_ref must be positive");
        if (horizon < 1) throw ScenarioError("scenario: horizon must be >= 1");
        if (step_budget < 1) throw ScenarioError("scenario: step_budget must be >= 1");
        if (dt <= 0.0) throw ScenarioError("scenario: dt must be positive");
        if (endpoint_clearance < 0.0)
            throw ScenarioError("scenario: endpoint_clearance must be non-negative");
        for (size_t i = 0; i < obstacles.size(); ++i) {
            const ScenarioObstacle &o = obstacles[i];
            const std::string where = "obstacles[" + std::to_string(i) + "]";
            try {
                o.shape.validate();
            } catch (const std::invalid_argument &e) {
                throw ScenarioError("scenario: " + where + ": " + e.what());
            }
            if (o.speed_min > o.speed_max || o.speed_min < 0.0)
                throw ScenarioError("scenario: " + where + ".speed_range must be ordered and non-negative");
            if (o.spin_min > o.spin_max)
                throw ScenarioError("scenario: " + where + ".spin_range must be ordered");
        }
    }
};

// Uniform doubles built from the raw engine output so results are identical
// on every platform; the standard distributions are not pinned down.
class TrialRng {
public:
    explicit TrialRng(std::uint64_t seed) : engine_(seed) {}

    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + unit() * (hi - lo); }

private:
    std::mt19937_64 engine_;
};

// Stable combination of a master seed with a trial index (splitmix-style),
// so benchmark trials are reproducible independent of execution order.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// A scenario with its random fields resolved: concrete obstacle poses and
// velocities, concrete endpoints.
struct RealizedTrial {
    std::vector<ObstacleShape> obstacles;
    StateVector start;
    Vec2 goal;
};

// Draws the randomized fields in a fixed order (per obstacle: pose, speed,
// spin; then endpoints) so a seed fully determines the world.
inline RealizedTrial realize_trial(const ScenarioSpec &spec) {
    spec.validate();
    TrialRng rng(spec.seed);
    RealizedTrial out;
    out.start = spec.start;
    out.goal = spec.goal;

    for (const ScenarioObstacle &entry : spec.obstacles) {
        ObstacleShape shape = entry.shape;
        if (entry.randomize_pose) {
            const double lim = std::max(0.0, spec.half_extent - shape.circumradius());
            shape.center = Vec2(rng.uniform(-lim, lim), rng.uniform(-lim, lim));
            shape.rotation = rng.uniform(0.0, 2.0 * M_PI);
        }
        if (entry.speed_max > 0.0) {
            const double speed = rng.uniform(entry.speed_min, entry.speed_max);
            // Aim across the central region so the obstacle stays relevant
            // for most of the trial; the rasterizer clips whatever exits.
            const Vec2 target(rng.uniform(-0.5, 0.5) * spec.half_extent,
                              rng.uniform(-0.5, 0.5) * spec.half_extent);
            Vec2 dir = target - shape.center;
            const double norm = dir.norm();
            shape.linear_velocity = norm > 1e-9 ? Vec2(speed / norm * dir) : Vec2(speed, 0.0);
        }
        if (entry.spin_max > 0.0)
            shape.angular_velocity = rng.uniform(entry.spin_min, entry.spin_max);
        out.obstacles.push_back(shape);
    }

    if (spec.randomize_endpoints) {
        const GridParams params = GridParams::from_cell_size(spec.half_extent, spec.cell_size);
        const OccupancyGrid grid =
            rasterize(out.obstacles, 0, spec.dt, spec.robot_radius, params);
        const DistanceMap clearance = DistanceMap::build(grid);
        const double lim = spec.half_extent - spec.cell_size;

        const auto draw_clear_point = [&]() -> Vec2 {
            for (int attempt = 0; attempt < 1000; ++attempt) {
                const Vec2 p(rng.uniform(-lim, lim), rng.uniform(-lim, lim));
                // The map edge is as unsafe as an obstacle: a goal hugging the
                // boundary invites the tracker to swing outside while lining
                // up its final approach.
                const double margin =
                    std::min({clearance.sample(p), spec.half_extent - std::abs(p.x()),
                              spec.half_extent - std::abs(p.y())});
                if (margin >= spec.endpoint_clearance) return p;
            }
            throw ScenarioError("scenario: no free spot with the required clearance after 1000 draws");
        };

        const Vec2 start_pos = draw_clear_point();
        Vec2 goal_pos = start_pos;
        bool reachable = false;
        for (int attempt = 0; attempt < 100 && !reachable; ++attempt) {
            goal_pos = draw_clear_point();
            reachable = plan_path(grid, start_pos, goal_pos).ok();
        }
        if (!reachable)
            throw ScenarioError("scenario: no reachable goal found after 100 draws");
        const Vec2 to_goal = goal_pos - start_pos;
        out.start = StateVector{start_pos.x(), start_pos.y(),
                                std::atan2(to_goal.y(), to_goal.x()), spec.start.v};
        out.goal = goal_pos;
    }
    return out;
}

namespace detail {

inline const nlohmann::json &field(const nlohmann::json &j, const std::string &path,
                                   const char *key) {
    if (!j.is_object())
        throw ScenarioError("scenario: '" + path + "' must be an object");
    const auto it = j.find(key);
    if (it == j.end())
        throw ScenarioError("scenario: missing field '" +
                            (path.empty() ? std::string(key) : path + "." + key) + "'");
    return *it;
}

inline double number_at(const nlohmann::json &j, const std::string &where) {
    if (!j.is_number())
        throw ScenarioError("scenario: field '" + where + "' must be a number");
    return j.get<double>();
}

inline double number_field(const nlohmann::json &j, const std::string &path, const char *key) {
    return number_at(field(j, path, key),
                     path.empty() ? std::string(key) : path + "." + key);
}

inline int integer_field(const nlohmann::json &j, const std::string &path, const char *key) {
    const nlohmann::json &v = field(j, path, key);
    const std::string where = path.empty() ? std::string(key) : path + "." + key;
    if (!v.is_number_integer())
        throw ScenarioError("scenario: field '" + where + "' must be an integer");
    return v.get<int>();
}

inline bool bool_field(const nlohmann::json &j, const std::string &path, const char *key,
                       bool fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    const std::string where = path.empty() ? std::string(key) : path + "." + key;
    if (!it->is_boolean())
        throw ScenarioError("scenario: field '" + where + "' must be a boolean");
    return it->get<bool>();
}

inline std::vector<double> tuple_field(const nlohmann::json &j, const std::string &path,
                                       const char *key, size_t size) {
    const nlohmann::json &v = field(j, path, key);
    const std::string where = path.empty() ? std::string(key) : path + "." + key;
    if (!v.is_array() || v.size() != size)
        throw ScenarioError("scenario: field '" + where + "' must be an array of " +
                            std::to_string(size) + " numbers");
    std::vector<double> out;
    for (size_t i = 0; i < size; ++i)
        out.push_back(number_at(v.at(i), where + "[" + std::to_string(i) + "]"));
    return out;
}

inline ScenarioObstacle parse_obstacle(const nlohmann::json &j, const std::string &where) {
    ScenarioObstacle entry;
    const nlohmann::json &kind_json = field(j, where, "kind");
    if (!kind_json.is_string())
        throw ScenarioError("scenario: field '" + where + ".kind' must be a string");
    const std::string kind = kind_json.get<std::string>();
    try {
        if (kind == "square") {
            entry.shape = ObstacleShape::square(number_field(j, where, "side"));
        } else if (kind == "triangle") {
            entry.shape = ObstacleShape::triangle(number_field(j, where, "side"));
        } else if (kind == "circle") {
            entry.shape = ObstacleShape::circle(number_field(j, where, "radius"));
        } else if (kind == "fan") {
            entry.shape = ObstacleShape::fan(integer_field(j, where, "blades"),
                                             number_field(j, where, "blade_length"),
                                             number_field(j, where, "blade_width"));
        } else {
            throw ScenarioError("scenario: field '" + where +
                                ".kind' must be square, triangle, circle or fan");
        }
    } catch (const std::invalid_argument &e) {
        throw ScenarioError("scenario: " + where + ": " + e.what());
    }

    if (j.contains("center")) {
        const std::vector<double> c = tuple_field(j, where, "center", 2);
        entry.shape.center = Vec2(c[0], c[1]);
    }
    if (j.contains("rotation")) entry.shape.rotation = number_field(j, where, "rotation");
    if (j.contains("linear_velocity")) {
        const std::vector<double> v = tuple_field(j, where, "linear_velocity", 2);
        entry.shape.linear_velocity = Vec2(v[0], v[1]);
    }
    if (j.contains("angular_velocity"))
        entry.shape.angular_velocity = number_field(j, where, "angular_velocity");
    entry.randomize_pose = bool_field(j, where, "randomize_pose", false);
    if (j.contains("speed_range")) {
        const std::vector<double> r = tuple_field(j, where, "speed_range", 2);
        entry.speed_min = r[0];
        entry.speed_max = r[1];
    }
    if (j.contains("spin_range")) {
        const std::vector<double> r = tuple_field(j, where, "spin_range", 2);
        entry.spin_min = r[0];
        entry.spin_max = r[1];
    }
    return entry;
}

}  // namespace detail

// Builds a spec from parsed JSON, naming the offending field on any error.
inline ScenarioSpec parse_scenario(const nlohmann::json &j) {
    using detail::bool_field;
    using detail::field;
    using detail::integer_field;
    using detail::number_field;
    using detail::tuple_field;

    ScenarioSpec spec;
    spec.format_version = integer_field(j, "", "format_version");
    if (spec.format_version != 1)
        throw ScenarioError("scenario: unsupported format_version " +
                            std::to_string(spec.format_version));

    const nlohmann::json &map = field(j, "", "map");
    spec.half_extent = number_field(map, "map", "half_extent");
    spec.cell_size = number_field(map, "map", "cell_size");

    const nlohmann::json &robot = field(j, "", "robot");
    const std::vector<double> start = tuple_field(robot, "robot", "start", 4);
    spec.start = StateVector{start[0], start[1], start[2], start[3]};
    const std::vector<double> goal = tuple_field(robot, "robot", "goal", 2);
    spec.goal = Vec2(goal[0], goal[1]);
    spec.robot_radius = number_field(robot, "robot", "radius");
    spec.v_ref = number_field(robot, "robot", "v_ref");

    spec.horizon = integer_field(j, "", "horizon");
    spec.step_budget = integer_field(j, "", "step_budget");
    if (j.contains("dt")) spec.dt = number_field(j, "", "dt");
    if (j.contains("seed")) {
        const nlohmann::json &seed = field(j, "", "seed");
        if (!seed.is_number_integer() || seed.get<long long>() < 0)
            throw ScenarioError("scenario: field 'seed' must be a non-negative integer");
        spec.seed = seed.get<std::uint64_t>();
    }
    spec.randomize_endpoints = bool_field(j, "", "randomize_endpoints", false);
    spec.constant_speed = bool_field(j, "", "constant_speed", false);
    if (j.contains("endpoint_clearance"))
        spec.endpoint_clearance = number_field(j, "", "endpoint_clearance");

    const nlohmann::json &obstacles = field(j, "", "obstacles");
    if (!obstacles.is_array())
        throw ScenarioError("scenario: field 'obstacles' must be an array");
    for (size_t i = 0; i < obstacles.size(); ++i)
        spec.obstacles.push_back(detail::parse_obstacle(
            obstacles.at(i), "obstacles[" + std::to_string(i) + "]"));

    spec.validate();
    return spec;
}

inline ScenarioSpec load_scenario(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("scenario: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw ScenarioError("scenario: " + path + ": " + e.what());
    }
    return parse_scenario(j);
}

// The five moving squares the qualitative experiment uses.
inline ScenarioSpec five_squares_scenario() {
    ScenarioSpec spec;
    for (int i = 0; i < 5; ++i) {
        ScenarioObstacle entry;
        entry.shape = ObstacleShape::square(10.0);
        entry.randomize_pose = true;
        entry.speed_min = 6.0;
        entry.speed_max = 8.0;
        spec.obstacles.push_back(entry);
    }
    return spec;
}

// Benchmark sweep template: n moving squares with sides cycling 2..5 m and
// randomized poses, endpoints drawn per trial.
inline ScenarioSpec square_bench_scenario(int n_obstacles) {
    ScenarioSpec spec;
    spec.randomize_endpoints = true;
    for (int i = 0; i < n_obstacles; ++i) {
        ScenarioObstacle entry;
        entry.shape = ObstacleShape::square(2.0 + static_cast<double>(i % 4));
        entry.randomize_pose = true;
        entry.speed_min = 6.0;
        entry.speed_max = 8.0;
        spec.obstacles.push_back(entry);
    }
    return spec;
}

// Benchmark sweep template: n translating, spinning fans.
inline ScenarioSpec fan_bench_scenario(int n_obstacles, int blades = 3) {
    ScenarioSpec spec;
    spec.randomize_endpoints = true;
    for (int i = 0; i < n_obstacles; ++i) {
        ScenarioObstacle entry;
        entry.shape = ObstacleShape::fan(blades, 7.0, 2.0);
        entry.randomize_pose = true;
        entry.speed_min = 6.0;
        entry.speed_max = 8.0;
        entry.spin_min = 2.0;
        entry.spin_max = 8.0;
        spec.obstacles.push_back(entry);
    }
    return spec;
}

}  // namespace gridmpc

#endif  // GRIDMPC_SCENARIO_HPP
