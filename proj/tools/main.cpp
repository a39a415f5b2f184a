#include "gridmpc/bench.hpp"
#include "gridmpc/simulate.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

namespace {

struct CommonArgs {
    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> horizon;
    std::string out_dir = ".";
    int threads = 1;
};

gridmpc::ScenarioSpec load_with_overrides(const CommonArgs &args) {
    gridmpc::ScenarioSpec spec = gridmpc::load_scenario(args.scenario_path);
    if (args.seed) spec.seed = *args.seed;
    if (args.horizon) spec.horizon = *args.horizon;
    spec.validate();
    return spec;
}

void ensure_directory(const std::string &path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw std::runtime_error("cannot create directory '" + path + "': " + ec.message());
}

int run_plan(const CommonArgs &args) {
    const gridmpc::ScenarioSpec spec = load_with_overrides(args);
    const gridmpc::RealizedTrial world = gridmpc::realize_trial(spec);
    const gridmpc::GridParams params =
        gridmpc::GridParams::from_cell_size(spec.half_extent, spec.cell_size);
    const gridmpc::OccupancyGrid grid =
        gridmpc::rasterize(world.obstacles, 0, spec.dt, spec.robot_radius, params);

    const gridmpc::PlanResult plan =
        gridmpc::plan_path(grid, world.start.position(), world.goal);
    if (!plan.ok()) {
        std::fprintf(stderr, "plan: no path (%s)\n", gridmpc::to_string(plan.status));
        return 1;
    }
    ensure_directory(args.out_dir);
    const std::string out = args.out_dir + "/path.csv";
    gridmpc::write_path_csv(plan.path, out);
    std::printf("plan: %zu waypoints, cost %.6f, wrote %s\n", plan.path.metric_points.size(),
                plan.path.cost, out.c_str());
    return 0;
}

int run_simulate(const CommonArgs &args, int polytope_every) {
    const gridmpc::ScenarioSpec spec = load_with_overrides(args);
    gridmpc::TrialOptions options;
    options.keep_polytopes_every = polytope_every;
    const gridmpc::TrialLog log = gridmpc::run_trial(spec, options);

    ensure_directory(args.out_dir);
    gridmpc::write_trajectory_csv(log, spec.dt, args.out_dir + "/trajectory.csv");
    const int polytopes = gridmpc::write_polytope_series(log, args.out_dir);

    const gridmpc::TrialStats &stats = log.stats;
    std::printf("simulate: %s in %d steps (%.1f s), length %.2f m\n",
                stats.feasible ? "reached the goal" : (stats.collided ? "collided" : "timed out"),
                stats.steps_used, stats.steps_used * spec.dt, stats.trajectory_length);
    std::printf("simulate: solve %.2f ms mean (std %.2f), %d infeasible steps\n",
                stats.mean_solve_ms, stats.std_solve_ms, stats.infeasible_steps);
    std::printf("simulate: wrote %s/trajectory.csv and %d polytope files\n",
                args.out_dir.c_str(), polytopes);
    return 0;
}

int run_bench(gridmpc::BenchConfig config, const CommonArgs &args) {
    config.threads = args.threads;
    if (args.horizon) config.horizons = {*args.horizon};
    if (args.seed) config.master_seed = *args.seed;

    std::printf("bench: %s sweep, trials/cell %d, master seed %llu, budget %d steps\n",
                config.shape.c_str(), config.trials_per_cell,
                static_cast<unsigned long long>(config.master_seed), config.step_budget);
    std::puts("bench: obstacle poses, velocities and endpoints are re-drawn per trial seed");

    const std::vector<gridmpc::BenchCellResult> cells = gridmpc::run_benchmark(config);
    ensure_directory(args.out_dir);
    const std::string out = args.out_dir + "/stats.csv";
    gridmpc::write_stats_csv(cells, out);
    std::fputs(gridmpc::format_stats_table(cells).c_str(), stdout);
    std::printf("bench: wrote %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Grid-world trajectory planning and tracking toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    int polytope_every = 100;
    gridmpc::BenchConfig bench;

    CLI::App *plan = app.add_subcommand("plan", "one-shot grid path for a scenario");
    plan->add_option("--scenario", args.scenario_path, "scenario JSON file")->required();
    plan->add_option("--seed", args.seed, "override the scenario seed");
    plan->add_option("--out-dir", args.out_dir, "output directory");

    CLI::App *simulate = app.add_subcommand("simulate", "run one closed-loop trial");
    simulate->add_option("--scenario", args.scenario_path, "scenario JSON file")->required();
    simulate->add_option("--seed", args.seed, "override the scenario seed");
    simulate->add_option("--horizon", args.horizon, "override the horizon length");
    simulate->add_option("--out-dir", args.out_dir, "output directory");
    simulate->add_option("--threads", args.threads, "accepted for symmetry; a trial is serial");
    simulate->add_option("--polytope-every", polytope_every,
                         "dump the first-step safe region every K steps (0 = never)");

    CLI::App *bench_cmd = app.add_subcommand("bench", "randomized-trial sweep");
    bench_cmd->add_option("--shape", bench.shape, "square or fan");
    bench_cmd->add_option("--obstacles", bench.obstacle_counts, "obstacle counts to sweep");
    bench_cmd->add_option("--horizon", bench.horizons, "horizon lengths to sweep");
    bench_cmd->add_option("--trials", bench.trials_per_cell, "trials per sweep cell");
    bench_cmd->add_option("--seed", args.seed, "master seed");
    bench_cmd->add_option("--budget", bench.step_budget, "step budget per trial");
    bench_cmd->add_option("--out-dir", args.out_dir, "output directory");
    bench_cmd->add_option("--threads", args.threads, "worker threads");
    bench_cmd->add_flag("--paper-scale", bench.paper_scale, "full-resolution 1/12 m cells");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (plan->parsed()) return run_plan(args);
        if (simulate->parsed()) return run_simulate(args, polytope_every);
        return run_bench(bench, args);
    } catch (const gridmpc::ScenarioError &e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
