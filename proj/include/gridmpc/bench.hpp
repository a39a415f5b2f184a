#ifndef GRIDMPC_BENCH_HPP
#define GRIDMPC_BENCH_HPP

#include "gridmpc/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

namespace gridmpc {

// Sweep definition: obstacle counts crossed with horizon lengths, a fixed
// number of randomized trials per cell.
struct BenchConfig {
    std::string shape = "square";      // square | fan
    std::vector<int> obstacle_counts;  // empty: defaults for the shape
    std::vector<int> horizons{10, 30};
    int trials_per_cell = 20;
    std::uint64_t master_seed = 1;
    int threads = 1;
    int step_budget = 1500;
    bool paper_scale = false;  // full-resolution 1/12 m cells

    std::vector<int> resolved_counts() const {
        if (!obstacle_counts.empty()) return obstacle_counts;
        return shape == "fan" ? std::vector<int>{4} : std::vector<int>{30, 50};
    }

    void validate() const {
        if (shape != "square" && shape != "fan")
            throw ScenarioError("bench: shape must be square or fan");
        if (trials_per_cell < 1) throw ScenarioError("bench: trials must be >= 1");
        if (threads < 1) throw ScenarioError("bench: threads must be >= 1");
        if (step_budget < 1) throw ScenarioError("bench: step budget must be >= 1");
        for (const int n : resolved_counts())
            if (n < 0) throw ScenarioError("bench: obstacle counts must be non-negative");
        if (horizons.empty()) throw ScenarioError("bench: need at least one horizon");
        for (const int h : horizons)
            if (h < 1) throw ScenarioError("bench: horizons must be >= 1");
    }
};

// One sweep cell's aggregate: per-step solve times pooled over every step of
// every trial in the cell, and the fraction of trials that reached the goal
// without collision.
struct BenchCellResult {
    std::string shape;
    int n_obstacles = 0;
    int horizon = 0;
    int trials = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double feasibility = 0.0;
    long pooled_steps = 0;
};

inline ScenarioSpec bench_trial_spec(const BenchConfig &config, int n_obstacles, int horizon,
                                     std::uint64_t seed) {
    ScenarioSpec spec = config.shape == "fan" ? fan_bench_scenario(n_obstacles)
                                              : square_bench_scenario(n_obstacles);
    if (config.paper_scale) spec.cell_size = 1.0 / 12.0;
    spec.horizon = horizon;
    spec.step_budget = config.step_budget;
    spec.seed = seed;
    return spec;
}

// Runs the sweep.  Trials are distributed over a small worker pool; every
// trial's seed is fixed up front from the master seed and its global index,
// so results do not depend on scheduling.  Trials that fail to set up (for
// example, no endpoints with the required clearance) count as infeasible.
inline std::vector<BenchCellResult> run_benchmark(const BenchConfig &config) {
    config.validate();
    const std::vector<int> counts = config.resolved_counts();

    struct TrialSlot {
        TrialStats stats;
        std::vector<double> solve_ms;
    };
    struct Task {
        int cell = 0;
        ScenarioSpec spec;
    };

    std::vector<Task> tasks;
    int cell_index = 0;
    for (const int n : counts) {
        for (const int horizon : config.horizons) {
            for (int trial = 0; trial < config.trials_per_cell; ++trial) {
                const std::uint64_t index = tasks.size();
                tasks.push_back(
                    {cell_index, bench_trial_spec(config, n, horizon,
                                                  mix_seed(config.master_seed, index))});
            }
            ++cell_index;
        }
    }

    std::vector<TrialSlot> slots(tasks.size());
    std::atomic<size_t> next{0};
    const auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            try {
                TrialLog log = run_trial(tasks[i].spec);
                slots[i].stats = log.stats;
                slots[i].solve_ms = std::move(log.solve_ms);
            } catch (const std::exception &e) {
                std::fprintf(stderr, "bench: trial %zu failed to run: %s\n", i, e.what());
            }
        }
    };
    if (config.threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < config.threads; ++t) pool.emplace_back(worker);
        for (std::thread &t : pool) t.join();
    }

    std::vector<BenchCellResult> cells(static_cast<size_t>(cell_index));
    cell_index = 0;
    for (const int n : counts) {
        for (const int horizon : config.horizons) {
            BenchCellResult &cell = cells[static_cast<size_t>(cell_index)];
            cell.shape = config.shape;
            cell.n_obstacles = n;
            cell.horizon = horizon;
            cell.trials = config.trials_per_cell;
            ++cell_index;
        }
    }
    for (size_t i = 0; i < tasks.size(); ++i) {
        BenchCellResult &cell = cells[static_cast<size_t>(tasks[i].cell)];
        cell.feasibility += slots[i].stats.feasible ? 1.0 : 0.0;
        for (const double ms : slots[i].solve_ms) {
            cell.mean_ms += ms;  // accumulate the sum first
            ++cell.pooled_steps;
        }
    }
    for (BenchCellResult &cell : cells) {
        cell.feasibility /= static_cast<double>(cell.trials);
        if (cell.pooled_steps > 0) cell.mean_ms /= static_cast<double>(cell.pooled_steps);
    }
    for (size_t i = 0; i < tasks.size(); ++i) {
        BenchCellResult &cell = cells[static_cast<size_t>(tasks[i].cell)];
        for (const double ms : slots[i].solve_ms)
            cell.std_ms += (ms - cell.mean_ms) * (ms - cell.mean_ms);
    }
    for (BenchCellResult &cell : cells)
        cell.std_ms = cell.pooled_steps > 1
                          ? std::sqrt(cell.std_ms / static_cast<double>(cell.pooled_steps - 1))
                          : 0.0;
    return cells;
}

inline void write_stats_csv(const std::vector<BenchCellResult> &cells, const std::string &path) {
    detail::CsvFile out(path);
    out.line("shape,n_obstacles,horizon,trials,mean_ms,std_ms,feasibility_rate");
    for (const BenchCellResult &cell : cells) {
        char row[160];
        std::snprintf(row, sizeof(row), "%s,%d,%d,%d,%.3f,%.3f,%.3f", cell.shape.c_str(),
                      cell.n_obstacles, cell.horizon, cell.trials, cell.mean_ms, cell.std_ms,
                      cell.feasibility);
        out.line(row);
    }
}

// Human-readable summary grid, one row per horizon and one column per
// obstacle count.
inline std::string format_stats_table(const std::vector<BenchCellResult> &cells) {
    if (cells.empty()) return "(no cells)\n";
    std::vector<int> counts, horizons;
    for (const BenchCellResult &cell : cells) {
        if (std::find(counts.begin(), counts.end(), cell.n_obstacles) == counts.end())
            counts.push_back(cell.n_obstacles);
        if (std::find(horizons.begin(), horizons.end(), cell.horizon) == horizons.end())
            horizons.push_back(cell.horizon);
    }
    const auto find_cell = [&](int n, int horizon) -> const BenchCellResult * {
        for (const BenchCellResult &cell : cells)
            if (cell.n_obstacles == n && cell.horizon == horizon) return &cell;
        return nullptr;
    };

    std::string text = cells.front().shape + " obstacles, " +
                       std::to_string(cells.front().trials) + " trials per cell\n";
    char buf[96];
    text += "          ";
    for (const int n : counts) {
        std::snprintf(buf, sizeof(buf), " %20s", ("n = " + std::to_string(n)).c_str());
        text += buf;
    }
    text += "\n";
    for (const int horizon : horizons) {
        std::snprintf(buf, sizeof(buf), "  N = %-4d", horizon);
        text += buf;
        for (const int n : counts) {
            const BenchCellResult *cell = find_cell(n, horizon);
            if (!cell) {
                std::snprintf(buf, sizeof(buf), " %20s", "-");
            } else {
                char inner[64];
                std::snprintf(inner, sizeof(inner), "%.2f±%.2f ms %3.0f%%", cell->mean_ms,
                              cell->std_ms, 100.0 * cell->feasibility);
                std::snprintf(buf, sizeof(buf), " %20s", inner);
            }
            text += buf;
        }
        text += "\n";
    }
    return text;
}

}  // namespace gridmpc

#endif  // GRIDMPC_BENCH_HPP
