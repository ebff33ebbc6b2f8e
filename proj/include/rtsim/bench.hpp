#pragma once

#include "rtsim/scene.hpp"

#include <filesystem>
#include <iosfwd>

namespace rtsim {

struct BenchmarkSpec {
    std::filesystem::path scene;
    std::uint64_t steps = 0;          // used when duration is unset
    std::optional<double> duration;   // s of simulated time; steps = ceil(duration / T)
    std::optional<double> period;     // override of the scene's T
    std::optional<double> slack;
    std::optional<int> subdivision;   // applied to every visual body
    bool deterministic = false;
    std::filesystem::path out;        // raw records; empty: not written

    void validate() const;
    std::uint64_t step_count(double period) const;
};

struct RateStats {
    std::vector<double> periods;  // wall periods of the steady-state window, s
    std::size_t steps = 0;        // all recorded steps
    std::size_t discarded = 0;    // warm-up steps left out
    double median_rate = 0.0;     // 1 / median period
    double spread = 0.0;          // 1/p10 - 1/p90 of the periods
    std::uint64_t clamp_violations = 0;  // dt outside [T, T + t_s]
    std::uint64_t overloads = 0;        // steps whose dt hit T + t_s

    void write(std::ostream& out) const;  // "key: value" lines
};

// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

std::uint64_t count_clamp_violations(const std::vector<LoopRecord>& records, double period, double slack);

// Needs at least 100 records; the first 5% are warm-up.
RateStats summarize(const std::vector<LoopRecord>& records, double period, double slack);
// Reads "step,dt,wall" lines.
std::vector<LoopRecord> read_records(std::istream& in);

struct BenchmarkResult {
    RateStats stats;
    LoopStats loop;
    RunResult run;
};

// Throws AssetError for missing files, ConfigError for bad specs or scenes.
BenchmarkResult run_benchmark(const BenchmarkSpec& spec);

}  // namespace rtsim
