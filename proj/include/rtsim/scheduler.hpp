#pragma once

#include "rtsim/types.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <iosfwd>
#include <optional>

namespace rtsim {

struct SchedulerConfig {
    double period = 0.005;  // T, s
    double slack = 0.002;   // t_s, s
    std::optional<std::uint64_t> max_steps;
    // Fixed dt = T, no sleeping: reproducible runs.
    bool deterministic = false;

    void validate() const;
};

// dt = min(T + t_d, T + t_s); t_d is the wake-up lateness (>= 0).
double compute_timestep(double period, double lateness, double slack);

struct LoopRecord {
    std::uint64_t step = 0;
    double dt = 0.0;           // simulated step, s
    double wall_period = 0.0;  // wall time since the previous wake-up, s
    double lateness = 0.0;     // t_d, s
};

struct LoopStats {
    std::vector<LoopRecord> records;
    std::uint64_t overloads = 0;  // steps with t_d > t_s
    std::uint64_t resyncs = 0;    // wake grid re-anchored after falling a period behind
    double elapsed = 0.0;         // wall, s

    double achieved_rate() const;  // steps per wall second
    // One line per step: "step,dt_seconds,wall_period_seconds".
    void write_records(std::ostream& out) const;
};

/// Periodic stepping on an absolute wake-up grid t_k = t_0 + k T. The
/// lateness of each wake-up feeds compute_timestep. When a step overruns
/// by more than a full period the grid is re-anchored at the current time
/// instead of replaying the missed wake-ups back to back.
class PhysicsLoop {
public:
    using StepFn = std::function<void(std::uint64_t step, double dt)>;
    using Clock = std::chrono::steady_clock;

    explicit PhysicsLoop(SchedulerConfig cfg);

    const SchedulerConfig& config() const { return cfg_; }

    // Runs until max_steps or until `stop` becomes true (checked before
    // each step). Without either, runs until stop is requested.
    LoopStats run(const StepFn& step, const std::atomic<bool>* stop = nullptr);

private:
    SchedulerConfig cfg_;
};

}  // namespace rtsim
