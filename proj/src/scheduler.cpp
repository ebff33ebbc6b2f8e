#include "rtsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <thread>

namespace rtsim {

void SchedulerConfig::validate() const {
    if (!(period > 0.0) || !std::isfinite(period)) throw ConfigError("scheduler period must be > 0");
    if (!(slack >= 0.0) || !std::isfinite(slack)) throw ConfigError("scheduler slack must be >= 0");
    if (max_steps && *max_steps == 0) throw ConfigError("scheduler max_steps must be > 0");
}

double compute_timestep(double period, double lateness, double slack) {
    return std::min(period + lateness, period + slack);
}

double LoopStats::achieved_rate() const { return elapsed > 0.0 ? static_cast<double>(records.size()) / elapsed : 0.0; }

void LoopStats::write_records(std::ostream& out) const {
    const auto old = out.precision(17);
    for (const auto& r : records) out << r.step << ',' << r.dt << ',' << r.wall_period << '\n';
    out.precision(old);
}

PhysicsLoop::PhysicsLoop(SchedulerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

LoopStats PhysicsLoop::run(const StepFn& step, const std::atomic<bool>* stop) {
    using std::chrono::duration;
    using std::chrono::duration_cast;
    LoopStats stats;
    if (cfg_.max_steps) stats.records.reserve(*cfg_.max_steps);
    const auto period = duration_cast<Clock::duration>(duration<double>(cfg_.period));
    const auto start = Clock::now();
    auto anchor = start;
    std::uint64_t ticks = 0;  // wake-ups since the anchor
    auto previous = start;

    for (std::uint64_t k = 0;; ++k) {
        if (cfg_.max_steps && k >= *cfg_.max_steps) break;
        if (stop && stop->load(std::memory_order_acquire)) break;

        LoopRecord rec;
        rec.step = k;
        Clock::time_point woke;
        if (cfg_.deterministic) {
            woke = Clock::now();
            rec.dt = cfg_.period;
        } else {
            const auto planned = anchor + (ticks + 1) * period;
            std::this_thread::sleep_until(planned);
            woke = Clock::now();
            rec.lateness = std::max(0.0, duration<double>(woke - planned).count());
            rec.dt = compute_timestep(cfg_.period, rec.lateness, cfg_.slack);
            if (rec.lateness > cfg_.slack) ++stats.overloads;
            if (woke - planned > period) {
                anchor = woke;
                ticks = 0;
                ++stats.resyncs;
            } else {
                ++ticks;
            }
        }
        rec.wall_period = duration<double>(woke - previous).count();
        previous = woke;
        step(k, rec.dt);
        stats.records.push_back(rec);
    }
    stats.elapsed = duration<double>(Clock::now() - start).count();
    return stats;
}

}  // namespace rtsim
