#include "rtsim/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace rtsim {

void BenchmarkSpec::validate() const {
    if (duration) {
        if (!(*duration > 0.0) || !std::isfinite(*duration)) throw ConfigError("benchmark duration must be > 0");
    } else if (steps == 0) {
        throw ConfigError("benchmark duration must be > 0 (give steps or seconds)");
    }
    if (period && !(*period > 0.0)) throw ConfigError("period must be > 0");
    if (slack && !(*slack >= 0.0)) throw ConfigError("slack must be >= 0");
    if (subdivision && (*subdivision < 0 || *subdivision > kMaxSubdivisionLevel))
        throw ConfigError("subdivision must lie in 0.." + std::to_string(kMaxSubdivisionLevel));
}

std::uint64_t BenchmarkSpec::step_count(double t) const {
    if (!duration) return steps;
    return static_cast<std::uint64_t>(std::ceil(*duration / t - 1e-9));
}

void RateStats::write(std::ostream& out) const {
    const auto old = out.precision(10);
    out << "steps: " << steps << '\n'
        << "discarded: " << discarded << '\n'
        << "median_rate: " << median_rate << '\n'
        << "spread: " << spread << '\n'
        << "clamp_violations: " << clamp_violations << '\n'
        << "overloads: " << overloads << '\n';
    out.precision(old);
}

double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw ConfigError("percentile of an empty set");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return v[lo] + f * (v[hi] - v[lo]);
}

std::uint64_t count_clamp_violations(const std::vector<LoopRecord>& records, double period, double slack) {
    return static_cast<std::uint64_t>(std::count_if(records.begin(), records.end(), [&](const LoopRecord& r) {
        return r.dt < period || r.dt > period + slack;
    }));
}

RateStats summarize(const std::vector<LoopRecord>& records, double period, double slack) {
    if (records.size() < 100)
        throw ConfigError("summary needs at least 100 records, got " + std::to_string(records.size()));
    RateStats s;
    s.steps = records.size();
    s.discarded = records.size() / 20;
    s.clamp_violations = count_clamp_violations(records, period, slack);
    // dt reaches T + t_s exactly when the lateness exceeded the slack.
    for (const auto& r : records)
        if (r.dt >= period + slack) ++s.overloads;
    for (std::size_t i = s.discarded; i < records.size(); ++i) s.periods.push_back(records[i].wall_period);
    s.median_rate = 1.0 / percentile(s.periods, 0.5);
    s.spread = 1.0 / percentile(s.periods, 0.1) - 1.0 / percentile(s.periods, 0.9);
    return s;
}

std::vector<LoopRecord> read_records(std::istream& in) {
    std::vector<LoopRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        std::istringstream ls(line);
        LoopRecord r;
        char c1 = 0, c2 = 0;
        if (!(ls >> r.step >> c1 >> r.dt >> c2 >> r.wall_period) || c1 != ',' || c2 != ',')
            throw ParseError("expected step,dt,wall", static_cast<int>(n));
        out.push_back(r);
    }
    return out;
}

BenchmarkResult run_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    SceneConfig config = load_scene_config(spec.scene);
    if (spec.period) config.scheduler.period = *spec.period;
    if (spec.slack) config.scheduler.slack = *spec.slack;
    config.scheduler.deterministic = spec.deterministic;
    config.scheduler.max_steps = spec.step_count(config.scheduler.period);
    auto scene = build_scene(config);
    if (spec.subdivision) scene->set_subdivision(*spec.subdivision);

    BenchmarkResult result;
    result.run = run_realtime(*scene, config.scheduler);
    result.loop = result.run.loop;
    if (!spec.out.empty()) {
        std::ofstream f(spec.out);
        if (!f) throw AssetError("cannot write records to " + spec.out.string());
        result.loop.write_records(f);
        if (!f) throw AssetError("failed writing records to " + spec.out.string());
    }
    if (result.loop.records.size() >= 100)
        result.stats = summarize(result.loop.records, config.scheduler.period, config.scheduler.slack);
    else {
        result.stats.steps = result.loop.records.size();
        result.stats.clamp_violations =
            count_clamp_violations(result.loop.records, config.scheduler.period, config.scheduler.slack);
    }
    return result;
}

}  // namespace rtsim
