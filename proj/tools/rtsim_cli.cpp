// Runs a scene under the real-time loop and reports the physics rate.
#include "rtsim/bench.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Run a scene and record the physics update rate"};
    rtsim::BenchmarkSpec spec;
    std::string scene;
    double period = 0.0, slack = -1.0, seconds = 0.0;
    int subdivision = -1;
    std::string out;
    app.add_option("scene", scene, "scene description (JSON)")->required();
    app.add_option("--period", period, "physics period T in seconds (default: the scene's)");
    app.add_option("--slack", slack, "slack t_s in seconds (default: the scene's)");
    app.add_option("--steps", spec.steps, "number of physics steps");
    app.add_option("--seconds", seconds, "simulated duration instead of --steps");
    app.add_option("--subdivision", subdivision, "subdivision level for every visual body");
    app.add_flag("--deterministic", spec.deterministic, "fixed dt = T, no sleeping");
    app.add_option("--out", out, "raw records file: step,dt_seconds,wall_period_seconds");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    spec.scene = scene;
    spec.out = out;
    if (app.count("--period")) spec.period = period;
    if (app.count("--slack")) spec.slack = slack;
    if (app.count("--seconds")) spec.duration = seconds;
    if (app.count("--subdivision")) spec.subdivision = subdivision;

    try {
        const auto result = rtsim::run_benchmark(spec);
        std::cout << "scene: " << scene << '\n';
        if (result.stats.periods.empty())
            std::cout << "steps: " << result.stats.steps << "\nclamp_violations: " << result.stats.clamp_violations
                      << "\n(fewer than 100 steps, no rate summary)\n";
        else
            result.stats.write(std::cout);
        std::cout << "resyncs: " << result.loop.resyncs << '\n'
                  << "elapsed: " << result.loop.elapsed << '\n';
        return result.stats.clamp_violations > 0 ? 2 : 0;
    } catch (const rtsim::AssetError& e) {
        std::cerr << "asset error: " << e.what() << '\n';
        return 3;
    } catch (const rtsim::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
