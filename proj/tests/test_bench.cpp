#include "rtsim/bench.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace rtsim;

namespace {

std::vector<LoopRecord> periods(const std::vector<double>& wall, double dt = 0.005) {
    std::vector<LoopRecord> out;
    for (std::size_t i = 0; i < wall.size(); ++i) out.push_back({i, dt, wall[i], 0.0});
    return out;
}

std::filesystem::path scene_file(const std::string& name) { return std::filesystem::path(RTSIM_SCENE_DIR) / name; }

}  // namespace

TEST(Summary, ConstantPeriod) {
    const auto s = summarize(periods(std::vector<double>(200, 0.005)), 0.005, 0.002);
    EXPECT_NEAR(s.median_rate, 200.0, 1e-9);
    EXPECT_EQ(s.spread, 0.0);
    EXPECT_EQ(s.clamp_violations, 0u);
    EXPECT_EQ(s.discarded, 10u);
    EXPECT_EQ(s.periods.size(), 190u);
}

TEST(Summary, AlternatingPeriods) {
    std::vector<double> w;
    for (int i = 0; i < 400; ++i) w.push_back(i % 2 ? 0.006 : 0.004);
    const auto s = summarize(periods(w), 0.005, 0.002);
    EXPECT_NEAR(s.median_rate, 200.0, 1e-9);
    EXPECT_NEAR(s.spread, 1.0 / 0.004 - 1.0 / 0.006, 1e-9);
}

TEST(Summary, TooFewRecords) { EXPECT_THROW(summarize(periods(std::vector<double>(99, 0.005)), 0.005, 0.002), ConfigError); }

TEST(Summary, CountsClampViolations) {
    auto r = periods(std::vector<double>(100, 0.005));
    r[3].dt = 0.0071;
    r[50].dt = 0.0049;
    r[60].dt = 0.007;  // exactly T + t_s is allowed
    const auto s = summarize(r, 0.005, 0.002);
    EXPECT_EQ(s.clamp_violations, 2u);
    EXPECT_EQ(s.overloads, 2u);
}

// Linear interpolation between order statistics, checked by hand.
TEST(Summary, Percentile) {
    EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 0.1), 1.4);
    EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 0.9), 4.6);
    EXPECT_DOUBLE_EQ(percentile({7}, 0.3), 7.0);
    EXPECT_THROW(percentile({}, 0.5), ConfigError);
}

TEST(Records, RoundTrip) {
    LoopStats l;
    l.records = periods({0.0051, 0.00523456789012345, 1.0 / 3.0});
    l.records[1].dt = 0.0061234567890123;
    std::stringstream io;
    l.write_records(io);
    const auto back = read_records(io);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].step, l.records[i].step);
        EXPECT_EQ(back[i].dt, l.records[i].dt);
        EXPECT_EQ(back[i].wall_period, l.records[i].wall_period);
    }
    std::istringstream bad("0,0.005\n");
    EXPECT_THROW(read_records(bad), ParseError);
}

TEST(Benchmark, SpecValidation) {
    BenchmarkSpec s;
    s.scene = scene_file("bunny_756.json");
    EXPECT_THROW(s.validate(), ConfigError);  // no duration
    s.duration = 0.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s.duration = 0.1;
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.step_count(0.005), 20u);
    s.subdivision = 7;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Benchmark, MissingScene) {
    BenchmarkSpec s;
    s.scene = "/nonexistent/scene.json";
    s.steps = 10;
    EXPECT_THROW(run_benchmark(s), AssetError);
}

TEST(Benchmark, RecordFileHasOneRowPerStep) {
    BenchmarkSpec s;
    s.scene = scene_file("bunny_756.json");
    s.steps = 120;
    s.deterministic = true;
    s.out = std::filesystem::temp_directory_path() / "rtsim_bench_records.csv";
    const auto r = run_benchmark(s);
    std::ifstream f(s.out);
    const auto rows = read_records(f);
    EXPECT_EQ(rows.size(), 120u);
    EXPECT_EQ(r.stats.steps, 120u);
    EXPECT_EQ(r.stats.clamp_violations, 0u);
    for (const auto& row : rows) EXPECT_EQ(row.dt, 0.0051);
}
