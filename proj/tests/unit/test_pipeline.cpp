#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "windcast/core/hash.hpp"
#include "windcast/core/text.hpp"
#include "windcast/pipeline/config.hpp"
#include "windcast/pipeline/manifest.hpp"
#include "windcast/pipeline/report.hpp"
#include "windcast/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace windcast;
using namespace windcast::pipeline;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("windcast_pipeline_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

/// Small synthetic run that finishes in a second or two.
std::vector<std::string> small(const fs::path& dir) {
    return {"output_dir=\"" + dir.string() + "\"",
            "input.synthetic.locations=60",
            "input.synthetic.steps=300",
            "knots.n_red=15",
            "esn.hyper.n_h=40",
            "esn.hyper.ensemble=2",
            "spde.mesh_vertices=150",
            "spde.max_snapshots=10",
            "seed=11",
            "threads=1"};
}

}  // namespace

TEST(Config, DefaultsAreValid) {
    const auto c = load_config(std::nullopt, {}, false);
    EXPECT_TRUE(c.synthetic.has_value());
    EXPECT_EQ(c.leads, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(c.alpha, 2);
}

TEST(Config, PrecedenceIsDefaultsFileEnvironmentAssignments) {
    const auto dir = scratch("precedence");
    write_text(dir / "cfg.json", R"({"knots": {"n_red": 21, "max_iter": 7}, "seed": 3})");
    ::setenv("WINDCAST_CFG_knots__n_red", "22", 1);
    ::setenv("WINDCAST_CFG_spde__alpha", "1", 1);
    const auto c = load_config(dir / "cfg.json", {"knots.n_red=23"});
    ::unsetenv("WINDCAST_CFG_knots__n_red");
    ::unsetenv("WINDCAST_CFG_spde__alpha");
    EXPECT_EQ(c.n_red, 23u);         // assignment beats environment
    EXPECT_EQ(c.alpha, 1);           // environment beats default
    EXPECT_EQ(c.knot_max_iter, 7u);  // file beats default
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.mesh_vertices, 400u);
    EXPECT_EQ(c.output_dir, dir / "run");  // relative to the config file
}

TEST(Config, RejectsBadInput) {
    const auto dir = scratch("bad");
    write_text(dir / "unknown.json", R"({"knotz": {}})");
    EXPECT_THROW(load_config(dir / "unknown.json", {}, false), ConfigError);
    write_text(dir / "missing.json", R"({"input": {"field": "nope.wcf", "locations": "nope.csv"}})");
    EXPECT_THROW(load_config(dir / "missing.json", {}, false), ConfigError);
    EXPECT_THROW(load_config(dir / "absent.json", {}, false), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"spde.alpha=3"}, false), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"seed=\"abc\""}, false), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"nosuch.key=1"}, false), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"stages=[\"input\",\"dance\"]"}, false), ConfigError);
}

TEST(Pipeline, ClosureAddsAncestorsInOrder) {
    EXPECT_EQ(stage_closure({"power"}), (std::vector<std::string>{"input", "trend", "knots", "esn", "spde", "power"}));
    EXPECT_EQ(stage_closure({"knots"}), (std::vector<std::string>{"input", "knots"}));
}

TEST(Pipeline, RerunIsCachedAndDeletionRecomputesDescendants) {
    const auto dir = scratch("rerun") / "run";
    const auto cfg = load_config(std::nullopt, small(dir), false);
    const auto first = run_pipeline(cfg);
    EXPECT_EQ(first.count("ran"), 7u);

    const auto second = run_pipeline(cfg);
    EXPECT_EQ(second.count("cached"), 7u);
    EXPECT_EQ(second.count("ran"), 0u);

    fs::remove(dir / "knots" / "knots.json");
    const auto third = run_pipeline(cfg);
    for (const auto& s : {"input", "trend"}) EXPECT_EQ(third.find(s)->action, "cached") << s;
    for (const auto& s : {"knots", "esn", "spde", "calibrate", "power"}) EXPECT_EQ(third.find(s)->action, "ran") << s;

    // A config change touching only calibration reruns only calibration.
    auto changed = small(dir);
    changed.push_back("calibrate.fit_fraction=0.4");
    const auto fourth = run_pipeline(load_config(std::nullopt, changed, false));
    EXPECT_EQ(fourth.count("ran"), 1u);
    EXPECT_EQ(fourth.find("calibrate")->action, "ran");
}

TEST(Pipeline, ManifestDetectsTampering) {
    const auto dir = scratch("tamper") / "run";
    const auto cfg = load_config(std::nullopt, small(dir), false);
    run_pipeline(cfg);
    EXPECT_TRUE(verify_manifest(dir).empty());
    {
        std::fstream f(dir / "esn" / "forecast_besn_lead1.wcf", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(100);
        f.put('\x7f');
    }
    const auto problems = verify_manifest(dir);
    ASSERT_EQ(problems.size(), 1u);
    EXPECT_NE(problems[0].find("forecast_besn_lead1.wcf"), std::string::npos);
    // The tampered stage and everything below it are recomputed.
    const auto again = run_pipeline(cfg);
    EXPECT_EQ(again.find("esn")->action, "ran");
    EXPECT_EQ(again.find("trend")->action, "cached");
    EXPECT_TRUE(verify_manifest(dir).empty());
}

TEST(Pipeline, FailureStopsDownstreamStages) {
    const auto dir = scratch("failure") / "run";
    auto a = small(dir);
    a.push_back("knots.n_red=1000");
    const auto cfg = load_config(std::nullopt, a, false);
    EXPECT_THROW(run_pipeline(cfg), ConfigError);
    const auto m = read_manifest(dir);
    EXPECT_EQ(m.find("input")->status, "ok");
    EXPECT_EQ(m.find("trend")->status, "ok");
    EXPECT_EQ(m.find("knots")->status, "failed");
    EXPECT_NE(m.find("knots")->error.find("n_red"), std::string::npos);
    for (const auto& s : {"esn", "spde", "calibrate", "power"}) EXPECT_EQ(m.find(s)->status, "not attempted") << s;
    EXPECT_FALSE(fs::exists(dir / lock_name));
}

TEST(Pipeline, LockExcludesConcurrentRuns) {
    const auto dir = scratch("lock") / "run";
    const auto cfg = load_config(std::nullopt, small(dir), false);
    RunLock held(dir);
    EXPECT_THROW(run_pipeline(cfg), IoError);
}

TEST(Pipeline, SameSeedGivesIdenticalBinaryOutputs) {
    const auto root = scratch("determinism");
    const auto a = load_config(std::nullopt, small(root / "a"), false);
    const auto b = load_config(std::nullopt, small(root / "b"), false);
    run_pipeline(a);
    run_pipeline(b);
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (e.path().extension() != ".wcf") continue;
        const auto other = root / "b" / fs::relative(e.path(), root / "a");
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(hash::sha256_file(e.path()), hash::sha256_file(other)) << e.path();
        ++compared;
    }
    EXPECT_GE(compared, 30u);
}

TEST(Report, TablesAndAbsentOutputs) {
    const auto dir = scratch("report") / "run";
    auto a = small(dir);
    a.push_back("stages=[\"trend\"]");
    run_pipeline(load_config(std::nullopt, a, false));
    auto partial = emit_report(dir);
    EXPECT_NE(std::find(partial.absent.begin(), partial.absent.end(), "power/energy.csv"), partial.absent.end());
    EXPECT_TRUE(fs::exists(dir / "report" / "report.json"));

    run_pipeline(load_config(std::nullopt, small(dir), false));
    const auto full = emit_report(dir);
    EXPECT_EQ(std::count(full.absent.begin(), full.absent.end(), "power/energy.csv"), 0);
    const auto cov = text::read_all(dir / "report" / "coverage_table.csv");
    EXPECT_EQ(cov.substr(0, cov.find('\n')), "lead,variant,delta,expected,achieved");
    const auto energy = text::read_all(dir / "report" / "energy_table.csv");
    EXPECT_EQ(std::count(energy.begin(), energy.end(), '\n'), 4);  // header + one row per model
    const auto mspe = text::read_all(dir / "report" / "mspe_table.csv");
    EXPECT_EQ(mspe.substr(0, mspe.find('\n')), "source,model,lead,median,iqr");
}

TEST(Report, LorenzBenchThroughPipeline) {
    const auto dir = scratch("bench") / "run";
    const auto cfg = load_config(std::nullopt,
                                 {"output_dir=\"" + dir.string() + "\"", "stages=[\"bench\"]", "bench.lorenz96.enabled=true",
                                  "bench.lorenz96.nsim=1", "bench.lorenz96.leads=[1,2]", "threads=1"},
                                 false);
    run_pipeline(cfg);
    EXPECT_TRUE(fs::exists(dir / "bench" / "lorenz96_summary.json"));
    EXPECT_TRUE(fs::exists(dir / "bench" / "sample_besn_lead1.csv"));
    EXPECT_TRUE(fs::exists(dir / "bench" / "sample_per_lead2.csv"));
    emit_report(dir);
    const auto box = text::read_all(dir / "report" / "boxplot_lorenz96.csv");
    EXPECT_EQ(box.substr(0, box.find('\n')), "method,lead,seed,mspe");
    EXPECT_EQ(std::count(box.begin(), box.end(), '\n'), 1 + 4 * 2);
}
