#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <cstdlib>

#include "experiment.hpp"

using namespace wfic::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("wfic-cli-test-" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small settings that keep each command under a few seconds.
const std::map<std::string, Json>& tiny(const std::string& command) {
    static const std::map<std::string, std::map<std::string, Json>> table = {
        {"skeleton-stats", {{"skeleton.k", 3}, {"skeleton.paths", 50}}},
        {"derivative-convergence", {{"operators.levels", "2,3"}, {"operators.paths", 50}}},
        {"generator-check", {{"operators.k", 2}, {"operators.paths", 200}}},
        {"localtime", {{"localtime.k", 3}, {"localtime.levels", "2,3"}, {"localtime.paths", 50}}},
        {"tanaka", {{"tanaka.levels", "2,3"}, {"tanaka.paths", 20}}},
        {"snell", {{"snell.paths", 2000}}},
        {"bsde", {{"bsde.k", 2}}},
        {"fbm-snell", {{"snell.k", 1}, {"snell.paths", 1000}}},
        {"probe", {{"probe.paths", 1000}}},
    };
    return table.at(command);
}

}  // namespace

TEST(Cli, ConfigRoundTripsThroughJson) {
    ExperimentConfig c;
    c.command = "snell";
    c.set_text("snell.K", "0.5");
    c.set_text("snell.estimator", "tree");
    const auto back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back, c);
    EXPECT_EQ(back.number("snell.K"), 0.5);
}

TEST(Cli, NestedConfigIsFlattened) {
    const Json j = Json::parse(R"({"subcommand": "bsde", "bsde": {"rho": 0.2, "k": 2}, "seed": 3})");
    const auto c = resolve(ExperimentConfig::from_json(j));
    EXPECT_EQ(c.number("bsde.rho"), 0.2);
    EXPECT_EQ(c.integer("bsde.k"), 2);
    EXPECT_EQ(c.seed(), 3u);
    EXPECT_EQ(c.text("bsde.xi"), "one");
}

TEST(Cli, ResolveRejectsBadInput) {
    ExperimentConfig c;
    c.command = "snell";
    c.values["snell.nope"] = 1;
    EXPECT_THROW(resolve(c), UsageError);

    ExperimentConfig d;
    d.command = "fbm-snell";
    EXPECT_THROW(d.set_text("fbm.H", "0.3"), UsageError);
    EXPECT_THROW(d.set_text("snell.k", "two"), UsageError);

    ExperimentConfig e;
    e.command = "derivative-convergence";
    EXPECT_THROW(e.set_text("functional", "cube"), UsageError);
    EXPECT_THROW(e.set_text("operators.levels", "5,4"), UsageError);

    EXPECT_THROW(find_command("nope"), UsageError);
    EXPECT_THROW(resolve(ExperimentConfig{}), UsageError);
}

TEST(Cli, CatalogListsBuiltins) {
    const auto text = catalog_text();
    for (const char* name : {"running-max", "fbm-put", "discounted-put", "regression", "tree", "localtime"}) {
        EXPECT_NE(text.find(name), std::string::npos) << name;
    }
}

TEST(Cli, EveryCatalogFunctionalRuns) {
    for (const auto& entry : catalog()) {
        if (entry.kind != "functional") continue;
        ExperimentConfig c;
        c.command = "generator-check";
        c.set_text("functional", entry.name);
        c.set_text("operators.k", "2");
        c.set_text("operators.paths", "200");
        c.values["output"] = scratch("fn-" + entry.name).string();
        EXPECT_NO_THROW((void)run(resolve(c))) << entry.name;
    }
}

TEST(Cli, EveryCommandRunsAtSmallSize) {
    for (const auto& cmd : commands()) {
        ExperimentConfig c;
        c.command = cmd.name;
        for (const auto& [k, v] : tiny(cmd.name)) c.values[k] = v;
        const auto dir = scratch(cmd.name);
        c.values["output"] = dir.string();
        const auto report = run(resolve(c));
        EXPECT_TRUE(fs::exists(dir / "report.json")) << cmd.name;
        EXPECT_TRUE(fs::exists(dir / "timing.json")) << cmd.name;
        for (const auto& f : report.files) EXPECT_TRUE(fs::exists(dir / f)) << cmd.name << ' ' << f;
        const auto j = Json::parse(slurp(dir / "report.json"));
        EXPECT_FALSE(j["config"].contains("threads"));
        EXPECT_FALSE(j["config"].contains("output"));
        for (const auto& m : j["metrics"]) {
            const auto prov = m["provenance"].get<std::string>();
            EXPECT_TRUE(prov == "PAPER" || prov == "DERIVED" || prov == "TRIVIAL") << cmd.name;
        }
    }
}

TEST(Cli, IncompatibleChoicesAreUsageErrors) {
    ExperimentConfig c;
    c.command = "snell";
    c.set_text("snell.payoff", "running-max");
    c.set_text("snell.estimator", "binomial");
    c.values["output"] = scratch("bad-combo").string();
    EXPECT_THROW((void)run(resolve(c)), UsageError);
    EXPECT_FALSE(fs::exists(scratch("bad-combo") / "report.json"));
}

TEST(Cli, OutputDirectoryFallsBackToEnvironment) {
    ExperimentConfig c;
    c.command = "bsde";
    c.values["output"] = "explicit";
    EXPECT_EQ(output_directory(resolve(c)), fs::path("explicit"));
    c.values.erase("output");
    ::setenv(kOutputEnv, "/tmp/elsewhere", 1);
    EXPECT_EQ(output_directory(resolve(c)), fs::path("/tmp/elsewhere/bsde"));
    ::unsetenv(kOutputEnv);
    EXPECT_EQ(output_directory(resolve(c)), fs::path("wfic-output/bsde"));
}
