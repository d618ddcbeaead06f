// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "experiment.hpp"
#include "wfic/fbm.hpp"
#include "wfic/parallel.hpp"
#include "wfic/skeleton.hpp"

namespace fs = std::filesystem;
using namespace wfic;
using namespace wfic::cli;

namespace {

const fs::path kRoot = fs::current_path() / "acceptance-output";

using Settings = std::vector<std::pair<std::string, Json>>;

struct Timed {
    ExperimentReport report;
    double seconds = 0.0;
};

Timed run_command(const std::string& command, const Settings& settings, const std::string& tag) {
    ExperimentConfig cfg;
    cfg.command = command;
    for (const auto& [k, v] : settings) cfg.values[k] = v;
    cfg.values["output"] = (kRoot / tag).string();
    const auto start = std::chrono::steady_clock::now();
    auto report = run(resolve(cfg));
    return {std::move(report), std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
}

const Metric* find(const ExperimentReport& r, const std::string& name) {
    for (const auto& m : r.metrics) {
        if (m.name == name) return &m;
    }
    return nullptr;
}

bool metric_ok(const ExperimentReport& r, const std::string& name, std::ostringstream& why) {
    const Metric* m = find(r, name);
    if (!m) {
        why << " [" << name << " missing]";
        return false;
    }
    why << " " << name << "=" << m->value;
    if (m->se > 0.0) why << "+-" << m->se;
    if (!m->pass) why << "(FAIL target " << m->target << " tol " << m->tolerance << ")";
    return m->pass;
}

std::string fmt_seconds(double s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(1) << s << "s";
    return o.str();
}

int failures = 0;

void verdict(int id, const std::string& title, bool ok, const std::string& detail) {
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << id << " " << title << ":" << detail << std::endl;
}

template <typename Body>
void criterion(int id, const std::string& title, Body&& body) {
    std::ostringstream why;
    bool ok = false;
    try {
        ok = body(why);
    } catch (const std::exception& e) {
        why << " exception: " << e.what();
        ok = false;
    }
    verdict(id, title, ok, why.str());
}

std::vector<ExperimentReport> stopping_reports;

bool invariants_ok(const ExperimentReport& r, std::ostringstream& why) {
    bool ok = true;
    for (const char* n : {"invariant_dominance", "invariant_terminal", "invariant_first_entry",
                          "invariant_supermartingale"}) {
        const Metric* m = find(r, n);
        if (!m || !m->pass) {
            why << " " << r.config.command << ":" << n << " failed";
            ok = false;
        }
    }
    return ok;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

int main() {
    fs::remove_all(kRoot);
    std::cout << std::setprecision(6);

    criterion(1, "skeleton law", [](std::ostringstream& why) {
        // 391 paths x en(4, 1) = 256 increments >= 10^5.
        auto t = run_command("skeleton-stats", {{"skeleton.k", 4}, {"skeleton.T", 1.0}, {"skeleton.paths", 391},
                                                {"skeleton.csv_paths", 0}, {"seed", 7}}, "c1");
        bool ok = metric_ok(t.report, "mean_increment", why) & metric_ok(t.report, "variance_tau", why);
        why << " increments=" << t.report.results["increments"].dump() << " time=" << fmt_seconds(t.seconds);
        return ok && t.seconds < 10.0;
    });

    criterion(2, "exact discrete identities", [](std::ostringstream& why) {
        const auto start = std::chrono::steady_clock::now();
        auto t = run_command("tanaka", {{"tanaka.levels", "2,3,4,5,6"}, {"tanaka.paths", 1000}, {"seed", 7}}, "c2");
        bool ok = metric_ok(t.report, "tanaka_residual_max", why) &
                  metric_ok(t.report, "summation_by_parts_residual_max", why) &
                  metric_ok(t.report, "splitting_residual_ratio", why) &
                  metric_ok(t.report, "reconstruction_residual_ratio", why);
        double split = 0.0;
        double recon = 0.0;
        for (const char* f : {"coordinate", "running-max", "time-integral", "discounted-put"}) {
            for (int k = 2; k <= 6; ++k) {
                auto g = run_command("generator-check",
                                     {{"functional", f}, {"operators.k", k}, {"operators.paths", 1000}, {"seed", 7}},
                                     "c2-" + std::string(f) + "-" + std::to_string(k));
                const auto* s = find(g.report, "splitting_residual_ratio");
                const auto* r = find(g.report, "reconstruction_residual_ratio");
                split = std::max(split, s->value);
                recon = std::max(recon, r->value);
                ok = ok && s->pass && r->pass;
            }
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        why << " other functionals: splitting ratio " << split << ", reconstruction ratio " << recon
            << " time=" << fmt_seconds(seconds);
        return ok && seconds < 30.0;
    });

    ExperimentReport square_run;
    criterion(3, "generator correctness", [&](std::ostringstream& why) {
        square_run = run_command("generator-check",
                                 {{"functional", "square"}, {"operators.k", 4}, {"operators.paths", 10000}, {"seed", 7}},
                                 "c3-square").report;
        auto ti = run_command("generator-check",
                              {{"functional", "time-integral"}, {"operators.k", 4}, {"operators.paths", 10000},
                               {"seed", 7}}, "c3-time-integral").report;
        return metric_ok(square_run, "square_max_abs_U_minus_1", why) &
               metric_ok(ti, "time_integral_max_abs_D2", why) & metric_ok(ti, "time_integral_mean_U_minus_A", why);
    });

    criterion(4, "martingale residual", [&](std::ostringstream& why) {
        bool ok = true;
        for (const char* f : {"coordinate", "square", "running-max"}) {
            const ExperimentReport r =
                std::string(f) == "square"
                    ? square_run
                    : run_command("generator-check",
                                  {{"functional", f}, {"operators.k", 4}, {"operators.paths", 10000}, {"seed", 7}},
                                  "c4-" + std::string(f)).report;
            why << " " << f << ":";
            ok = metric_ok(r, "martingale_residual_psi_1", why) & metric_ok(r, "martingale_residual_psi_A", why) & ok;
        }
        return ok;
    });

    criterion(5, "weak derivative convergence", [](std::ostringstream& why) {
        auto t = run_command("derivative-convergence",
                             {{"operators.levels", "4,5,6"}, {"operators.window", 0.5}, {"operators.paths", 10000},
                              {"functional", "square"}, {"seed", 7}}, "c5");
        for (const auto& l : t.report.results["levels"]) {
            why << " k=" << l["level"].get<int>() << ":" << l["weak_gap"].get<double>();
        }
        return metric_ok(t.report, "weak_gap_k6", why) & metric_ok(t.report, "weak_gap_decreasing", why);
    });

    criterion(6, "local time", [](std::ostringstream& why) {
        auto t = run_command("localtime", {{"localtime.k", 7}, {"localtime.levels", "4,5,6,7"},
                                           {"localtime.paths", 1000}, {"localtime.backend", "grid-coupled"},
                                           {"seed", 7}}, "c6");
        for (const auto& c : t.report.results["coupling"]) {
            why << " d(" << c["level"].get<int>() << "," << c["next_level"].get<int>()
                << ")=" << c["mean_sup_distance"].get<double>();
        }
        return metric_ok(t.report, "local_time_at_0", why) & metric_ok(t.report, "sup_distance_decreasing", why);
    });

    criterion(7, "optimal stopping oracles", [](std::ostringstream& why) {
        auto t = run_command("snell", {{"snell.payoff", "put"}, {"snell.K", 0.25}, {"snell.k", 2},
                                       {"snell.horizon", 0.75}, {"snell.estimator", "regression"},
                                       {"snell.paths", 100000}, {"seed", 7}}, "c7");
        stopping_reports.push_back(t.report);
        why << " binomial=" << t.report.results["binomial_value"].get<double>();
        const bool ok = metric_ok(t.report, "tree_vs_binomial_relative", why) &
                        metric_ok(t.report, "regression_relative_gap", why) &
                        metric_ok(t.report, "lower_bound_vs_exact", why);
        why << " time=" << fmt_seconds(t.seconds);
        return ok && t.seconds < 60.0;
    });

    criterion(8, "Snell invariants", [](std::ostringstream& why) {
        const std::vector<Settings> runs = {
            {{"snell.payoff", "put"}, {"snell.estimator", "binomial"}, {"snell.paths", 5000}},
            {{"snell.payoff", "put"}, {"snell.estimator", "tree"}, {"snell.paths", 5000}},
            {{"snell.payoff", "call"}, {"snell.estimator", "regression"}, {"snell.paths", 5000}},
            {{"snell.payoff", "running-max"}, {"snell.estimator", "regression"}, {"snell.paths", 5000}},
            {{"snell.payoff", "fbm-put"}, {"snell.estimator", "regression"}, {"snell.paths", 2000}}};
        int i = 0;
        for (const auto& s : runs) stopping_reports.push_back(run_command("snell", s, "c8-" + std::to_string(i++)).report);
        stopping_reports.push_back(run_command("fbm-snell", {{"fbm.H", 0.5}, {"snell.paths", 2000}}, "c8-fbm").report);
        bool ok = true;
        for (const auto& r : stopping_reports) ok = invariants_ok(r, why) && ok;
        why << " runs=" << stopping_reports.size();
        return ok;
    });

    criterion(9, "backward equation", [](std::ostringstream& why) {
        auto t = run_command("bsde", {{"bsde.rho", 0.1}, {"bsde.xi", "one"}, {"bsde.k", 3}, {"bsde.T", 1.0}}, "c9");
        return metric_ok(t.report, "Y0_vs_exponential", why);
    });

    criterion(10, "fractional Brownian motion", [](std::ostringstream& why) {
        const auto start = std::chrono::steady_clock::now();
        constexpr int k = 5;
        constexpr std::size_t paths = 10000;
        const double H = 0.7;
        FbmParams params;
        params.H = H;
        params.f = [](double) { return 1.0; };
        const auto quad = KernelQuadrature::for_level(k, 1.0);
        std::vector<double> b1(paths), b3(paths), b7(paths);
        parallel_for(paths, [&](std::size_t p) {
            RandomState rng(7, p);
            const auto skel = build_skeleton(k, 1, 1.0, rng);
            const auto b = fbm_skeleton(skel, params, quad);
            b1[p] = b[skel.count_until(1.0)];
            b3[p] = b[skel.count_until(0.3)];
            b7[p] = b[skel.count_until(0.7)];
        });
        auto moment = [&](const std::vector<double>& x, const std::vector<double>& y, double& se) {
            double m = 0.0;
            double s = 0.0;
            for (std::size_t p = 0; p < paths; ++p) m += x[p] * y[p];
            m /= paths;
            for (std::size_t p = 0; p < paths; ++p) s += (x[p] * y[p] - m) * (x[p] * y[p] - m);
            se = std::sqrt(s / (paths - 1) / paths);
            return m;
        };
        double se_v = 0.0;
        double se_c = 0.0;
        const double var = moment(b1, b1, se_v);
        const double cov = moment(b3, b7, se_c);
        const double cov_exact = 0.5 * (std::pow(0.3, 2 * H) + std::pow(0.7, 2 * H) - std::pow(0.4, 2 * H));
        const bool var_ok = std::abs(var - 1.0) <= 3.0 * se_v + 1e-3;
        const bool cov_ok = std::abs(cov - cov_exact) <= 3.0 * se_c + 1e-3;

        FbmParams half = params;
        half.H = 0.5;
        bool identity = true;
        for (std::size_t p = 0; p < 200 && identity; ++p) {
            RandomState rng(11, p);
            const auto skel = build_skeleton(k, 1, 1.0, rng);
            const auto b = fbm_skeleton(skel, half, quad);
            for (std::size_t n = 0; n < b.size(); ++n) identity = identity && b[n] == skel.value(n, 0);
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        why << " var(1)=" << var << "+-" << se_v << (var_ok ? "" : "(FAIL)") << " cov(0.3,0.7)=" << cov << "+-"
            << se_c << " exact " << cov_exact << (cov_ok ? "" : "(FAIL)") << " H=1/2 identity "
            << (identity ? "exact" : "broken") << " time=" << fmt_seconds(seconds);
        return var_ok && cov_ok && identity && seconds < 300.0;
    });

    criterion(11, "determinism", [](std::ostringstream& why) {
        const std::vector<std::pair<std::string, Settings>> runs = {
            {"skeleton-stats", {{"skeleton.paths", 200}, {"skeleton.backend", "grid-coupled"}}},
            {"derivative-convergence", {{"operators.paths", 200}}},
            {"generator-check", {{"operators.paths", 200}, {"functional", "running-max"}}},
            {"localtime", {{"localtime.paths", 20}}},
            {"tanaka", {{"tanaka.paths", 50}}},
            {"snell", {{"snell.paths", 2000}}},
            {"snell", {{"snell.paths", 1000}, {"snell.payoff", "fbm-put"}}},
            {"bsde", {{"bsde.paths", 1000}}},
            {"fbm-snell", {{"snell.paths", 1000}}},
            {"probe", {{"probe.paths", 1000}}}};
        bool ok = true;
        std::size_t compared = 0;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& [cmd, base] = runs[i];
            std::vector<fs::path> dirs;
            for (int threads : {1, 3, 1}) {
                Settings s = base;
                s.emplace_back("seed", 2024);
                s.emplace_back("threads", threads);
                const std::string tag = "c11-" + std::to_string(i) + "-" + std::to_string(dirs.size());
                run_command(cmd, s, tag);
                dirs.push_back(kRoot / tag);
            }
            for (const auto& entry : fs::directory_iterator(dirs[0])) {
                const auto name = entry.path().filename();
                if (name == "timing.json") continue;
                const auto ref = slurp(entry.path());
                for (std::size_t d = 1; d < dirs.size(); ++d) {
                    ++compared;
                    if (slurp(dirs[d] / name) != ref) {
                        ok = false;
                        why << " " << cmd << "/" << name.string() << " differs";
                    }
                }
            }
        }
        set_thread_limit(0);
        why << " commands=" << runs.size() << " file comparisons=" << compared;
        return ok;
    });

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
