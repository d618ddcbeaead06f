#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "wfic/error.hpp"

namespace {

using namespace wfic::cli;

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitError = 3;

struct Invocation {
    CLI::App* app = nullptr;
    const Command* command = nullptr;
    std::string config_file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;  // key -> raw text
    std::map<std::string, CLI::Option*> options;
};

void apply_sets(ExperimentConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
        cfg.set_text(s.substr(0, eq), s.substr(eq + 1));
    }
}

ExperimentConfig build_config(const Invocation& inv) {
    ExperimentConfig cfg;
    if (!inv.config_file.empty()) cfg = ExperimentConfig::load(inv.config_file);
    if (inv.command) {
        if (!cfg.command.empty() && cfg.command != inv.command->name) {
            throw UsageError("config file is for '" + cfg.command + "', not '" + inv.command->name + "'");
        }
        cfg.command = inv.command->name;
    } else if (cfg.command.empty()) {
        throw UsageError("config file names no subcommand\n" + catalog_text());
    }
    find_command(cfg.command);
    apply_sets(cfg, inv.sets);
    for (const auto& [key, opt] : inv.options) {
        if (opt->count() > 0) cfg.set_text(key, inv.flags.at(key));
    }
    return resolve(std::move(cfg));
}

void print_report(const ExperimentReport& report) {
    std::cout << std::setprecision(10);
    for (const auto& m : report.metrics) {
        std::cout << (m.pass ? "PASS " : "FAIL ") << m.name << " value=" << m.value << " se=" << m.se
                  << " target=" << m.target << " tol=" << m.tolerance << " [" << m.provenance << "]\n";
    }
    std::cout << "output: " << output_directory(report.config).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Brownian skeleton experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    std::vector<std::unique_ptr<Invocation>> invocations;
    for (const auto& cmd : commands()) {
        auto inv = std::make_unique<Invocation>();
        inv->command = &cmd;
        inv->app = app.add_subcommand(cmd.name, cmd.summary);
        inv->app->add_option("--config", inv->config_file, "JSON config; flags override it");
        inv->app->add_option("--set", inv->sets, "override any config key: key=value");
        for (const auto& p : cmd.params) {
            if (p.flag.empty()) continue;
            std::string help = p.help + " (" + p.key + ", default " + p.fallback.dump() + ")";
            inv->options[p.key] = inv->app->add_option("--" + p.flag, inv->flags[p.key], help);
        }
        invocations.push_back(std::move(inv));
    }
    auto run_inv = std::make_unique<Invocation>();
    run_inv->app = app.add_subcommand("run", "run the experiment described by a config file");
    run_inv->app->add_option("--config", run_inv->config_file, "JSON config with a \"subcommand\" key")->required();
    run_inv->app->add_option("--set", run_inv->sets, "override any config key: key=value");
    auto* catalog_app = app.add_subcommand("catalog", "list functionals, payoffs, estimators and commands");

    if (argc > 1 && argv[1][0] != '-') {
        const std::string name = argv[1];
        if (name != "run" && name != "catalog") {
            try {
                find_command(name);
            } catch (const UsageError& e) {
                std::cerr << "usage error: " << e.what();
                return kExitUsage;
            }
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (catalog_app->parsed()) {
        std::cout << catalog_text();
        return 0;
    }
    const Invocation* inv = run_inv->app->parsed() ? run_inv.get() : nullptr;
    for (const auto& i : invocations) {
        if (i->app->parsed()) inv = i.get();
    }

    std::optional<ExperimentConfig> cfg;
    try {
        cfg = build_config(*inv);
        const auto report = run(*cfg);
        print_report(report);
        return report.passed() ? 0 : kExitFail;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const wfic::DomainError& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return kExitUsage;
    } catch (const wfic::ContractError& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return kExitUsage;
    } catch (const wfic::BudgetError& e) {
        std::cerr << "budget exceeded: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
