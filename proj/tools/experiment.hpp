#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace wfic::cli {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr const char* kOutputEnv = "WFIC_OUTPUT_DIR";

/// Bad command line, config file or parameter value; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { integer, number, text, seed, levels };

struct ParamSpec {
    std::string key;   ///< dotted config key
    std::string flag;  ///< long flag without dashes; empty for config-only keys
    Kind kind = Kind::number;
    Json fallback;
    std::string help;
    double lo = -1e300;
    double hi = 1e300;
    std::vector<std::string> choices;
};

struct Command {
    std::string name;
    std::string summary;
    std::vector<ParamSpec> params;
};

/// Every experiment subcommand with its parameter table (common keys included).
const std::vector<Command>& commands();
/// Throws UsageError listing the catalog when `name` is unknown.
const Command& find_command(std::string_view name);

struct ExperimentConfig {
    std::string command;
    Json values = Json::object();  ///< dotted key -> scalar

    /// Reads a JSON file; nested objects flatten to dotted keys and the
    /// subcommand comes from "subcommand".
    static ExperimentConfig load(const std::filesystem::path& file);
    static ExperimentConfig from_json(const Json& j);
    [[nodiscard]] Json to_json() const;

    /// Parses `text` with the type declared for `key` by the command.
    void set_text(const std::string& key, const std::string& text);

    [[nodiscard]] bool has(const std::string& key) const { return values.contains(key); }
    [[nodiscard]] double number(const std::string& key) const;
    [[nodiscard]] std::int64_t integer(const std::string& key) const;
    [[nodiscard]] std::uint64_t seed() const;
    [[nodiscard]] std::string text(const std::string& key) const;
    [[nodiscard]] std::vector<int> levels(const std::string& key) const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Fills defaults and validates keys, types and ranges. No simulation happens
/// before this succeeds.
ExperimentConfig resolve(ExperimentConfig config);

struct Metric {
    std::string name;
    double value = 0.0;
    double se = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    std::string provenance;  ///< PAPER, DERIVED or TRIVIAL
    bool pass = false;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<Metric> metrics;
    Json results = Json::object();
    std::vector<std::string> files;
    double wall_seconds = 0.0;

    [[nodiscard]] bool passed() const;
    /// Deterministic content only; wall-clock, threads and output directory go
    /// to timing.json.
    [[nodiscard]] Json to_json() const;
};

std::filesystem::path output_directory(const ExperimentConfig& config);

/// Runs a resolved config, writes CSV files, report.json and timing.json.
ExperimentReport run(const ExperimentConfig& config);

struct CatalogEntry {
    std::string kind;  ///< functional, payoff, estimator, command
    std::string name;
    std::string params;
    std::string description;
};

const std::vector<CatalogEntry>& catalog();
std::string catalog_text();

}  // namespace wfic::cli
