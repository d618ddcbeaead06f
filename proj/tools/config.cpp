#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "experiment.hpp"
#include "wfic/error.hpp"
#include "wfic/text.hpp"

namespace wfic::cli {

namespace {

constexpr double kTiny = 1e-300;

ParamSpec integer(std::string key, std::string flag, long long def, std::string help, double lo, double hi) {
    return {std::move(key), std::move(flag), Kind::integer, def, std::move(help), lo, hi, {}};
}
ParamSpec number(std::string key, std::string flag, double def, std::string help, double lo = -1e300,
                 double hi = 1e300) {
    return {std::move(key), std::move(flag), Kind::number, def, std::move(help), lo, hi, {}};
}
ParamSpec choice(std::string key, std::string flag, std::string def, std::string help,
                 std::vector<std::string> choices) {
    return {std::move(key), std::move(flag), Kind::text, std::move(def), std::move(help), 0, 0, std::move(choices)};
}
ParamSpec levels(std::string key, std::string flag, std::string def, std::string help, double lo, double hi) {
    return {std::move(key), std::move(flag), Kind::levels, std::move(def), std::move(help), lo, hi, {}};
}

const std::vector<std::string> kFunctionals = {"coordinate", "square",      "abs-distance",  "running-max",
                                               "time-integral", "bump-kernel", "discounted-put"};

std::vector<ParamSpec> functional_params(std::string def) {
    return {choice("functional", "functional", std::move(def), "path functional (see catalog)", kFunctionals),
            number("functional.x0", "x0", 0.0, "abs-distance: reference level"),
            number("functional.width", "width", 0.5, "bump-kernel: kernel half-width", kTiny),
            number("functional.rate", "rate", 0.1, "discounted-put: discount rate", 0.0),
            number("functional.strike", "strike", 0.25, "discounted-put: strike")};
}

std::vector<ParamSpec> fbm_params() {
    return {number("fbm.H", "H", 0.7, "Hurst index (kernel representation needs H >= 1/2)", 0.5, 0.999),
            number("fbm.sigma", "sigma", 0.3, "volatility", kTiny),
            number("fbm.alpha", "alpha", 0.0, "drift"),
            number("fbm.r", "r", 0.05, "discount rate", 0.0),
            choice("fbm.f", "f", "put", "payoff of W_H: put = max(K - w, 0), one = 1", {"put", "one"}),
            number("fbm.K", "fbm-strike", 1.0, "strike of the fbm put")};
}

std::vector<ParamSpec> with_common(std::vector<ParamSpec> params) {
    params.push_back({"seed", "seed", Kind::seed, 7, "64-bit random seed", 0, 0, {}});
    params.push_back(integer("threads", "threads", 0, "worker threads (0: all cores)", 0, 4096));
    params.push_back({"output", "out", Kind::text, "", "output directory (default $WFIC_OUTPUT_DIR/<command>)", 0, 0, {}});
    return params;
}

template <typename... Lists>
std::vector<ParamSpec> join(Lists&&... lists) {
    std::vector<ParamSpec> out;
    (out.insert(out.end(), lists.begin(), lists.end()), ...);
    return out;
}

std::vector<Command> build_commands() {
    std::vector<Command> c;
    c.push_back({"skeleton-stats", "hitting-time increments of the skeleton against the exit-time law",
                 with_common({integer("skeleton.k", "k", 4, "level", 1, 12),
                              number("skeleton.T", "T", 1.0, "horizon", kTiny, 1e4),
                              integer("skeleton.paths", "paths", 1000, "number of paths", 1, 1e8),
                              choice("skeleton.backend", "backend", "renewal", "skeleton backend",
                                     {"renewal", "grid-coupled"}),
                              integer("skeleton.csv_paths", "csv-paths", 3, "skeletons written as CSV", 0, 1e6)})});
    c.push_back({"derivative-convergence", "E int D^k F g dt against the pathwise derivative on coupled levels",
                 with_common(join(std::vector<ParamSpec>{levels("operators.levels", "levels", "4,5,6", "ascending levels", 1, 9),
                                                         number("operators.window", "window", 0.5,
                                                                "test process g = 1 on [0, window]", kTiny, 100.0),
                                                         integer("operators.paths", "paths", 10000, "number of paths", 2, 1e8)},
                                  functional_params("square")))});
    c.push_back({"generator-check", "exact discrete identities and martingale residuals of the operators",
                 with_common(join(std::vector<ParamSpec>{integer("operators.k", "k", 4, "level", 1, 10),
                                                         number("operators.T", "T", 1.0, "horizon", kTiny, 1e3),
                                                         integer("operators.paths", "paths", 10000, "number of paths", 100, 1e8),
                                                         choice("skeleton.backend", "backend", "renewal", "skeleton backend",
                                                                {"renewal", "grid-coupled"})},
                                  functional_params("square")))});
    c.push_back({"localtime", "crossing local time at 0 and its coupling across levels",
                 with_common({integer("localtime.k", "k", 7, "level of the local-time estimate", 1, 12),
                              levels("localtime.levels", "levels", "4,5,6,7", "coupled levels for the distance check", 1, 12),
                              number("localtime.T", "T", 1.0, "horizon", kTiny, 1e3),
                              integer("localtime.paths", "paths", 1000, "number of paths", 2, 1e8),
                              choice("localtime.backend", "backend", "grid-coupled", "skeleton backend",
                                     {"renewal", "grid-coupled"})})});
    c.push_back({"tanaka", "Tanaka and summation-by-parts residuals",
                 with_common({levels("tanaka.levels", "levels", "2,3,4,5,6", "levels", 1, 10),
                              number("tanaka.T", "T", 1.0, "horizon", kTiny, 1e3),
                              number("tanaka.x", "x", 0.0, "Tanaka level"),
                              integer("tanaka.paths", "paths", 1000, "paths per level", 1, 1e8)})});
    c.push_back({"snell", "optimal stopping on the skeleton with oracle comparisons",
                 with_common(join(std::vector<ParamSpec>{
                                      choice("snell.payoff", "payoff", "put", "payoff (see catalog)",
                                             {"put", "call", "running-max", "fbm-put"}),
                                      number("snell.K", "K", 0.25, "strike of put and call"),
                                      choice("snell.estimator", "estimator", "regression", "continuation estimator",
                                             {"regression", "binomial", "tree"}),
                                      integer("snell.k", "k", 2, "level", 1, 10),
                                      number("snell.horizon", "T", 0.75, "horizon; steps = ceil(4^k T)", kTiny, 1e3),
                                      integer("snell.paths", "paths", 100000, "regression and lower-bound paths", 1000, 1e8),
                                      integer("snell.basis_degree", "degree", 2, "regression polynomial degree", 0, 4),
                                      integer("snell.quantization_m", "m", 2, "quantized exit-law nodes", 1, 3),
                                      choice("snell.target", "target", "cashflow", "regression target",
                                             {"cashflow", "value"}),
                                      integer("snell.tree_budget", "budget", 20000000, "tree state budget", 1, 1e12),
                                      integer("snell.csv_paths", "csv-paths", 20, "paths written to values.csv", 0, 1e8)},
                                  fbm_params()))});
    c.push_back({"bsde", "backward equation Y = E[Y'] + g(t, Y, Z) h^2 on the quantized tree",
                 with_common({number("bsde.rho", "rho", 0.1, "driver g(t, y, z) = rho y"),
                              choice("bsde.xi", "xi", "one", "terminal value: one or put", {"one", "put"}),
                              number("bsde.K", "K", 0.25, "strike when xi = put"),
                              integer("bsde.k", "k", 3, "level", 1, 8),
                              number("bsde.T", "T", 1.0, "horizon", kTiny, 100.0),
                              choice("bsde.reduction", "reduction", "level-and-clock", "tree reduction",
                                     {"level", "level-and-clock"}),
                              integer("bsde.quantization_m", "m", 2, "quantized exit-law nodes", 1, 3),
                              integer("bsde.paths", "paths", 0, "regression cross-check paths (0: off)", 0, 1e8)})});
    c.push_back({"fbm-snell", "optimal stopping of e^{-rt} f(W_H) driven by the fractional skeleton",
                 with_common(join(fbm_params(),
                                  std::vector<ParamSpec>{
                                      integer("snell.k", "k", 3, "level", 1, 8),
                                      number("snell.horizon", "T", 1.0, "horizon", kTiny, 100.0),
                                      integer("snell.paths", "paths", 4000, "regression and lower-bound paths", 1000, 1e8),
                                      integer("snell.basis_degree", "degree", 2, "regression polynomial degree", 0, 4),
                                      integer("snell.quantization_m", "m", 2, "tree oracle nodes (H = 1/2)", 1, 3),
                                      choice("snell.target", "target", "cashflow", "regression target",
                                             {"cashflow", "value"}),
                                      integer("snell.csv_paths", "csv-paths", 20, "paths written to values.csv", 0, 1e8)}))});
    c.push_back({"probe", "pointwise Monte Carlo probe of the derivative or generator at a fixed time",
                 with_common(join(std::vector<ParamSpec>{number("probe.t", "t", 0.5, "probe time", 0.0, 100.0),
                                                         number("probe.eps", "eps", 0.05, "exit half-width", kTiny, 10.0),
                                                         choice("probe.mode", "mode", "generator", "probe mode",
                                                                {"derivative", "generator"}),
                                                         integer("probe.paths", "paths", 10000, "number of paths", 1000, 1e8)},
                                  functional_params("square")))});
    return c;
}

std::string catalog_hint() { return "run 'wfic catalog' for the list of commands, functionals, payoffs and estimators"; }

const ParamSpec& find_param(const Command& cmd, const std::string& key) {
    for (const auto& p : cmd.params) {
        if (p.key == key) return p;
    }
    std::string known;
    for (const auto& p : cmd.params) known += (known.empty() ? "" : ", ") + p.key;
    throw UsageError("unknown key '" + key + "' for " + cmd.name + " (known: " + known + ")");
}

std::vector<int> parse_levels(const std::string& s) {
    std::vector<int> out;
    for (auto part : text::split(s, ',')) {
        while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
        while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
        out.push_back(static_cast<int>(text::parse_int(part)));
    }
    return out;
}

Json typed_value(const ParamSpec& spec, const Json& raw) {
    const std::string where = "'" + spec.key + "'";
    switch (spec.kind) {
        case Kind::integer: {
            long long v = 0;
            if (raw.is_number_integer()) {
                v = raw.get<long long>();
            } else if (raw.is_number_float() && std::floor(raw.get<double>()) == raw.get<double>() &&
                       std::abs(raw.get<double>()) < 9e15) {
                v = static_cast<long long>(raw.get<double>());
            } else if (raw.is_string()) {
                try {
                    v = text::parse_int(raw.get<std::string>());
                } catch (const ContractError&) {
                    throw UsageError(where + " expects an integer, got '" + raw.get<std::string>() + "'");
                }
            } else {
                throw UsageError(where + " expects an integer");
            }
            if (static_cast<double>(v) < spec.lo || static_cast<double>(v) > spec.hi) {
                throw UsageError(where + " = " + std::to_string(v) + " outside [" + text::fmt(spec.lo) + ", " +
                                 text::fmt(spec.hi) + "]");
            }
            return v;
        }
        case Kind::number: {
            double v = 0.0;
            if (raw.is_number()) {
                v = raw.get<double>();
            } else if (raw.is_string()) {
                try {
                    v = text::parse_double(raw.get<std::string>());
                } catch (const ContractError&) {
                    throw UsageError(where + " expects a number, got '" + raw.get<std::string>() + "'");
                }
            } else {
                throw UsageError(where + " expects a number");
            }
            if (!std::isfinite(v) || v < spec.lo || v > spec.hi) {
                throw UsageError(where + " = " + text::fmt(v) + " outside [" + text::fmt(spec.lo) + ", " +
                                 text::fmt(spec.hi) + "]");
            }
            return v;
        }
        case Kind::seed: {
            if (raw.is_number_unsigned() || (raw.is_number_integer() && raw.get<long long>() >= 0)) {
                return raw.get<std::uint64_t>();
            }
            if (raw.is_string()) {
                const auto s = raw.get<std::string>();
                std::uint64_t v = 0;
                const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
                if (r.ec == std::errc() && r.ptr == s.data() + s.size()) return v;
            }
            throw UsageError(where + " expects an unsigned 64-bit integer");
        }
        case Kind::text: {
            if (!raw.is_string()) throw UsageError(where + " expects a string");
            const auto s = raw.get<std::string>();
            if (!spec.choices.empty() && std::find(spec.choices.begin(), spec.choices.end(), s) == spec.choices.end()) {
                std::string list;
                for (const auto& c : spec.choices) list += (list.empty() ? "" : ", ") + c;
                throw UsageError(where + " = '" + s + "' is not one of: " + list + "; " + catalog_hint());
            }
            return s;
        }
        case Kind::levels: {
            std::string s;
            if (raw.is_array()) {
                for (const auto& x : raw) {
                    if (!x.is_number_integer()) throw UsageError(where + " expects integers");
                    s += (s.empty() ? "" : ",") + std::to_string(x.get<long long>());
                }
            } else if (raw.is_number_integer()) {
                s = std::to_string(raw.get<long long>());
            } else if (raw.is_string()) {
                s = raw.get<std::string>();
            } else {
                throw UsageError(where + " expects a comma-separated list of levels");
            }
            std::vector<int> ks;
            try {
                ks = parse_levels(s);
            } catch (const ContractError&) {
                throw UsageError(where + " expects a comma-separated list of levels, got '" + s + "'");
            }
            if (ks.empty()) throw UsageError(where + " is empty");
            std::string canonical;
            for (std::size_t i = 0; i < ks.size(); ++i) {
                if (ks[i] < spec.lo || ks[i] > spec.hi) {
                    throw UsageError(where + ": level " + std::to_string(ks[i]) + " outside [" + text::fmt(spec.lo) +
                                     ", " + text::fmt(spec.hi) + "]");
                }
                if (i > 0 && ks[i] <= ks[i - 1]) throw UsageError(where + " must be strictly ascending");
                canonical += (i ? "," : "") + std::to_string(ks[i]);
            }
            return canonical;
        }
    }
    throw UsageError(where + ": unsupported type");
}

void flatten(const Json& j, const std::string& prefix, Json& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            flatten(*it, key, out);
        } else {
            out[key] = *it;
        }
    }
}

}  // namespace

const std::vector<Command>& commands() {
    static const std::vector<Command> all = build_commands();
    return all;
}

const Command& find_command(std::string_view name) {
    for (const auto& c : commands()) {
        if (c.name == name) return c;
    }
    throw UsageError("unknown command '" + std::string(name) + "'\n" + catalog_text());
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot read config file '" + file.string() + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config file '" + file.string() + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    ExperimentConfig c;
    Json flat = Json::object();
    flatten(j, "", flat);
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        if (it.key() == "subcommand") {
            if (!it->is_string()) throw UsageError("'subcommand' must be a string");
            c.command = it->get<std::string>();
        } else {
            c.values[it.key()] = *it;
        }
    }
    return c;
}

Json ExperimentConfig::to_json() const {
    Json j = Json::object();
    j["subcommand"] = command;
    for (auto it = values.begin(); it != values.end(); ++it) j[it.key()] = *it;
    return j;
}

void ExperimentConfig::set_text(const std::string& key, const std::string& value) {
    const auto& spec = find_param(find_command(command), key);
    values[key] = typed_value(spec, Json(value));
}

double ExperimentConfig::number(const std::string& key) const { return values.at(key).get<double>(); }
std::int64_t ExperimentConfig::integer(const std::string& key) const { return values.at(key).get<std::int64_t>(); }
std::uint64_t ExperimentConfig::seed() const { return values.at("seed").get<std::uint64_t>(); }
std::string ExperimentConfig::text(const std::string& key) const { return values.at(key).get<std::string>(); }
std::vector<int> ExperimentConfig::levels(const std::string& key) const { return parse_levels(text(key)); }

ExperimentConfig resolve(ExperimentConfig config) {
    if (config.command.empty()) throw UsageError("config names no subcommand\n" + catalog_text());
    const auto& cmd = find_command(config.command);
    for (auto it = config.values.begin(); it != config.values.end(); ++it) (void)find_param(cmd, it.key());
    ExperimentConfig out;
    out.command = config.command;
    for (const auto& spec : cmd.params) {
        const Json raw = config.values.contains(spec.key) ? config.values[spec.key] : spec.fallback;
        out.values[spec.key] = typed_value(spec, raw);
    }
    return out;
}

bool ExperimentReport::passed() const {
    return std::all_of(metrics.begin(), metrics.end(), [](const Metric& m) { return m.pass; });
}

Json ExperimentReport::to_json() const {
    Json j = Json::object();
    j["version"] = std::string(kVersion);
    // Runtime-only keys live in timing.json so reports compare equal across
    // thread counts and output directories.
    Json echo = config.to_json();
    echo.erase("threads");
    echo.erase("output");
    j["config"] = echo;
    j["metrics"] = Json::array();
    for (const auto& m : metrics) {
        Json r = Json::object();
        r["name"] = m.name;
        r["value"] = m.value;
        r["se"] = m.se;
        r["target"] = m.target;
        r["tolerance"] = m.tolerance;
        r["provenance"] = m.provenance;
        r["pass"] = m.pass;
        j["metrics"].push_back(r);
    }
    j["results"] = results;
    j["files"] = files;
    j["pass"] = passed();
    return j;
}

std::filesystem::path output_directory(const ExperimentConfig& config) {
    if (config.has("output") && !config.text("output").empty()) return config.text("output");
    const char* env = std::getenv(kOutputEnv);
    const std::filesystem::path base = (env && *env) ? env : "wfic-output";
    return base / config.command;
}

const std::vector<CatalogEntry>& catalog() {
    static const std::vector<CatalogEntry> entries = [] {
        std::vector<CatalogEntry> e = {
            {"functional", "coordinate", "", "F(c) = c(t)"},
            {"functional", "square", "", "F(c) = c(t)^2"},
            {"functional", "abs-distance", "functional.x0", "F(c) = |c(t) - x0|"},
            {"functional", "running-max", "", "F(c) = max_{s<=t} c(s)"},
            {"functional", "time-integral", "", "F(c) = int_0^t c(s) ds"},
            {"functional", "bump-kernel", "functional.width",
             "F(c) = int^{c(t)} int_0^t phi(c(s), y) ds dy with a smooth bump phi"},
            {"functional", "discounted-put", "functional.rate, functional.strike", "F(c) = e^{-rt} max(K - c(t), 0)"},
            {"payoff", "put", "snell.K", "g(a) = max(K - a, 0), state payoff"},
            {"payoff", "call", "snell.K", "g(a) = max(a - K, 0), state payoff"},
            {"payoff", "running-max", "", "Z = max_{s<=t} A(s), path-dependent"},
            {"payoff", "fbm-put", "fbm.H, fbm.sigma, fbm.alpha, fbm.r, fbm.f, fbm.K",
             "Z = e^{-rt} f(exp(alpha t + sigma B_H(t))), fractional skeleton"},
            {"estimator", "regression", "snell.basis_degree, snell.target", "least-squares continuation values"},
            {"estimator", "binomial", "", "exact lattice for state payoffs"},
            {"estimator", "tree", "snell.quantization_m, snell.tree_budget", "quantized exit-law tree"},
        };
        for (const auto& c : commands()) {
            std::string keys;
            for (const auto& p : c.params) keys += (keys.empty() ? "" : ", ") + p.key;
            e.push_back({"command", c.name, keys, c.summary});
        }
        return e;
    }();
    return entries;
}

std::string catalog_text() {
    std::ostringstream out;
    std::string kind;
    for (const auto& e : catalog()) {
        if (e.kind != kind) {
            kind = e.kind;
            out << kind << "s:\n";
        }
        out << "  " << e.name;
        if (!e.params.empty()) out << " [" << e.params << "]";
        out << "\n      " << e.description << "\n";
    }
    return out.str();
}

}  // namespace wfic::cli
