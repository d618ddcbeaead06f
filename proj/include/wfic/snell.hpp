#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "wfic/functional.hpp"
#include "wfic/skeleton.hpp"

namespace wfic {

/// en(k, T) = ceil(2^{2k} T).
std::size_t en_steps(int k, double T);

/// Stop when Z >= C - kTieTolerance.
inline constexpr double kTieTolerance = 1e-12;

/// Regression features recorded per step.
enum Feature : std::size_t {
    kFeatureLevel = 0,
    kFeatureMax,
    kFeatureTime,
    kFeatureIntegral,
    kFeaturePayoff,
    kFeatureCount
};

/// State payoff g(i, a): depends on the step index and the current value only.
using StatePayoff = std::function<double(std::size_t i, double a)>;
/// Clock payoff g(i, t, a): step index, hitting time, current value.
using ClockPayoff = std::function<double(std::size_t i, double t, double a)>;

/// Payoffs Z_i for i = 0..steps on a sample of skeletons, with the features
/// used by regression estimators. Rows are paths.
struct PayoffTable {
    int level = 0;
    double horizon = std::numeric_limits<double>::infinity();
    std::size_t paths = 0;
    std::size_t steps = 0;              ///< terminal index
    std::vector<double> Z;              ///< paths x (steps + 1)
    std::vector<double> times;          ///< T_i, uncapped
    std::vector<std::int64_t> levels;   ///< A(T_i) / 2^{-k}, uncapped
    std::vector<int> signs;             ///< eta_i (0 at i = 0)
    std::vector<double> features;       ///< paths x (steps + 1) x kFeatureCount
    StatePayoff state_payoff;           ///< set for state-payoff tables

    [[nodiscard]] std::size_t index(std::size_t p, std::size_t i) const noexcept { return p * (steps + 1) + i; }
    [[nodiscard]] double z(std::size_t p, std::size_t i) const noexcept { return Z[index(p, i)]; }
    [[nodiscard]] const double* feature_row(std::size_t p, std::size_t i) const noexcept {
        return features.data() + index(p, i) * kFeatureCount;
    }
};

/// Z_i = F(A^k) at T_i ^ T; after the horizon the payoff is frozen at X(T).
/// Skeletons must hold at least en(k, T) events.
PayoffTable payoff_table(const PathFunctional& F, const std::vector<BrownianSkeleton>& skeletons, double T);

/// Z_i = g(i, A(T_i)) for i = 0..steps, no horizon cap.
PayoffTable state_payoff_table(const StatePayoff& g, const std::vector<BrownianSkeleton>& skeletons,
                               std::size_t steps);

enum class Estimator { regression, binomial, tree };
std::string to_string(Estimator e);

enum class RegressionTarget { value, cashflow };

struct RegressionConfig {
    int degree = 2;
    /// value: regress V_{i+1}; cashflow: regress the realized payoff of the
    /// current stopping rule.
    RegressionTarget target = RegressionTarget::cashflow;
    /// Include the current payoff Z_i among the regressors.
    bool payoff_feature = true;
};

/// Decides stop/continue on rows of a payoff table.
class StoppingRule {
public:
    virtual ~StoppingRule() = default;
    [[nodiscard]] virtual bool stop(const PayoffTable& table, std::size_t path, std::size_t i) const = 0;
    [[nodiscard]] virtual std::string describe() const = 0;
};

struct ValueTable {
    Estimator estimator = Estimator::regression;
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::vector<double> V;           ///< paths x (steps + 1)
    std::vector<double> C;           ///< continuation estimates (Z at the terminal step)
    double value0 = 0.0;             ///< estimate of V_0
    [[nodiscard]] double v(std::size_t p, std::size_t i) const noexcept { return V[p * (steps + 1) + i]; }
};

struct StoppingPolicy {
    std::size_t steps = 0;
    std::vector<std::uint8_t> stop;  ///< paths x (steps + 1)
    std::vector<std::size_t> tau;    ///< first stopping step per path
    std::shared_ptr<const StoppingRule> rule;
};

struct DpConfig {
    Estimator estimator = Estimator::regression;
    RegressionConfig regression;
    std::size_t quantization_m = 2;
};

struct DpResult {
    ValueTable values;
    StoppingPolicy policy;
};

/// Backward recursion V_i = max(Z_i, E[V_{i+1} | A_i]). binomial and tree
/// need a state-payoff table; regression works on any table.
DpResult dp_backward(const PayoffTable& payoffs, const DpConfig& config = {});

// Binomial lattice ----------------------------------------------------------

struct BinomialResult {
    int level = 0;
    std::size_t steps = 0;
    double value = 0.0;
    /// V[i][l + i] and stop[i][l + i] for levels l = -i..i.
    std::vector<std::vector<double>> V;
    std::vector<std::vector<std::uint8_t>> stop;
    std::shared_ptr<const StoppingRule> rule;
};

/// Exact DP on the (step, level) lattice with 1/2-1/2 transitions.
BinomialResult binomial_value(const StatePayoff& g, int k, std::size_t steps);

// Quantized exit law and tree --------------------------------------------

/// Gauss rule for the unit exit time: m nodes matching E tau^j, j < 2m.
struct QuantizedExitLaw {
    std::vector<double> nodes;
    std::vector<double> weights;
    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }
    [[nodiscard]] double moment(int j) const;
};

QuantizedExitLaw quantize_exit_law(std::size_t m);

enum class TreeReduction { full_history, level, level_and_clock };

struct TreeConfig {
    TreeReduction reduction = TreeReduction::level_and_clock;
    std::size_t budget = 20'000'000;  ///< maximal number of tree states
};

struct TreeResult {
    double value = 0.0;
    std::size_t states = 0;
    bool stop_at_root = false;
    /// Level reduction only: V[i][l + i].
    std::vector<std::vector<double>> level_values;
};

/// Exact DP over (2m)-ary branching of (quantized increment, sign).
/// level: payoff g(i, t, a) is called with t = i 2^{-2k}; level_and_clock
/// tracks the quantized clock.
TreeResult tree_value(const ClockPayoff& g, int k, std::size_t steps, const QuantizedExitLaw& law,
                      const TreeConfig& config = {});

/// Full-history tree for a path functional evaluated at T_i ^ horizon.
TreeResult tree_value(const PathFunctional& F, int k, std::size_t steps, const QuantizedExitLaw& law,
                      double horizon = std::numeric_limits<double>::infinity(), std::size_t budget = 20'000'000);

// Policies -----------------------------------------------------------------

struct StoppingTime {
    std::size_t step = 0;
    double time = 0.0;  ///< T_step ^ horizon
};

/// First step j with V_j <= Z_j + kTieTolerance.
StoppingTime extract_stopping_time(const ValueTable& values, const PayoffTable& payoffs, std::size_t path);

struct LowerBound {
    double mean = 0.0;
    double se = 0.0;
    std::size_t samples = 0;
};

/// E[Z_tau] under `rule` on fresh paths (at least 1000).
LowerBound lower_bound_resimulate(const StoppingRule& rule, const PayoffTable& fresh);

struct SnellCheck {
    bool dominance = true;  ///< V >= Z everywhere
    bool terminal = true;   ///< V = Z at the last step
    bool first_entry = true;///< V = Z at tau, V > Z before
    bool supermartingale = true; ///< C <= V wherever a continuation estimate exists
    [[nodiscard]] bool ok() const noexcept { return dominance && terminal && first_entry && supermartingale; }
};

SnellCheck check_snell_invariants(const ValueTable& values, const PayoffTable& payoffs, const StoppingPolicy& policy);

// Backward equations -------------------------------------------------------

using Driver = std::function<double(double t, double y, double z)>;

struct BsdeConfig {
    std::size_t max_iterations = 100;
    double tolerance = 1e-14;
};

struct BsdeTreeResult {
    double Y0 = 0.0;
    double Z0 = 0.0;
    std::size_t states = 0;
    /// Level reduction only: Y[i][l + i].
    std::vector<std::vector<double>> level_values;
};

/// Y_i = E[Y_{i+1} | A_i] + g(T_i, Y_i, Z_i) 2^{-2k} with Z_i = E[Y_{i+1} eta_{i+1} | A_i] / 2^{-k},
/// solved by fixed-point iteration at every state. Terminal xi(steps, t, a).
BsdeTreeResult bsde_tree(const ClockPayoff& xi, const Driver& g, int k, std::size_t steps,
                         const QuantizedExitLaw& law, TreeReduction reduction = TreeReduction::level_and_clock,
                         const BsdeConfig& config = {});

struct BsdeRegressionResult {
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::vector<double> Y;  ///< paths x (steps + 1)
    std::vector<double> Z;  ///< paths x (steps + 1), 0 at the terminal step
    double Y0 = 0.0;
};

/// Regression variant on a table whose terminal column Z(., steps) is xi.
BsdeRegressionResult bsde_regression(const PayoffTable& terminal, const Driver& g, const RegressionConfig& reg = {},
                                     const BsdeConfig& config = {});

// Export -------------------------------------------------------------------

/// path,step,time,Z,V,stop
void write_value_table_csv(const ValueTable& values, const PayoffTable& payoffs, const StoppingPolicy& policy,
                           std::ostream& out, std::size_t max_paths = std::numeric_limits<std::size_t>::max());
/// step,level,value,stop
void write_lattice_csv(const BinomialResult& lattice, std::ostream& out);

}  // namespace wfic
