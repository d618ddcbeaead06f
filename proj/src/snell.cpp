#include "wfic/snell.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "wfic/error.hpp"
#include "wfic/exit_law.hpp"
#include "wfic/parallel.hpp"
#include "wfic/text.hpp"

namespace wfic {

std::size_t en_steps(int k, double T) {
    if (k < 1) throw DomainError("en: level must be >= 1");
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("en: horizon must be positive and finite");
    const double x = std::ldexp(T, 2 * k);
    return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::regression: return "regression";
        case Estimator::binomial: return "binomial";
        case Estimator::tree: return "tree";
    }
    return "unknown";
}

// Payoff tables ------------------------------------------------------------

namespace {

void check_sample(const std::vector<BrownianSkeleton>& skeletons, std::size_t steps, const char* who) {
    if (skeletons.empty()) throw ContractError(std::string(who) + ": empty path sample");
    const int k = skeletons.front().level();
    for (const auto& s : skeletons) {
        if (s.level() != k) throw ContractError(std::string(who) + ": skeletons of mixed levels");
        if (s.event_count() < steps) {
            throw ContractError(std::string(who) + ": skeleton has " + std::to_string(s.event_count()) +
                                " events, needs " + std::to_string(steps) + " (simulate with min_events)");
        }
    }
}

PayoffTable empty_table(const std::vector<BrownianSkeleton>& skeletons, std::size_t steps, double horizon) {
    PayoffTable t;
    t.level = skeletons.front().level();
    t.horizon = horizon;
    t.paths = skeletons.size();
    t.steps = steps;
    const std::size_t cells = t.paths * (steps + 1);
    t.Z.resize(cells);
    t.times.resize(cells);
    t.levels.resize(cells);
    t.signs.resize(cells);
    t.features.resize(cells * kFeatureCount);
    return t;
}

void record_state(PayoffTable& t, const BrownianSkeleton& s, std::size_t p, std::size_t i) {
    const std::size_t c = t.index(p, i);
    t.times[c] = s.time(i);
    t.levels[c] = s.level_index(i, 0);
    t.signs[c] = (i > 0 && s.coord(i) == 0) ? s.sign(i) : 0;
}

void check_payoff(double z, std::size_t p, std::size_t i) {
    if (!(z >= 0.0)) {
        throw ContractError("payoff table: payoff must be nonnegative, got " + text::fmt(z) + " at path " +
                            std::to_string(p) + " step " + std::to_string(i));
    }
}

void set_features(PayoffTable& t, std::size_t p, std::size_t i, double a, double mx, double time, double integral) {
    double* f = t.features.data() + t.index(p, i) * kFeatureCount;
    f[kFeatureLevel] = a;
    f[kFeatureMax] = mx;
    f[kFeatureTime] = time;
    f[kFeatureIntegral] = integral;
}

void set_payoff(PayoffTable& t, std::size_t p, std::size_t i, double z) {
    check_payoff(z, p, i);
    t.Z[t.index(p, i)] = z;
    t.features[t.index(p, i) * kFeatureCount + kFeaturePayoff] = z;
}

}  // namespace

PayoffTable payoff_table(const PathFunctional& F, const std::vector<BrownianSkeleton>& skeletons, double T) {
    if (skeletons.empty()) throw ContractError("payoff_table: empty path sample");
    const std::size_t steps = en_steps(skeletons.front().level(), T);
    check_sample(skeletons, steps, "payoff_table");
    PayoffTable table = empty_table(skeletons, steps, T);
    parallel_for(table.paths, [&](std::size_t p) {
        const auto& s = skeletons[p];
        const std::size_t dim = s.dim();
        auto acc = F.accumulator(dim);
        std::vector<double> prev(dim);
        std::vector<double> cur(dim);
        for (std::size_t j = 0; j < dim; ++j) prev[j] = s.value(0, j);
        double z = acc->evaluate(0.0, 0.0, prev, prev);
        double running_max = prev[0];
        double integral = 0.0;
        bool frozen = false;
        std::array<double, 4> frozen_features{};
        record_state(table, s, p, 0);
        set_features(table, p, 0, prev[0], running_max, 0.0, 0.0);
        set_payoff(table, p, 0, z);
        for (std::size_t i = 1; i <= steps; ++i) {
            record_state(table, s, p, i);
            const double t_prev = s.time(i - 1);
            const double t = s.time(i);
            if (!frozen && t <= T) {
                for (std::size_t j = 0; j < dim; ++j) cur[j] = s.value(i, j);
                z = acc->evaluate(t_prev, t, prev, cur);
                acc->absorb(t_prev, t, prev);
                integral += prev[0] * (t - t_prev);
                running_max = std::max(running_max, cur[0]);
                prev = cur;
                set_features(table, p, i, cur[0], running_max, t, integral);
            } else {
                if (!frozen) {
                    frozen = true;
                    z = acc->evaluate(t_prev, T, prev, prev);
                    integral += prev[0] * (T - t_prev);
                    frozen_features = {prev[0], running_max, T, integral};
                }
                set_features(table, p, i, frozen_features[0], frozen_features[1], frozen_features[2],
                             frozen_features[3]);
            }
            set_payoff(table, p, i, z);
        }
    });
    return table;
}

PayoffTable state_payoff_table(const StatePayoff& g, const std::vector<BrownianSkeleton>& skeletons,
                               std::size_t steps) {
    if (!g) throw ContractError("state_payoff_table: payoff function required");
    check_sample(skeletons, steps, "state_payoff_table");
    PayoffTable table = empty_table(skeletons, steps, std::numeric_limits<double>::infinity());
    table.state_payoff = g;
    parallel_for(table.paths, [&](std::size_t p) {
        const auto& s = skeletons[p];
        double running_max = s.value(0, 0);
        double integral = 0.0;
        for (std::size_t i = 0; i <= steps; ++i) {
            record_state(table, s, p, i);
            const double a = s.value(i, 0);
            if (i > 0) integral += s.value(i - 1, 0) * (s.time(i) - s.time(i - 1));
            running_max = std::max(running_max, a);
            set_features(table, p, i, a, running_max, s.time(i), integral);
            set_payoff(table, p, i, g(i, a));
        }
    });
    return table;
}

// Regression ---------------------------------------------------------------

namespace {

// Least-squares fit of a target on polynomial features of one step.
class StepFit {
public:
    StepFit(const PayoffTable& table, std::size_t i, const std::vector<double>& y, const RegressionConfig& config) {
        const int degree = config.degree;
        const std::size_t n = table.paths;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (f == kFeaturePayoff && !config.payoff_feature) continue;
            double mean = 0.0;
            for (std::size_t p = 0; p < n; ++p) mean += table.feature_row(p, i)[f];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                const double d = table.feature_row(p, i)[f] - mean;
                var += d * d;
            }
            const double sd = std::sqrt(var / static_cast<double>(n));
            // Constant columns carry no information beyond the intercept.
            if (sd > 1e-12 * (1.0 + std::abs(mean))) {
                kept_.push_back(f);
                mean_.push_back(mean);
                sd_.push_back(sd);
            }
        }
        build_monomials(degree);
        const std::size_t cols = monomials_.size();
        if (n < cols) {
            throw NumericalError("regression at step " + std::to_string(i) + ": " + std::to_string(n) +
                                 " paths for " + std::to_string(cols) + " basis functions (" + basis_text() + ")");
        }
        Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
        Eigen::VectorXd Y(static_cast<Eigen::Index>(n));
        std::vector<double> row(cols);
        for (std::size_t p = 0; p < n; ++p) {
            basis(table.feature_row(p, i), row);
            for (std::size_t c = 0; c < cols; ++c) X(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)) = row[c];
            Y(static_cast<Eigen::Index>(p)) = y[p];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() == 0) {
            throw NumericalError("regression at step " + std::to_string(i) + ": design matrix has rank 0 (" +
                                 basis_text() + ")");
        }
        coef_ = qr.solve(Y);
    }

    [[nodiscard]] double predict(const double* features) const {
        std::vector<double> row(monomials_.size());
        basis(features, row);
        double out = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) out += coef_(static_cast<Eigen::Index>(c)) * row[c];
        return out;
    }

private:
    void build_monomials(int degree) {
        const std::size_t d = kept_.size();
        std::vector<int> current(d, 0);
        // All exponent vectors of total degree <= degree, graded order.
        for (int total = 0; total <= degree; ++total) {
            std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
                if (pos + 1 == d || d == 0) {
                    if (d != 0) current[pos] = left;
                    if (d == 0 && left != 0) return;
                    monomials_.push_back(current);
                    if (d != 0) current[pos] = 0;
                    return;
                }
                for (int e = left; e >= 0; --e) {
                    current[pos] = e;
                    rec(pos + 1, left - e);
                }
                current[pos] = 0;
            };
            rec(0, total);
        }
    }

    void basis(const double* features, std::vector<double>& row) const {
        std::array<double, kFeatureCount> z{};
        for (std::size_t f = 0; f < kept_.size(); ++f) z[f] = (features[kept_[f]] - mean_[f]) / sd_[f];
        for (std::size_t c = 0; c < monomials_.size(); ++c) {
            double v = 1.0;
            for (std::size_t f = 0; f < kept_.size(); ++f) {
                for (int e = 0; e < monomials_[c][f]; ++e) v *= z[f];
            }
            row[c] = v;
        }
    }

    std::string basis_text() const {
        static const char* names[] = {"level", "running-max", "time", "running-integral", "payoff"};
        std::string s = "features:";
        for (std::size_t f : kept_) s += std::string(" ") + names[f];
        if (kept_.empty()) s += " none";
        s += ", " + std::to_string(monomials_.size()) + " monomials";
        return s;
    }

    std::vector<std::size_t> kept_;
    std::vector<double> mean_;
    std::vector<double> sd_;
    std::vector<std::vector<int>> monomials_;
    Eigen::VectorXd coef_;
};

class RegressionRule final : public StoppingRule {
public:
    explicit RegressionRule(std::size_t steps) : fits_(steps) {}
    void set(std::size_t i, std::shared_ptr<const StepFit> fit) { fits_[i] = std::move(fit); }

    bool stop(const PayoffTable& table, std::size_t p, std::size_t i) const override {
        if (i >= fits_.size()) return true;
        return table.z(p, i) >= fits_[i]->predict(table.feature_row(p, i)) - kTieTolerance;
    }
    std::string describe() const override { return "regression"; }

private:
    std::vector<std::shared_ptr<const StepFit>> fits_;
};

// Stop/continue decisions on the (step, level) lattice.
class LatticeRule final : public StoppingRule {
public:
    LatticeRule(std::vector<std::vector<std::uint8_t>> stop, std::string name)
        : stop_(std::move(stop)), name_(std::move(name)) {}

    bool stop(const PayoffTable& table, std::size_t p, std::size_t i) const override {
        const std::int64_t l = table.levels[table.index(p, i)];
        const auto steps = stop_.size() - 1;
        if (i > steps || l < -static_cast<std::int64_t>(i) || l > static_cast<std::int64_t>(i)) {
            throw DomainError("lattice policy probed outside the lattice at step " + std::to_string(i) +
                              ", level " + std::to_string(l));
        }
        return stop_[i][static_cast<std::size_t>(l + static_cast<std::int64_t>(i))] != 0;
    }
    std::string describe() const override { return name_; }

private:
    std::vector<std::vector<std::uint8_t>> stop_;
    std::string name_;
};

void finish_policy(StoppingPolicy& policy, std::size_t paths) {
    policy.tau.assign(paths, policy.steps);
    for (std::size_t p = 0; p < paths; ++p) {
        for (std::size_t i = 0; i <= policy.steps; ++i) {
            if (policy.stop[p * (policy.steps + 1) + i]) {
                policy.tau[p] = i;
                break;
            }
        }
    }
}

DpResult regression_dp(const PayoffTable& table, const RegressionConfig& config) {
    if (config.degree < 0) throw DomainError("regression: degree must be >= 0");
    const std::size_t n = table.paths;
    const std::size_t steps = table.steps;
    DpResult out;
    auto& V = out.values;
    V.estimator = Estimator::regression;
    V.paths = n;
    V.steps = steps;
    V.V.resize(n * (steps + 1));
    V.C.resize(n * (steps + 1));
    auto& P = out.policy;
    P.steps = steps;
    P.stop.assign(n * (steps + 1), 0);
    auto rule = std::make_shared<RegressionRule>(steps);

    std::vector<double> cashflow(n);
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t c = table.index(p, steps);
        V.V[c] = table.Z[c];
        V.C[c] = table.Z[c];
        P.stop[c] = 1;
        cashflow[p] = table.Z[c];
    }
    std::vector<double> target(n);
    for (std::size_t step = steps; step-- > 0;) {
        for (std::size_t p = 0; p < n; ++p) {
            target[p] = config.target == RegressionTarget::value ? V.V[table.index(p, step + 1)] : cashflow[p];
        }
        auto fit = std::make_shared<const StepFit>(table, step, target, config);
        parallel_for(n, [&](std::size_t p) {
            const std::size_t c = table.index(p, step);
            const double cont = fit->predict(table.feature_row(p, step));
            const double z = table.Z[c];
            const bool stop = z >= cont - kTieTolerance;
            V.C[c] = cont;
            V.V[c] = std::max(z, cont);
            P.stop[c] = stop ? 1 : 0;
            if (stop) cashflow[p] = z;
        });
        rule->set(step, fit);
    }
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        sum += config.target == RegressionTarget::value ? V.V[table.index(p, 0)] : cashflow[p];
    }
    V.value0 = sum / static_cast<double>(n);
    P.rule = rule;
    finish_policy(P, n);
    return out;
}

// Fills values and policy of a path table from a level lattice.
DpResult lattice_dp(const PayoffTable& table, const std::vector<std::vector<double>>& lattice, double value0,
                    Estimator estimator, std::shared_ptr<const StoppingRule> rule) {
    const std::size_t n = table.paths;
    const std::size_t steps = table.steps;
    DpResult out;
    auto& V = out.values;
    V.estimator = estimator;
    V.paths = n;
    V.steps = steps;
    V.V.resize(n * (steps + 1));
    V.C.resize(n * (steps + 1));
    V.value0 = value0;
    auto& P = out.policy;
    P.steps = steps;
    P.stop.assign(n * (steps + 1), 0);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i <= steps; ++i) {
            const std::size_t c = table.index(p, i);
            const std::int64_t l = table.levels[c];
            const auto ii = static_cast<std::int64_t>(i);
            if (l < -ii || l > ii) throw DomainError("lattice estimator: path leaves the lattice");
            const double z = table.Z[c];
            double cont = z;
            if (i < steps) {
                const auto& next = lattice[i + 1];
                cont = 0.5 * (next[static_cast<std::size_t>(l + 1 + ii + 1)] +
                              next[static_cast<std::size_t>(l - 1 + ii + 1)]);
            }
            V.C[c] = cont;
            V.V[c] = lattice[i][static_cast<std::size_t>(l + ii)];
            P.stop[c] = rule->stop(table, p, i) ? 1 : 0;
        }
    }
    P.rule = std::move(rule);
    finish_policy(P, n);
    return out;
}

}  // namespace

DpResult dp_backward(const PayoffTable& payoffs, const DpConfig& config) {
    if (payoffs.paths == 0) throw ContractError("dp_backward: empty payoff table");
    switch (config.estimator) {
        case Estimator::regression:
            return regression_dp(payoffs, config.regression);
        case Estimator::binomial: {
            if (!payoffs.state_payoff) throw ContractError("dp_backward: binomial estimator needs a state payoff");
            auto lattice = binomial_value(payoffs.state_payoff, payoffs.level, payoffs.steps);
            return lattice_dp(payoffs, lattice.V, lattice.value, Estimator::binomial, lattice.rule);
        }
        case Estimator::tree: {
            if (!payoffs.state_payoff) throw ContractError("dp_backward: tree estimator needs a state payoff");
            const auto law = quantize_exit_law(config.quantization_m);
            const StatePayoff g = payoffs.state_payoff;
            TreeConfig tc;
            tc.reduction = TreeReduction::level;
            const auto tree = tree_value([g](std::size_t i, double, double a) { return g(i, a); }, payoffs.level,
                                         payoffs.steps, law, tc);
            const double h = level_step(payoffs.level);
            std::vector<std::vector<std::uint8_t>> stop(payoffs.steps + 1);
            for (std::size_t i = 0; i <= payoffs.steps; ++i) {
                stop[i].resize(2 * i + 1);
                for (std::size_t idx = 0; idx < 2 * i + 1; ++idx) {
                    const double a = static_cast<double>(static_cast<std::int64_t>(idx) - static_cast<std::int64_t>(i)) * h;
                    stop[i][idx] = g(i, a) >= tree.level_values[i][idx] - kTieTolerance ? 1 : 0;
                }
            }
            auto rule = std::make_shared<LatticeRule>(std::move(stop), "tree");
            return lattice_dp(payoffs, tree.level_values, tree.value, Estimator::tree, rule);
        }
    }
    throw ContractError("dp_backward: unknown estimator");
}

// Binomial lattice ---------------------------------------------------------

BinomialResult binomial_value(const StatePayoff& g, int k, std::size_t steps) {
    if (!g) throw ContractError("binomial_value: payoff function required");
    const double h = level_step(k);
    BinomialResult out;
    out.level = k;
    out.steps = steps;
    out.V.resize(steps + 1);
    out.stop.resize(steps + 1);
    auto payoff = [&](std::size_t i, std::int64_t l) {
        const double z = g(i, static_cast<double>(l) * h);
        if (!(z >= 0.0)) throw ContractError("binomial_value: payoff must be nonnegative");
        return z;
    };
    const auto n = static_cast<std::int64_t>(steps);
    out.V[steps].resize(2 * steps + 1);
    out.stop[steps].assign(2 * steps + 1, 1);
    for (std::int64_t l = -n; l <= n; ++l) out.V[steps][static_cast<std::size_t>(l + n)] = payoff(steps, l);
    for (std::size_t i = steps; i-- > 0;) {
        const auto ii = static_cast<std::int64_t>(i);
        out.V[i].resize(2 * i + 1);
        out.stop[i].resize(2 * i + 1);
        const auto& next = out.V[i + 1];
        for (std::int64_t l = -ii; l <= ii; ++l) {
            const double cont = 0.5 * (next[static_cast<std::size_t>(l + 1 + ii + 1)] +
                                       next[static_cast<std::size_t>(l - 1 + ii + 1)]);
            const double z = payoff(i, l);
            const auto idx = static_cast<std::size_t>(l + ii);
            out.stop[i][idx] = z >= cont - kTieTolerance ? 1 : 0;
            out.V[i][idx] = std::max(z, cont);
        }
    }
    out.value = out.V[0][0];
    out.rule = std::make_shared<LatticeRule>(out.stop, "binomial");
    return out;
}

// Quantized exit law -------------------------------------------------------

double QuantizedExitLaw::moment(int j) const {
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * std::pow(nodes[q], j);
    return s;
}

QuantizedExitLaw quantize_exit_law(std::size_t m) {
    if (m < 1 || m > 3) throw DomainError("quantize_exit_law: m must be 1, 2 or 3");
    QuantizedExitLaw law;
    if (m == 1) {
        law.nodes = {1.0};
        law.weights = {1.0};
        return law;
    }
    // Golub-Welsch: Cholesky of the moment Hankel matrix gives the Jacobi
    // matrix of the orthogonal polynomials; only moments below 2m are used.
    const auto M = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd H(M, M);
    for (Eigen::Index i = 0; i < M; ++i) {
        for (Eigen::Index j = 0; j < M; ++j) H(i, j) = UnitExitLaw::moment(static_cast<int>(i + j));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) throw NumericalError("quantize_exit_law: moment matrix not positive definite");
    const Eigen::MatrixXd R = llt.matrixU();
    Eigen::VectorXd last(M);  // column m of the extended factor
    for (Eigen::Index i = 0; i < M; ++i) {
        double s = UnitExitLaw::moment(static_cast<int>(i + M));
        for (Eigen::Index l = 0; l < i; ++l) s -= R(l, i) * last(l);
        last(i) = s / R(i, i);
    }
    auto upper = [&](Eigen::Index i) { return i + 1 < M ? R(i, i + 1) : last(i); };
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(M, M);
    for (Eigen::Index j = 0; j < M; ++j) {
        J(j, j) = upper(j) / R(j, j) - (j > 0 ? R(j - 1, j) / R(j - 1, j - 1) : 0.0);
        if (j > 0) J(j, j - 1) = J(j - 1, j) = R(j, j) / R(j - 1, j - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    if (eig.info() != Eigen::Success) throw NumericalError("quantize_exit_law: eigen solver failed");
    const double mu0 = UnitExitLaw::moment(0);
    for (Eigen::Index q = 0; q < M; ++q) {
        const double v = eig.eigenvectors()(0, q);
        law.nodes.push_back(eig.eigenvalues()(q));
        law.weights.push_back(mu0 * v * v);
    }
    for (double x : law.nodes) {
        if (!(x > 0.0)) throw NumericalError("quantize_exit_law: non-positive node");
    }
    return law;
}

// Trees ---------------------------------------------------------------------

namespace {

std::size_t binom(std::size_t n, std::size_t r) {
    if (r > n) return 0;
    double out = 1.0;
    for (std::size_t i = 1; i <= r; ++i) out = out * static_cast<double>(n - r + i) / static_cast<double>(i);
    return static_cast<std::size_t>(std::llround(out));
}

std::size_t clock_state_count(std::size_t steps, std::size_t m) {
    std::size_t total = 0;
    for (std::size_t i = 0; i <= steps; ++i) total += (2 * i + 1) * binom(i + m - 1, m - 1);
    return total;
}

// Compositions of i into m parts, with lookup from counts to index.
struct Layer {
    std::vector<std::array<std::uint32_t, 3>> comps;
    std::unordered_map<std::uint64_t, std::size_t> index;

    static std::uint64_t key(const std::array<std::uint32_t, 3>& c) {
        return (static_cast<std::uint64_t>(c[0]) << 40) | (static_cast<std::uint64_t>(c[1]) << 20) | c[2];
    }
};

Layer make_layer(std::size_t i, std::size_t m) {
    Layer layer;
    const auto n = static_cast<std::uint32_t>(i);
    if (m == 1) {
        layer.comps.push_back({n, 0, 0});
    } else if (m == 2) {
        for (std::uint32_t a = 0; a <= n; ++a) layer.comps.push_back({a, n - a, 0});
    } else {
        for (std::uint32_t a = 0; a <= n; ++a) {
            for (std::uint32_t b = 0; a + b <= n; ++b) layer.comps.push_back({a, b, n - a - b});
        }
    }
    for (std::size_t c = 0; c < layer.comps.size(); ++c) layer.index.emplace(Layer::key(layer.comps[c]), c);
    return layer;
}

double clock_of(const std::array<std::uint32_t, 3>& c, const QuantizedExitLaw& law, double h2) {
    double t = 0.0;
    for (std::size_t q = 0; q < law.size(); ++q) t += static_cast<double>(c[q]) * law.nodes[q];
    return h2 * t;
}

void check_law(const QuantizedExitLaw& law) {
    if (law.size() < 1 || law.size() > 3 || law.nodes.size() != law.weights.size()) {
        throw DomainError("tree: quantized law must have 1 to 3 nodes");
    }
}

// Generic backward pass over level or level-and-clock states. `combine`
// maps (i, t, a, continuation mean, continuation of eta-weighted values) to
// the state value.
template <typename Terminal, typename Combine>
std::size_t reduced_backward(int k, std::size_t steps, const QuantizedExitLaw& law, TreeReduction reduction,
                             std::size_t budget, Terminal&& terminal, Combine&& combine,
                             std::vector<std::vector<double>>* level_table, double& root) {
    check_law(law);
    const double h = level_step(k);
    const double h2 = h * h;
    const std::size_t m = law.size();
    if (reduction == TreeReduction::level) {
        std::size_t states = 0;
        for (std::size_t i = 0; i <= steps; ++i) states += 2 * i + 1;
        if (states > budget) throw BudgetError("tree: " + std::to_string(states) + " states exceed the budget", states);
        std::vector<std::vector<double>> V(steps + 1);
        const auto n = static_cast<std::int64_t>(steps);
        V[steps].resize(2 * steps + 1);
        for (std::int64_t l = -n; l <= n; ++l) {
            V[steps][static_cast<std::size_t>(l + n)] =
                terminal(steps, static_cast<double>(steps) * h2, static_cast<double>(l) * h);
        }
        for (std::size_t i = steps; i-- > 0;) {
            const auto ii = static_cast<std::int64_t>(i);
            V[i].resize(2 * i + 1);
            const auto& next = V[i + 1];
            for (std::int64_t l = -ii; l <= ii; ++l) {
                const double up = next[static_cast<std::size_t>(l + 1 + ii + 1)];
                const double down = next[static_cast<std::size_t>(l - 1 + ii + 1)];
                double mean = 0.0;
                double signed_mean = 0.0;
                for (std::size_t q = 0; q < m; ++q) {
                    mean += law.weights[q] * (0.5 * (up + down));
                    signed_mean += law.weights[q] * (0.5 * (up - down));
                }
                V[i][static_cast<std::size_t>(l + ii)] =
                    combine(i, static_cast<double>(i) * h2, static_cast<double>(l) * h, mean, signed_mean);
            }
        }
        root = V[0][0];
        if (level_table) *level_table = std::move(V);
        return states;
    }
    if (reduction != TreeReduction::level_and_clock) throw ContractError("tree: unsupported reduction");
    const std::size_t states = clock_state_count(steps, m);
    if (states > budget) throw BudgetError("tree: " + std::to_string(states) + " states exceed the budget", states);

    Layer next_layer = make_layer(steps, m);
    const auto n = static_cast<std::int64_t>(steps);
    std::vector<double> next((2 * steps + 1) * next_layer.comps.size());
    for (std::size_t c = 0; c < next_layer.comps.size(); ++c) {
        const double t = clock_of(next_layer.comps[c], law, h2);
        for (std::int64_t l = -n; l <= n; ++l) {
            next[c * (2 * steps + 1) + static_cast<std::size_t>(l + n)] = terminal(steps, t, static_cast<double>(l) * h);
        }
    }
    for (std::size_t i = steps; i-- > 0;) {
        Layer layer = make_layer(i, m);
        const auto ii = static_cast<std::int64_t>(i);
        const std::size_t width = 2 * i + 1;
        const std::size_t next_width = 2 * i + 3;
        std::vector<double> cur(width * layer.comps.size());
        for (std::size_t c = 0; c < layer.comps.size(); ++c) {
            const auto& comp = layer.comps[c];
            const double t = clock_of(comp, law, h2);
            std::array<std::size_t, 3> child{};
            for (std::size_t q = 0; q < m; ++q) {
                auto bumped = comp;
                ++bumped[q];
                child[q] = next_layer.index.at(Layer::key(bumped));
            }
            for (std::int64_t l = -ii; l <= ii; ++l) {
                double mean = 0.0;
                double signed_mean = 0.0;
                for (std::size_t q = 0; q < m; ++q) {
                    const double up = next[child[q] * next_width + static_cast<std::size_t>(l + 1 + ii + 1)];
                    const double down = next[child[q] * next_width + static_cast<std::size_t>(l - 1 + ii + 1)];
                    mean += law.weights[q] * (0.5 * (up + down));
                    signed_mean += law.weights[q] * (0.5 * (up - down));
                }
                cur[c * width + static_cast<std::size_t>(l + ii)] =
                    combine(i, t, static_cast<double>(l) * h, mean, signed_mean);
            }
        }
        next = std::move(cur);
        next_layer = std::move(layer);
    }
    root = next[0];
    return states;
}

}  // namespace

TreeResult tree_value(const ClockPayoff& g, int k, std::size_t steps, const QuantizedExitLaw& law,
                      const TreeConfig& config) {
    if (!g) throw ContractError("tree_value: payoff function required");
    if (config.reduction == TreeReduction::full_history) {
        throw ContractError("tree_value: full-history trees take a path functional");
    }
    auto payoff = [&](std::size_t i, double t, double a) {
        const double z = g(i, t, a);
        if (!(z >= 0.0)) throw ContractError("tree_value: payoff must be nonnegative");
        return z;
    };
    TreeResult out;
    out.states = reduced_backward(
        k, steps, law, config.reduction, config.budget, payoff,
        [&](std::size_t i, double t, double a, double mean, double) { return std::max(payoff(i, t, a), mean); },
        config.reduction == TreeReduction::level ? &out.level_values : nullptr, out.value);
    out.stop_at_root = payoff(0, 0.0, 0.0) >= out.value - kTieTolerance;
    return out;
}

TreeResult tree_value(const PathFunctional& F, int k, std::size_t steps, const QuantizedExitLaw& law, double horizon,
                      std::size_t budget) {
    check_law(law);
    const std::size_t branches = 2 * law.size();
    double nodes = 0.0;
    double layer = 1.0;
    for (std::size_t i = 0; i <= steps; ++i) {
        nodes += layer;
        layer *= static_cast<double>(branches);
    }
    if (nodes > static_cast<double>(budget)) {
        throw BudgetError("tree: " + text::fmt(nodes) + " states exceed the budget " + std::to_string(budget),
                          nodes > 1.8e19 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(nodes));
    }
    const double h = level_step(k);
    std::vector<double> times{0.0};
    std::vector<double> values{0.0};

    auto payoff = [&]() {
        const double t = times.back();
        double z = 0.0;
        if (t <= horizon) {
            PiecewiseConstantPath path(times, values, 1, t);
            z = evaluate(F, path, t);
        } else {
            std::size_t keep = 0;
            while (keep < times.size() && times[keep] <= horizon) ++keep;
            PiecewiseConstantPath path(std::vector<double>(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(keep)),
                                       std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(keep)),
                                       1, horizon);
            z = evaluate(F, path, horizon);
        }
        if (!(z >= 0.0)) throw ContractError("tree_value: payoff must be nonnegative");
        return z;
    };
    std::function<double(std::size_t)> solve = [&](std::size_t i) -> double {
        const double z = payoff();
        if (i == steps) return z;
        double cont = 0.0;
        for (std::size_t q = 0; q < law.size(); ++q) {
            double pair = 0.0;
            for (int s : {1, -1}) {
                times.push_back(times.back() + h * h * law.nodes[q]);
                values.push_back(values.back() + static_cast<double>(s) * h);
                pair += 0.5 * solve(i + 1);
                times.pop_back();
                values.pop_back();
            }
            cont += law.weights[q] * pair;
        }
        return std::max(z, cont);
    };
    TreeResult out;
    out.states = static_cast<std::size_t>(nodes);
    out.value = solve(0);
    out.stop_at_root = payoff() >= out.value - kTieTolerance;
    return out;
}

// Policies -----------------------------------------------------------------

StoppingTime extract_stopping_time(const ValueTable& values, const PayoffTable& payoffs, std::size_t path) {
    if (path >= payoffs.paths || values.steps != payoffs.steps || values.paths != payoffs.paths) {
        throw ContractError("extract_stopping_time: inconsistent tables");
    }
    for (std::size_t i = 0; i <= payoffs.steps; ++i) {
        if (values.v(path, i) <= payoffs.z(path, i) + kTieTolerance) {
            return {i, std::min(payoffs.times[payoffs.index(path, i)], payoffs.horizon)};
        }
    }
    const std::size_t last = payoffs.steps;
    return {last, std::min(payoffs.times[payoffs.index(path, last)], payoffs.horizon)};
}

LowerBound lower_bound_resimulate(const StoppingRule& rule, const PayoffTable& fresh) {
    if (fresh.paths < 1000) {
        throw ContractError("lower_bound_resimulate: need at least 1000 fresh paths, got " +
                            std::to_string(fresh.paths));
    }
    std::vector<double> realized(fresh.paths);
    parallel_for(fresh.paths, [&](std::size_t p) {
        std::size_t i = 0;
        while (i < fresh.steps && !rule.stop(fresh, p, i)) ++i;
        realized[p] = fresh.z(p, i);
    });
    double mean = 0.0;
    for (double v : realized) mean += v;
    mean /= static_cast<double>(realized.size());
    double ss = 0.0;
    for (double v : realized) ss += (v - mean) * (v - mean);
    LowerBound lb;
    lb.mean = mean;
    lb.samples = realized.size();
    lb.se = std::sqrt(ss / static_cast<double>(realized.size() - 1) / static_cast<double>(realized.size()));
    return lb;
}

SnellCheck check_snell_invariants(const ValueTable& values, const PayoffTable& payoffs, const StoppingPolicy& policy) {
    SnellCheck c;
    for (std::size_t p = 0; p < payoffs.paths; ++p) {
        for (std::size_t i = 0; i <= payoffs.steps; ++i) {
            const std::size_t idx = payoffs.index(p, i);
            const double v = values.V[idx];
            const double z = payoffs.Z[idx];
            if (v < z) c.dominance = false;
            if (i == payoffs.steps && v != z) c.terminal = false;
            if (i < payoffs.steps && values.C[idx] > v) c.supermartingale = false;
            const std::size_t tau = policy.tau[p];
            if (i == tau && !(v - z <= kTieTolerance)) c.first_entry = false;
            if (i < tau && !(v - z > kTieTolerance)) c.first_entry = false;
        }
    }
    return c;
}

// Backward equations -------------------------------------------------------

namespace {

double solve_fixed_point(double mean, double t, double z, double h2, const Driver& g, const BsdeConfig& config) {
    double y = mean;
    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        const double next = mean + g(t, y, z) * h2;
        if (!std::isfinite(next)) throw NumericalError("bsde: non-finite iterate");
        if (std::abs(next - y) <= config.tolerance * (1.0 + std::abs(next))) return next;
        y = next;
    }
    throw NumericalError("bsde: fixed-point iteration did not converge in " + std::to_string(config.max_iterations) +
                         " iterations (is 2^{-2k} Lip(g) < 1?)");
}

}  // namespace

BsdeTreeResult bsde_tree(const ClockPayoff& xi, const Driver& g, int k, std::size_t steps, const QuantizedExitLaw& law,
                         TreeReduction reduction, const BsdeConfig& config) {
    if (!xi || !g) throw ContractError("bsde_tree: terminal value and driver are required");
    if (reduction == TreeReduction::full_history) throw ContractError("bsde_tree: use level or level_and_clock");
    const double h = level_step(k);
    BsdeTreeResult out;
    double root_z = 0.0;
    out.states = reduced_backward(
        k, steps, law, reduction, std::numeric_limits<std::size_t>::max(),
        [&](std::size_t i, double t, double a) { return xi(i, t, a); },
        [&](std::size_t i, double t, double, double mean, double signed_mean) {
            const double z = signed_mean / h;
            if (i == 0) root_z = z;
            return solve_fixed_point(mean, t, z, h * h, g, config);
        },
        reduction == TreeReduction::level ? &out.level_values : nullptr, out.Y0);
    out.Z0 = root_z;
    return out;
}

BsdeRegressionResult bsde_regression(const PayoffTable& terminal, const Driver& g, const RegressionConfig& reg,
                                     const BsdeConfig& config) {
    if (!g) throw ContractError("bsde_regression: driver required");
    const std::size_t n = terminal.paths;
    const std::size_t steps = terminal.steps;
    const double h = level_step(terminal.level);
    BsdeRegressionResult out;
    out.paths = n;
    out.steps = steps;
    out.Y.resize(n * (steps + 1));
    out.Z.assign(n * (steps + 1), 0.0);
    for (std::size_t p = 0; p < n; ++p) out.Y[terminal.index(p, steps)] = terminal.z(p, steps);
    std::vector<double> next(n);
    std::vector<double> signed_next(n);
    for (std::size_t i = steps; i-- > 0;) {
        for (std::size_t p = 0; p < n; ++p) {
            next[p] = out.Y[terminal.index(p, i + 1)];
            signed_next[p] = next[p] * static_cast<double>(terminal.signs[terminal.index(p, i + 1)]);
        }
        const StepFit mean_fit(terminal, i, next, reg);
        const StepFit z_fit(terminal, i, signed_next, reg);
        parallel_for(n, [&](std::size_t p) {
            const std::size_t c = terminal.index(p, i);
            const double* f = terminal.feature_row(p, i);
            const double z = z_fit.predict(f) / h;
            out.Z[c] = z;
            out.Y[c] = solve_fixed_point(mean_fit.predict(f), terminal.times[c], z, h * h, g, config);
        });
    }
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += out.Y[terminal.index(p, 0)];
    out.Y0 = s / static_cast<double>(n);
    return out;
}

// Export -------------------------------------------------------------------

void write_value_table_csv(const ValueTable& values, const PayoffTable& payoffs, const StoppingPolicy& policy,
                           std::ostream& out, std::size_t max_paths) {
    out << "path,step,time,Z,V,stop\n";
    const std::size_t n = std::min(max_paths, payoffs.paths);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i <= payoffs.steps; ++i) {
            const std::size_t c = payoffs.index(p, i);
            out << p << ',' << i << ',' << text::fmt(std::min(payoffs.times[c], payoffs.horizon)) << ','
                << text::fmt(payoffs.Z[c]) << ',' << text::fmt(values.V[c]) << ',' << int(policy.stop[c]) << '\n';
        }
    }
}

void write_lattice_csv(const BinomialResult& lattice, std::ostream& out) {
    out << "step,level,value,stop\n";
    const double h = level_step(lattice.level);
    for (std::size_t i = 0; i <= lattice.steps; ++i) {
        const auto ii = static_cast<std::int64_t>(i);
        for (std::int64_t l = -ii; l <= ii; l += 2) {
            const auto idx = static_cast<std::size_t>(l + ii);
            out << i << ',' << text::fmt(static_cast<double>(l) * h) << ',' << text::fmt(lattice.V[i][idx]) << ','
                << int(lattice.stop[i][idx]) << '\n';
        }
    }
}

}  // namespace wfic
