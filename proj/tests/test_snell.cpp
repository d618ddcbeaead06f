#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "wfic/error.hpp"
#include "wfic/exit_law.hpp"
#include "wfic/snell.hpp"

using namespace wfic;

namespace {

StatePayoff put(double K) {
    return [K](std::size_t, double a) { return std::max(K - a, 0.0); };
}

// Plain memoized recursion over (step, level).
double recursive_value(int k, std::size_t steps, double K) {
    const double h = std::ldexp(1.0, -k);
    std::map<std::pair<std::size_t, long>, double> memo;
    auto rec = [&](auto&& self, std::size_t i, long l) -> double {
        const double z = std::max(K - static_cast<double>(l) * h, 0.0);
        if (i == steps) return z;
        const auto key = std::make_pair(i, l);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        const double v = std::max(z, 0.5 * (self(self, i + 1, l + 1) + self(self, i + 1, l - 1)));
        memo[key] = v;
        return v;
    };
    return rec(rec, 0, 0);
}

std::vector<BrownianSkeleton> sample(int k, double T, std::size_t n, std::uint64_t seed) {
    std::vector<BrownianSkeleton> out;
    SkeletonOptions o;
    o.min_events = en_steps(k, T);
    for (std::size_t p = 0; p < n; ++p) {
        RandomState rng(seed, p);
        out.push_back(build_skeleton(k, 1, T, rng, o));
    }
    return out;
}

}  // namespace

TEST(Snell, StepCount) {
    EXPECT_EQ(en_steps(2, 0.75), 12u);
    EXPECT_EQ(en_steps(3, 1.0), 64u);
    EXPECT_EQ(en_steps(1, 0.3), 2u);
    EXPECT_THROW((void)en_steps(0, 1.0), DomainError);
}

TEST(Snell, BinomialMatchesRecursion) {
    const auto b = binomial_value(put(0.25), 2, 12);
    EXPECT_NEAR(b.value, recursive_value(2, 12, 0.25), 1e-14);
    EXPECT_NEAR(b.value, 0.4915771484375, 1e-14);
    for (std::size_t i = 0; i <= 12; ++i) {
        for (std::size_t l = 0; l < b.V[i].size(); ++l) {
            const double a = (static_cast<double>(l) - static_cast<double>(i)) * 0.25;
            EXPECT_GE(b.V[i][l], std::max(0.25 - a, 0.0) - 1e-15);
        }
    }
}

TEST(Snell, LevelTreeEqualsBinomial) {
    const auto law = quantize_exit_law(2);
    TreeConfig cfg;
    cfg.reduction = TreeReduction::level;
    const ClockPayoff g = [](std::size_t, double, double a) { return std::max(0.25 - a, 0.0); };
    const auto t = tree_value(g, 2, 12, law, cfg);
    EXPECT_NEAR(t.value, binomial_value(put(0.25), 2, 12).value, 1e-12);
}

TEST(Snell, FullHistoryTreeRespectsBudget) {
    const auto law = quantize_exit_law(2);
    EXPECT_THROW(tree_value(running_max(), 3, 64, law, 1.0, 1000), BudgetError);
}

TEST(Snell, QuantizedExitLawMatchesMoments) {
    const auto q2 = quantize_exit_law(2);
    ASSERT_EQ(q2.size(), 2u);
    EXPECT_NEAR(q2.nodes[0], 0.656905, 1e-6);
    EXPECT_NEAR(q2.nodes[1], 2.943095, 1e-6);
    EXPECT_NEAR(q2.weights[0], 0.849927, 1e-6);
    EXPECT_NEAR(q2.weights[1], 0.150073, 1e-6);
    for (std::size_t m : {1u, 2u, 3u}) {
        const auto q = quantize_exit_law(m);
        double w = 0.0;
        for (double x : q.weights) w += x;
        EXPECT_NEAR(w, 1.0, 1e-12);
        for (int j = 1; j < static_cast<int>(2 * m); ++j) {
            EXPECT_NEAR(q.moment(j), UnitExitLaw::moment(j), 1e-9 * UnitExitLaw::moment(j)) << "m=" << m << " j=" << j;
        }
    }
    EXPECT_THROW(quantize_exit_law(4), DomainError);
}

TEST(Snell, LinearBsdeHasClosedForm) {
    const auto law = quantize_exit_law(2);
    const ClockPayoff one = [](std::size_t, double, double) { return 1.0; };
    const Driver g = [](double, double y, double) { return 0.1 * y; };
    const auto r = bsde_tree(one, g, 3, 64, law);
    EXPECT_NEAR(r.Y0, std::pow(1.0 - 0.1 / 64.0, -64.0), 1e-12);
    EXPECT_THROW(bsde_tree(one, g, 3, 64, law, TreeReduction::full_history), ContractError);
}

TEST(Snell, DynamicProgrammingInvariants) {
    const auto paths = sample(2, 0.75, 4000, 31);
    const auto table = state_payoff_table(put(0.25), paths, 12);
    for (auto e : {Estimator::regression, Estimator::binomial, Estimator::tree}) {
        DpConfig cfg;
        cfg.estimator = e;
        const auto dp = dp_backward(table, cfg);
        EXPECT_TRUE(check_snell_invariants(dp.values, table, dp.policy).ok()) << to_string(e);
        for (std::size_t p = 0; p < 50; ++p) {
            const auto st = extract_stopping_time(dp.values, table, p);
            EXPECT_EQ(st.step, dp.policy.tau[p]);
        }
    }
}

TEST(Snell, RegressionApproachesBinomial) {
    const auto paths = sample(2, 0.75, 20000, 32);
    const auto table = state_payoff_table(put(0.25), paths, 12);
    const auto dp = dp_backward(table);
    EXPECT_NEAR(dp.values.value0, 0.4915771484375, 0.02 * 0.4915771484375);

    // The regression rule is suboptimal on fresh paths, so its value stays
    // below the exact one up to noise.
    const auto fresh = state_payoff_table(put(0.25), sample(2, 0.75, 20000, 33), 12);
    const auto lb = lower_bound_resimulate(*dp.policy.rule, fresh);
    EXPECT_LE(lb.mean, 0.4915771484375 + 3.0 * lb.se);
    EXPECT_GT(lb.mean, 0.45);
}

TEST(Snell, ContractViolations) {
    const auto paths = sample(2, 0.75, 500, 34);
    const auto table = state_payoff_table(put(0.25), paths, 12);
    const auto dp = dp_backward(table);
    EXPECT_THROW(lower_bound_resimulate(*dp.policy.rule, table), ContractError);

    const auto path_table = payoff_table(running_max(), paths, 0.75);
    DpConfig cfg;
    cfg.estimator = Estimator::binomial;
    EXPECT_THROW(dp_backward(path_table, cfg), ContractError);

    const StatePayoff negative = [](std::size_t, double a) { return a; };
    EXPECT_THROW(binomial_value(negative, 2, 4), ContractError);
}
