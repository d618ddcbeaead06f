#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "wfic/error.hpp"
#include "wfic/functional.hpp"
#include "wfic/operators.hpp"
#include "wfic/skeleton.hpp"

using namespace wfic;

namespace {

// Path 0 on [0, 1), 2 on [1, 3), -1 on [3, 5].
PiecewiseConstantPath hand_path() { return PiecewiseConstantPath({0.0, 1.0, 3.0}, {0.0, 2.0, -1.0}, 1, 5.0); }

}  // namespace

TEST(Functional, BuiltinsOnAHandPath) {
    const auto path = hand_path();
    EXPECT_EQ(evaluate(coordinate(), path, 2.0), 2.0);
    EXPECT_EQ(evaluate(square(), path, 4.0), 1.0);
    EXPECT_EQ(evaluate(abs_distance(0.5), path, 4.0), 1.5);
    EXPECT_EQ(evaluate(running_max(), path, 4.0), 2.0);
    EXPECT_EQ(evaluate(running_max(), path, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(evaluate(time_integral(), path, 4.0), 0.0 + 2.0 * 2.0 - 1.0);
    EXPECT_EQ(evaluate(constant(3.5), path, 1.0), 3.5);
    EXPECT_EQ(evaluate(time_only([](double t) { return t * t; }), path, 3.0), 9.0);
    const auto put = discounted_pointwise(0.1, [](double x) { return std::max(1.0 - x, 0.0); });
    EXPECT_DOUBLE_EQ(evaluate(put, path, 4.0), std::exp(-0.4) * 2.0);
}

TEST(Functional, TerminalModificationAndVerticalBump) {
    const auto path = hand_path();
    const std::vector<double> x{5.0};
    // The integral ignores the terminal point; the running max sees it.
    EXPECT_DOUBLE_EQ(evaluate_terminal_modified(time_integral(), path, 2.0, x), 2.0);
    EXPECT_EQ(evaluate_terminal_modified(running_max(), path, 2.0, x), 5.0);
    // Frozen pre-jump value 0 at t = 1, bumped by 2^{-1}.
    EXPECT_EQ(evaluate_vertical_bump(coordinate(), path, 1.0, 1, 1), 0.5);
    EXPECT_EQ(evaluate_vertical_bump(square(), path, 1.0, -1, 2), 0.0625);
    EXPECT_THROW((void)evaluate_vertical_bump(coordinate(), path, 1.0, 2, 1), DomainError);
}

TEST(Functional, NonFiniteValuesAreReported) {
    const auto path = hand_path();
    const auto bad = smooth_pointwise([](double) { return std::numeric_limits<double>::infinity(); });
    EXPECT_THROW((void)evaluate(bad, path, 1.0), NumericalError);
}

TEST(Functional, BumpKernelMatchesQuadrature) {
    // Constant path at 0: F_t = t * int_{-w}^{0} phi(0, y) dy.
    const double w = 0.5;
    const PiecewiseConstantPath path({0.0}, {0.0}, 1, 2.0);
    const auto F = integral_kernel(bump_kernel(w));
    double half = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = -1.0 + (i + 0.5) / n;
        half += std::exp(-1.0 / (1.0 - u * u));
    }
    half *= w / n;
    EXPECT_NEAR(evaluate(F, path, 2.0), 2.0 * half, 1e-8);
}

// The streaming evaluation used along skeletons agrees with the reference
// evaluation on the full slice.
TEST(Functional, StreamingMatchesReference) {
    RandomState rng(3);
    const auto skel = build_skeleton(3, 1, 1.0, rng);
    const auto path = PiecewiseConstantPath::from_skeleton(skel);
    const std::vector<PathFunctional> all = {
        coordinate(), square(), abs_distance(0.25), running_max(), time_integral(),
        discounted_pointwise(0.2, [](double x) { return std::max(0.5 - x, 0.0); }),
        integral_kernel(bump_kernel(0.5))};
    for (const auto& F : all) {
        const auto series = discrete_operators(F, skel, 0, 1.0);
        for (std::size_t n = 0; n < series.times.size(); ++n) {
            EXPECT_NEAR(series.X[n], evaluate(F, path, series.times[n]), 1e-10) << F.name() << " n=" << n;
        }
    }
}
