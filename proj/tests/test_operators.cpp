#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "wfic/error.hpp"
#include "wfic/operators.hpp"
#include "wfic/probe.hpp"
#include "wfic/skeleton.hpp"

using namespace wfic;

namespace {

std::vector<BrownianSkeleton> sample(int k, double T, std::size_t n, std::uint64_t seed) {
    std::vector<BrownianSkeleton> out;
    for (std::size_t p = 0; p < n; ++p) {
        RandomState rng(seed, p);
        out.push_back(build_skeleton(k, 1, T, rng));
    }
    return out;
}

}  // namespace

class SplittingProperty : public ::testing::TestWithParam<int> {};

TEST_P(SplittingProperty, HoldsForEveryFunctional) {
    const int k = GetParam();
    const double eps = std::numeric_limits<double>::epsilon();
    const std::vector<PathFunctional> all = {coordinate(), square(), abs_distance(0.1), running_max(),
                                             time_integral(), integral_kernel(bump_kernel(0.5))};
    for (const auto& skel : sample(k, 0.5, 5, 100 + k)) {
        for (const auto& F : all) {
            const auto s = discrete_operators(F, skel);
            const double h = s.step;
            double sum = 0.0;
            double scale = 0.0;
            for (const auto& r : s.rows) {
                const double size = std::abs(r.F_plus) + std::abs(r.F_minus) + std::abs(r.F_zero) + std::abs(r.X_prev);
                EXPECT_LE(std::abs(r.U - r.Dh - 0.5 * r.D2), 64.0 * eps * size / (h * h)) << F.name();
                sum += r.D * r.sign * h;
                scale += std::abs(r.X) + std::abs(r.X_prev) + std::abs(sum);
            }
            EXPECT_LE(std::abs(s.X.back() - s.X.front() - sum), 16.0 * eps * scale + 1e-300) << F.name();
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Levels, SplittingProperty, ::testing::Values(2, 3, 4, 5));

TEST(Operators, CoordinateAndSquareAreExact) {
    for (const auto& skel : sample(4, 1.0, 20, 7)) {
        for (const auto& r : discrete_operators(coordinate(), skel).rows) {
            EXPECT_EQ(r.D, 1.0);
            EXPECT_EQ(r.U, 0.0);
        }
        for (const auto& r : discrete_operators(square(), skel).rows) {
            EXPECT_EQ(r.U, 1.0);
            EXPECT_EQ(r.D2, 2.0);
            EXPECT_EQ(r.D, 2.0 * skel.value(r.n - 1, 0) + r.sign * skel.step());
        }
    }
}

TEST(Operators, TimeIntegralHasNoVerticalPart) {
    for (const auto& skel : sample(3, 1.0, 20, 8)) {
        for (const auto& r : discrete_operators(time_integral(), skel).rows) {
            EXPECT_EQ(r.D2, 0.0);
            const double dt = r.time - skel.time(r.n - 1);
            EXPECT_NEAR(r.D, skel.value(r.n - 1, 0) * dt / (r.sign * skel.step()), 1e-12);
            EXPECT_NEAR(r.U, skel.value(r.n - 1, 0) * (r.time - skel.time(r.n - 1)) / (skel.step() * skel.step()),
                        1e-12);
        }
    }
}

TEST(Operators, StepEmbeddingAndIntegral) {
    const BrownianSkeleton s(1, 1.0, SkeletonBackend::renewal, {{0.0, 0.3, 0.7, 1.2}}, {{0, 1, 1, -1}});
    const auto series = discrete_operators(square(), s);
    // h = 1/2 and D = 2 A_prev + eta h: 0.5 from 0.3, 1.5 from 0.7.
    EXPECT_EQ(series.derivative_at(0.1), 0.0);
    EXPECT_EQ(series.derivative_at(0.5), 0.5);
    EXPECT_EQ(series.derivative_at(0.9), 1.5);
    EXPECT_DOUBLE_EQ(series.derivative_integral(0.0, 1.0), 0.4 * 0.5 + 0.3 * 1.5);
    EXPECT_THROW((void)series.derivative_integral(0.0, 2.0), DomainError);
}

TEST(Operators, EnergyAndBracketOfTheCoordinate) {
    const auto paths = sample(3, 1.0, 10, 9);
    const auto e = energy(coordinate(), paths);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const double h = paths[p].step();
        EXPECT_DOUBLE_EQ(e.per_path[p], h * h * static_cast<double>(paths[p].count_until(1.0)));
        const auto br = covariation_bracket(coordinate(), paths[p]);
        EXPECT_DOUBLE_EQ(br.at(0.8), h * h * static_cast<double>(paths[p].count_until(0.8)));
    }
}

TEST(Operators, MartingaleResidualNeedsEnoughPaths) {
    const auto few = sample(2, 0.5, 10, 10);
    EXPECT_THROW(martingale_residual(square(), few, [](const BrownianSkeleton&, std::size_t) { return 1.0; }),
                 ContractError);
}

TEST(Operators, MartingaleResidualIsCentred) {
    const auto paths = sample(3, 1.0, 2000, 11);
    const auto psi = [](const BrownianSkeleton& s, std::size_t n) { return s.value(n, 0); };
    for (const auto& F : {coordinate(), square(), running_max()}) {
        const auto d = martingale_residual(F, paths, psi);
        EXPECT_LE(std::abs(d.mean), 4.0 * d.se + 1e-15) << F.name();
    }
}

TEST(Operators, TanakaAndSummationByParts) {
    for (int k : {2, 4, 6}) {
        for (const auto& skel : sample(k, 1.0, 20, 12 + k)) {
            EXPECT_LT(std::abs(tanaka_residual(skel, 0.0, 1.0).residual), 1e-10);
            EXPECT_LT(std::abs(tanaka_residual(skel, 0.25, 0.7).residual), 1e-10);
            EXPECT_LT(std::abs(summation_by_parts_residual(square(), skel, 1.0)), 1e-10);
        }
    }
    const auto skel = sample(2, 1.0, 1, 3).front();
    EXPECT_THROW(tanaka_residual(skel, 0.1, 1.0), DomainError);
}

TEST(Operators, CrossingLocalTimeFields) {
    for (const auto& skel : sample(4, 1.0, 50, 14)) {
        const auto f = crossing_local_time(skel, 1.0);
        EXPECT_TRUE(f.crossings_interleave());
        EXPECT_EQ(f.L(f.window.hi + 5), 0.0);
        // Arrivals at steps 1..N-1 are counted once each.
        double total = 0.0;
        for (auto j = f.window.lo; j <= f.window.hi; ++j) total += f.L(j);
        const auto N = static_cast<double>(skel.count_until(1.0));
        EXPECT_DOUBLE_EQ(total, skel.step() * std::max(N - 1.0, 0.0));
        if (f.window.size() > 1) EXPECT_THROW(crossing_local_time(skel, 1.0, LevelWindow{0, 0}), std::exception);
    }
}

TEST(Operators, LocalTimeMeanAtZero) {
    const auto paths = sample(5, 1.0, 2000, 15);
    std::vector<double> L;
    for (const auto& s : paths) L.push_back(crossing_local_time(s, 1.0).L(0));
    const auto d = summarize(L);
    EXPECT_NEAR(d.mean, std::sqrt(2.0 / M_PI), 4.0 * d.se + 1.0 / 32.0);
}

TEST(Operators, VerticalGridDerivativeOfSquare) {
    const auto skel = sample(3, 1.0, 1, 16).front();
    const double t = 0.5 * (skel.time(3) + skel.time(4));
    const auto w = auto_window(skel, skel.count_until(t));
    const auto g = vertical_grid_derivative(square(), skel, t, w);
    const double h = skel.step();
    for (auto j = w.lo; j <= w.hi; ++j) {
        const double x = static_cast<double>(j) * h;
        EXPECT_NEAR(g[static_cast<std::size_t>(j - w.lo)], (x * x - (x - h) * (x - h)) / h, 1e-12);
    }
}

TEST(Probe, CoordinateAndSquare) {
    const auto d = pointwise_probe(coordinate(), 0.5, 0.05, ProbeMode::derivative, 1000, 3);
    EXPECT_DOUBLE_EQ(d.estimate, 1.0);
    EXPECT_EQ(d.samples, 1000u);
    const auto g = pointwise_probe(square(), 0.5, 0.05, ProbeMode::generator, 4000, 4);
    EXPECT_NEAR(g.estimate, 1.0, 4.0 * g.se);
    const auto u = pointwise_probe(coordinate(), 0.5, 0.05, ProbeMode::generator, 4000, 5);
    EXPECT_NEAR(u.estimate, 0.0, 4.0 * u.se);
}
