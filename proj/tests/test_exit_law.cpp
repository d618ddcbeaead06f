#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "wfic/error.hpp"
#include "wfic/exit_law.hpp"

using namespace wfic;

namespace {

// Eigenfunction expansion of P(tau > t), summed independently of the library.
double survival_oracle(double t) {
    double s = 0.0;
    for (int n = 0; n < 50; ++n) {
        const double m = 2.0 * n + 1.0;
        s += (n % 2 ? -1.0 : 1.0) * (4.0 / (std::numbers::pi * m)) * std::exp(-m * m * std::numbers::pi * std::numbers::pi * t / 8.0);
    }
    return s;
}

}  // namespace

TEST(ExitLaw, SurvivalMatchesEigenSeries) {
    const UnitExitLaw law;
    for (double t : {0.3, 0.5, 1.0, 2.0, 5.0}) {
        EXPECT_NEAR(law.survival(t), survival_oracle(t), 1e-11) << "t=" << t;
        EXPECT_NEAR(law.cdf(t) + law.survival(t), 1.0, 1e-12);
    }
}

TEST(ExitLaw, CdfIsMonotone) {
    const UnitExitLaw law;
    double prev = 0.0;
    for (double t = 0.01; t < 6.0; t += 0.01) {
        const double c = law.cdf(t);
        EXPECT_GE(c, prev - 1e-15);
        prev = c;
    }
}

TEST(ExitLaw, DensityIntegratesToMoments) {
    const UnitExitLaw law;
    // Simpson on [0, 40]; the tail beyond is below 1e-40.
    const int n = 40000;
    const double b = 40.0;
    const double dx = b / n;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 1; i < n; ++i) {
        const double x = i * dx;
        const double w = (i % 2 ? 4.0 : 2.0);
        const double f = law.density(x);
        m0 += w * f;
        m1 += w * f * x;
        m2 += w * f * x * x;
    }
    m0 *= dx / 3.0;
    m1 *= dx / 3.0;
    m2 *= dx / 3.0;
    EXPECT_NEAR(m0, 1.0, 1e-9);
    EXPECT_NEAR(m1, 1.0, 1e-9);
    EXPECT_NEAR(m2, 5.0 / 3.0, 1e-9);
}

TEST(ExitLaw, ClosedFormMoments) {
    EXPECT_DOUBLE_EQ(UnitExitLaw::moment(1), 1.0);
    EXPECT_DOUBLE_EQ(UnitExitLaw::moment(2), 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(UnitExitLaw::moment(3), 61.0 / 15.0);
}

TEST(ExitLaw, QuantileInvertsCdf) {
    const UnitExitLaw law;
    for (double u : {1e-9, 1e-4, 0.01, 0.25, 0.5, 0.75, 0.99, 1 - 1e-9}) {
        EXPECT_NEAR(law.cdf(law.quantile(u)), u, 1e-10) << "u=" << u;
    }
    EXPECT_THROW((void)law.quantile(0.0), DomainError);
    EXPECT_THROW((void)law.quantile(1.0), DomainError);
}

TEST(ExitLaw, SampleMeanAndVariance) {
    const UnitExitLaw law;
    RandomState rng(42);
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = law.sample(rng);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 1.0, 4.0 * std::sqrt(2.0 / 3.0 / n));
    EXPECT_NEAR(var, 2.0 / 3.0, 0.02);
}
