#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "wfic/error.hpp"
#include "wfic/fbm.hpp"
#include "wfic/snell.hpp"

using namespace wfic;

namespace {

BrownianSkeleton path(int k, double T, std::uint64_t seed) {
    RandomState rng(seed);
    SkeletonOptions o;
    o.min_events = en_steps(k, T);
    return build_skeleton(k, 1, T, rng, o);
}

FbmParams params(double H) {
    FbmParams p;
    p.H = H;
    p.f = [](double w) { return std::max(1.0 - w, 0.0); };
    p.f_name = "put";
    return p;
}

// Composite Simpson, written out here to stay independent of the library.
double simpson(const std::function<double(double)>& g, double lo, double hi, int n) {
    const double dx = (hi - lo) / n;
    double s = g(lo) + g(hi);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * g(lo + i * dx);
    return s * dx / 3.0;
}

}  // namespace

TEST(Fbm, QuadratureMatchesDirectKernel) {
    for (double H : {0.6, 0.75, 0.9}) {
        const auto skel = path(3, 1.0, 40 + static_cast<std::uint64_t>(H * 100));
        const auto fast = fbm_skeleton(skel, params(H), KernelQuadrature::for_level(3, 1.0));
        const auto direct = fbm_skeleton_direct(skel, H);
        ASSERT_EQ(fast.size(), direct.size());
        for (std::size_t n = 0; n < fast.size(); ++n) EXPECT_NEAR(fast[n], direct[n], 1e-8) << "H=" << H << " n=" << n;
    }
}

TEST(Fbm, HalfIsTheIdentity) {
    const auto skel = path(3, 1.0, 5);
    const auto b = fbm_skeleton(skel, params(0.5), KernelQuadrature::for_level(3, 1.0));
    for (std::size_t n = 0; n < b.size(); ++n) EXPECT_EQ(b[n], skel.value(n, 0));
}

TEST(Fbm, RejectsRoughIndex) {
    const auto skel = path(2, 1.0, 6);
    EXPECT_THROW(fbm_skeleton(skel, params(0.3), KernelQuadrature::for_level(2, 1.0)), DomainError);
    EXPECT_THROW(fbm_skeleton_direct(skel, 0.5), DomainError);
    auto bad = params(0.7);
    bad.sigma = 0.0;
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Fbm, SegmentIntegralMatchesSimpson) {
    const KernelQuadrature quad;
    for (double p : {0.1, 0.25, 0.45}) {
        for (double a : {0.01, 0.3, 2.0}) {
            for (double x : {0.0, 1.0, 50.0}) {
                const double d = 0.7;
                const double ref = simpson([&](double u) { return std::pow(a + u, p) * std::exp(-x * u); }, 0.0, d, 20000);
                EXPECT_NEAR(segment_integral(quad, p, a, d, x), ref, 1e-10 * std::max(1.0, ref))
                    << "p=" << p << " a=" << a << " x=" << x;
            }
        }
    }
    EXPECT_THROW((void)segment_integral(quad, 0.2, 0.0, 1.0, 1.0), DomainError);
}

TEST(Fbm, PayoffTableAndCsv) {
    std::vector<BrownianSkeleton> paths;
    for (std::uint64_t s = 0; s < 4; ++s) paths.push_back(path(2, 1.0, 60 + s));
    const auto quad = KernelQuadrature::for_level(2, 1.0);
    const auto table = fbm_payoff_table(paths, params(0.7), quad, 1.0);
    EXPECT_EQ(table.steps, 16u);
    EXPECT_EQ(table.paths, 4u);
    for (double z : table.Z) EXPECT_GE(z, 0.0);
    // W_H(0) = 1 so the put starts at zero.
    EXPECT_EQ(table.z(0, 0), 0.0);

    auto negative = params(0.7);
    negative.f = [](double w) { return -w; };
    EXPECT_THROW(fbm_payoff_table(paths, negative, quad, 1.0), ContractError);

    std::ostringstream out;
    const auto b = fbm_skeleton(paths[0], params(0.7), quad);
    write_fbm_csv(paths[0], b, params(0.7), out);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "n,time,A,B_H,W_H,payoff");
}
