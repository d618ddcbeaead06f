#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "wfic/error.hpp"
#include "wfic/skeleton.hpp"

using namespace wfic;

namespace {

void expect_well_formed(const BrownianSkeleton& s) {
    for (std::size_t n = 1; n <= s.event_count(); ++n) {
        EXPECT_GT(s.time(n), s.time(n - 1));
        const std::size_t j = s.coord(n);
        for (std::size_t i = 0; i < s.dim(); ++i) {
            const auto jump = s.level_index(n, i) - s.level_index(n - 1, i);
            EXPECT_EQ(jump, i == j ? s.sign(n) : 0);
        }
        EXPECT_TRUE(s.sign(n) == 1 || s.sign(n) == -1);
    }
    EXPECT_GE(s.last_time(), s.horizon());
}

}  // namespace

TEST(Skeleton, RenewalIsWellFormed) {
    RandomState rng(1);
    for (std::size_t p : {1u, 3u}) {
        const auto s = build_skeleton(3, p, 0.5, rng);
        EXPECT_EQ(s.dim(), p);
        EXPECT_EQ(s.step(), 0.125);
        expect_well_formed(s);
    }
}

TEST(Skeleton, GridBackendIsWellFormed) {
    RandomState rng(2);
    SkeletonOptions o;
    o.backend = SkeletonBackend::grid_coupled;
    const auto s = build_skeleton(3, 2, 0.5, rng, o);
    EXPECT_EQ(s.backend(), SkeletonBackend::grid_coupled);
    expect_well_formed(s);
}

TEST(Skeleton, SameSeedSameSkeleton) {
    RandomState a(9, 4), b(9, 4);
    const auto s = build_skeleton(4, 1, 1.0, a);
    const auto t = build_skeleton(4, 1, 1.0, b);
    ASSERT_EQ(s.event_count(), t.event_count());
    for (std::size_t n = 0; n <= s.event_count(); ++n) {
        EXPECT_EQ(s.time(n), t.time(n));
        EXPECT_EQ(s.level_index(n, 0), t.level_index(n, 0));
    }
}

TEST(Skeleton, MinEventsIsHonoured) {
    RandomState rng(3);
    SkeletonOptions o;
    o.min_events = 500;
    const auto s = build_skeleton(2, 2, 0.1, rng, o);
    EXPECT_GE(s.event_count(), 500u);
}

TEST(Skeleton, CountUntilAndEvaluate) {
    const BrownianSkeleton s(1, 1.0, SkeletonBackend::renewal, {{0.0, 0.3, 0.7, 1.2}}, {{0, 1, 1, -1}});
    EXPECT_EQ(s.event_count(), 3u);
    EXPECT_EQ(s.count_until(0.0), 0u);
    EXPECT_EQ(s.count_until(0.3), 1u);
    EXPECT_EQ(s.count_until(0.69), 1u);
    EXPECT_EQ(s.count_until(1.0), 2u);
    EXPECT_EQ(s.evaluate_A(0.5)[0], 0.5);
    EXPECT_EQ(s.evaluate_A(0.8)[0], 1.0);
    EXPECT_EQ(s.value(3, 0), 0.5);
}

TEST(Skeleton, RejectsBadInput) {
    RandomState rng(1);
    EXPECT_THROW(build_skeleton(0, 1, 1.0, rng), DomainError);
    EXPECT_THROW(build_skeleton(2, 1, 0.0, rng), DomainError);
    EXPECT_THROW(BrownianSkeleton(1, 1.0, SkeletonBackend::renewal, {{0.0, 0.5, 0.4}}, {{0, 1, 1}}),
                 std::exception);
}

TEST(Skeleton, CsvRoundTrip) {
    RandomState rng(5);
    const auto s = build_skeleton(3, 2, 0.5, rng);
    std::stringstream io;
    write_skeleton_csv(s, io);
    const auto t = read_skeleton_csv(io, s.horizon());
    ASSERT_EQ(t.event_count(), s.event_count());
    for (std::size_t n = 0; n <= s.event_count(); ++n) {
        EXPECT_EQ(t.time(n), s.time(n));
        EXPECT_EQ(t.coord(n), s.coord(n));
        EXPECT_EQ(t.sign(n), s.sign(n));
    }
    std::stringstream bad("nope\n");
    EXPECT_THROW(read_skeleton_csv(bad, 1.0), ContractError);
}

TEST(Skeleton, InfoStateRecordsMarks) {
    RandomState rng(6);
    const auto s = build_skeleton(2, 2, 0.5, rng);
    const auto st = info_state(s, 3);
    EXPECT_EQ(st.n, 3u);
    ASSERT_EQ(st.times.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(st.times[i], s.time(i + 1));
        EXPECT_EQ(st.marks[i][s.coord(i + 1)], s.sign(i + 1));
    }
    EXPECT_TRUE(info_state(s, 0).is_origin());
    EXPECT_THROW(info_state(s, s.event_count() + 1), DomainError);
}

// Expected renewal count E N(1) = 4^k + E tau^2 / 2 - 1 for unit-mean tau.
TEST(Skeleton, GridEventRateMatchesExitLaw) {
    const int k = 4;
    const int paths = 400;
    double s = 0.0, s2 = 0.0;
    for (int p = 0; p < paths; ++p) {
        RandomState rng(17, p);
        const auto path = GridBrownianPath::simulate(1, 1.3, std::ldexp(1.0, -2 * k - 2), rng);
        const auto sk = skeleton_from_grid(path, k, 1.0);
        const double n = static_cast<double>(sk.count_until(1.0));
        s += n;
        s2 += n * n;
    }
    const double mean = s / paths;
    const double se = std::sqrt((s2 / paths - mean * mean) / paths);
    EXPECT_NEAR(mean, 256.0 + 5.0 / 6.0 - 1.0, 4.0 * se + 1.0);
}

TEST(Skeleton, CoupledLevelsShareThePath) {
    RandomState rng(8);
    const auto path = GridBrownianPath::simulate(1, 1.5, std::ldexp(1.0, -12), rng);
    const auto levels = coupled_levels(path, {3, 4, 5}, 1.0);
    ASSERT_EQ(levels.size(), 3u);
    for (const auto& s : levels) {
        // Refined crossings can lead the grid by at most one level.
        EXPECT_LE(sup_distance_to_path(s, path), 2.0 * s.step() + 1e-12);
        // The same grid path again gives the same skeleton.
        const auto again = skeleton_from_grid(path, s.level(), 1.0);
        ASSERT_EQ(again.event_count(), s.event_count());
        EXPECT_EQ(again.last_time(), s.last_time());
    }
    EXPECT_THROW(coupled_levels(path, {5, 4}, 1.0), ContractError);
    EXPECT_THROW(coupled_levels(path, {6}, 1.0), DomainError);
    const auto short_path = GridBrownianPath::simulate(1, 0.2, std::ldexp(1.0, -12), rng);
    EXPECT_THROW(coupled_levels(short_path, {3}, 1.0), SimulationError);
}

TEST(Skeleton, GridWithoutRefinementMissesCrossings) {
    // Monitoring only at grid points lengthens the mean increment; the refined
    // extraction does not.
    const int k = 3;
    double plain = 0.0, refined = 0.0;
    for (int p = 0; p < 100; ++p) {
        RandomState rng(21, p);
        const auto path = GridBrownianPath::simulate(1, 3.0, std::ldexp(1.0, -2 * k - 2), rng);
        SkeletonOptions off;
        off.bridge_correction = false;
        plain += static_cast<double>(skeleton_from_grid(path, k, 2.0, off).count_until(2.0));
        refined += static_cast<double>(skeleton_from_grid(path, k, 2.0).count_until(2.0));
    }
    EXPECT_LT(plain, 0.8 * refined);
    EXPECT_NEAR(refined / 100.0, 128.0, 4.0);
}
