#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "wfic/exit_law.hpp"
#include "wfic/grid_path.hpp"
#include "wfic/rng.hpp"

namespace wfic {

enum class SkeletonBackend { renewal, grid_coupled };

std::string_view to_string(SkeletonBackend backend) noexcept;

/// 2^{-k}.
double level_step(int k);

struct SkeletonOptions {
    SkeletonBackend backend = SkeletonBackend::renewal;
    /// Keep simulating until the merged timeline holds at least this many events.
    std::size_t min_events = 0;
    /// Grid backend only: grid step of the internally simulated path (0 picks 2^{-2k-2}).
    double grid_step = 0.0;
    /// Grid backend only: refine each grid step by Brownian-bridge bisection
    /// wherever a level crossing between grid points is likely, then draw the
    /// remaining crossings of each leaf with the exact bridge probability. The
    /// refinement is a deterministic function of the grid path, so coupled
    /// levels see the same refined path.
    bool bridge_correction = true;
    /// Bisection stops once the sub-step is below bridge_resolution * 4^{-k}.
    double bridge_resolution = 0x1p-8;
};

/// One event of the merged timeline.
struct SkeletonEvent {
    double time = 0.0;
    std::uint32_t coord = 0;
    std::uint32_t index = 0;  ///< position within the coordinate's own timeline
    int sign = 0;
};

/// The level-k hitting-time skeleton of a p-dimensional Brownian motion.
///
/// Event 0 of the merged timeline is the origin (time 0, no coordinate).
/// Step-process values are stored as integer multiples of 2^{-k}, so every
/// jump has magnitude exactly 2^{-k}.
class BrownianSkeleton {
public:
    /// `times[j]` starts at 0 and is strictly increasing; `signs[j][0]` is unused.
    BrownianSkeleton(int k, double horizon, SkeletonBackend backend,
                     std::vector<std::vector<double>> times, std::vector<std::vector<int>> signs);

    [[nodiscard]] int level() const noexcept { return k_; }
    [[nodiscard]] double step() const noexcept { return step_; }
    [[nodiscard]] std::size_t dim() const noexcept { return times_.size(); }
    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] SkeletonBackend backend() const noexcept { return backend_; }

    [[nodiscard]] const std::vector<double>& coordinate_times(std::size_t j) const { return times_.at(j); }
    [[nodiscard]] const std::vector<int>& coordinate_signs(std::size_t j) const { return signs_.at(j); }

    /// Number of merged events, origin excluded.
    [[nodiscard]] std::size_t event_count() const noexcept { return events_.size() - 1; }
    [[nodiscard]] const SkeletonEvent& event(std::size_t n) const { return events_.at(n); }
    [[nodiscard]] double time(std::size_t n) const { return events_[n].time; }
    [[nodiscard]] std::size_t coord(std::size_t n) const { return events_[n].coord; }
    [[nodiscard]] int sign(std::size_t n) const { return events_[n].sign; }
    [[nodiscard]] double last_time() const noexcept { return events_.back().time; }

    /// A^{k,j}(T_n) / 2^{-k}.
    [[nodiscard]] std::int64_t level_index(std::size_t n, std::size_t j) const {
        return levels_[n * dim() + j];
    }
    [[nodiscard]] double value(std::size_t n, std::size_t j) const {
        return static_cast<double>(level_index(n, j)) * step_;
    }

    /// N(t) = #{n >= 1 : T_n <= t}.
    [[nodiscard]] std::size_t count_until(double t) const;

    /// A^k(t) for t in [0, horizon].
    [[nodiscard]] std::vector<double> evaluate_A(double t) const;

private:
    int k_;
    double step_;
    double horizon_;
    SkeletonBackend backend_;
    std::vector<std::vector<double>> times_;
    std::vector<std::vector<int>> signs_;
    std::vector<SkeletonEvent> events_;
    std::vector<std::int64_t> levels_;
};

/// Simulates a skeleton covering [0, T]: every coordinate runs until its last
/// hitting time is at least T + 2^{-2k}. The renewal backend draws increments
/// 2^{-2k} tau with fair signs; the grid backend simulates a grid path internally.
BrownianSkeleton build_skeleton(int k, std::size_t p, double T, RandomState& rng,
                                const SkeletonOptions& options = {});

/// Extracts the level-k skeleton from a grid path. Crossings are detected at
/// the first (refined) grid point where |B - anchor| >= 2^{-k}; anchors stay
/// on the level grid and the event time is interpolated inside the sub-step.
BrownianSkeleton skeleton_from_grid(const GridBrownianPath& path, int k, double T,
                                    const SkeletonOptions& options = {});

/// Skeletons at several levels driven by one grid path. Levels must ascend and
/// the grid step must satisfy step <= 2^{-2 k_max - 2}.
std::vector<BrownianSkeleton> coupled_levels(const GridBrownianPath& path, const std::vector<int>& levels,
                                             double T, const SkeletonOptions& options = {});

/// max over grid times t <= horizon and coordinates of |A^{k,j}(t) - B^j(t)|.
double sup_distance_to_path(const BrownianSkeleton& skel, const GridBrownianPath& path);

/// The information state after n merged events: hitting times and one
/// nonzero jump mark per step.
struct InfoState {
    std::size_t n = 0;
    std::vector<double> times;           ///< T_1..T_n
    std::vector<std::vector<int>> marks;  ///< marks[i][j] in {-1, 0, +1}

    [[nodiscard]] bool is_origin() const noexcept { return n == 0; }
};

InfoState info_state(const BrownianSkeleton& skel, std::size_t n);

/// CSV with header `level,coord,n,time,sign`, one row per coordinate event
/// including the origin rows (n = 0, sign 0).
void write_skeleton_csv(const BrownianSkeleton& skel, std::ostream& out);
BrownianSkeleton read_skeleton_csv(std::istream& in, double horizon,
                                   SkeletonBackend backend = SkeletonBackend::renewal);

/// Process-wide default exit-time law.
const UnitExitLaw& default_exit_law();

}  // namespace wfic
