#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace wfic {

class BrownianSkeleton;

/// Read-only view of a step path on [0, end]: segment i holds values row i on
/// [times[i], times[i+1]) (the last one up to `end`), and the value at `end`
/// itself is `terminal`. Segments with times[i] >= end are empty.
struct PathSlice {
    std::span<const double> times;
    std::span<const double> values;  ///< row-major, times.size() x dim
    std::size_t dim = 1;
    double end = 0.0;
    std::span<const double> terminal;

    [[nodiscard]] std::size_t segments() const noexcept { return times.size(); }
    [[nodiscard]] double value(std::size_t i, std::size_t j) const noexcept { return values[i * dim + j]; }
    [[nodiscard]] double segment_end(std::size_t i) const noexcept {
        return i + 1 < times.size() ? times[i + 1] : end;
    }
    [[nodiscard]] double segment_length(std::size_t i) const noexcept {
        const double len = segment_end(i) - times[i];
        return len > 0.0 ? len : 0.0;
    }
};

/// Right-continuous step path with jumps at `times` (times[0] = 0), defined up
/// to `end_time`.
class PiecewiseConstantPath {
public:
    PiecewiseConstantPath(std::vector<double> times, std::vector<double> values, std::size_t dim, double end_time);

    /// A^k of a skeleton, defined up to its last simulated event.
    static PiecewiseConstantPath from_skeleton(const BrownianSkeleton& skel);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t jumps() const noexcept { return times_.size(); }
    [[nodiscard]] double end_time() const noexcept { return end_; }
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

    /// Index of the last jump at or before t.
    [[nodiscard]] std::size_t index_at(double t) const;
    /// Index of the last jump strictly before t (t > 0).
    [[nodiscard]] std::size_t index_before(double t) const;

    /// The path truncated at t, terminal value taken from the path.
    [[nodiscard]] PathSlice slice(double t) const;
    /// The path on [0, t) with terminal value replaced (t(path_t, x)).
    [[nodiscard]] PathSlice slice_with_terminal(double t, std::span<const double> terminal) const;

private:
    std::vector<double> times_;
    std::vector<double> values_;
    std::size_t dim_;
    double end_;
};

}  // namespace wfic
