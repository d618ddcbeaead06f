#pragma once

#include <cstddef>
#include <vector>

#include "wfic/rng.hpp"

namespace wfic {

/// Brownian motion sampled on a uniform time grid, p coordinates,
/// stored row-major: value(i, j) is coordinate j at time i * step.
class GridBrownianPath {
public:
    GridBrownianPath() = default;
    /// Wraps explicit samples (row-major, values[0..p) must be zero).
    GridBrownianPath(double step, std::size_t dim, std::vector<double> values);

    /// Simulates a path on [0, horizon] with Gaussian increments of variance `step`.
    static GridBrownianPath simulate(std::size_t dim, double horizon, double step, RandomState& rng);

    /// Appends increments until the horizon reaches at least `horizon`.
    void extend(double horizon, RandomState& rng);

    [[nodiscard]] double step() const noexcept { return step_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
    [[nodiscard]] double horizon() const noexcept { return step_ * static_cast<double>(size() - 1); }
    [[nodiscard]] double time(std::size_t i) const noexcept { return step_ * static_cast<double>(i); }
    [[nodiscard]] double value(std::size_t i, std::size_t j) const noexcept { return values_[i * dim_ + j]; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

private:
    double step_ = 0.0;
    std::size_t dim_ = 0;
    std::vector<double> values_;
};

}  // namespace wfic
