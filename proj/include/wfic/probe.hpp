#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wfic/functional.hpp"

namespace wfic {

enum class ProbeMode { derivative, generator };

struct ProbeOptions {
    /// Grid step is eps^2 / grid_divisor.
    double grid_divisor = 64.0;
    /// The exit after t must happen before t + max_wait * eps^2.
    double max_wait = 50.0;
};

/// Monte Carlo probe of X at a fixed time t through the first exit of B from
/// (B(t) - eps, B(t) + eps) after t, on a fine grid.
///
/// derivative: per-path ratios [X(t + tau) - X(t)] / [B(t + tau) - B(t)];
/// `estimate` is their mean.
/// generator: E[X(t + tau) - X(t)] / E[tau] (ratio of means); its standard
/// error comes from the delta method.
struct ProbeResult {
    ProbeMode mode = ProbeMode::derivative;
    double estimate = 0.0;
    double se = 0.0;
    std::size_t samples = 0;
    std::vector<double> ratios;      ///< derivative mode only
    std::vector<double> base_values; ///< B(t) per path
    std::vector<double> increments;  ///< X(t + tau) - X(t) per path
    std::vector<double> exit_times;  ///< tau per path
};

ProbeResult pointwise_probe(const PathFunctional& X, double t, double eps, ProbeMode mode, std::size_t paths,
                            std::uint64_t seed, const ProbeOptions& options = {});

}  // namespace wfic
