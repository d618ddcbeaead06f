#pragma once

#include <cstddef>
#include <vector>

#include "wfic/rng.hpp"

namespace wfic {

/// Law of the exit time tau = inf{t > 0 : |W(t)| = 1} of a standard Brownian
/// motion from (-1, 1).
///
/// Distribution function and density are evaluated by alternating series:
/// the image (erfc) expansion for small t and the eigenfunction expansion for
/// large t. Sampling inverts the distribution function with a bracketed
/// Newton/bisection search; the bracket comes from a precomputed table so a
/// draw costs a handful of series evaluations.
class UnitExitLaw {
public:
    explicit UnitExitLaw(double series_truncation_tolerance = 1e-12, std::size_t max_terms = 200);

    [[nodiscard]] double tolerance() const noexcept { return tolerance_; }
    [[nodiscard]] std::size_t max_terms() const noexcept { return max_terms_; }

    /// P(tau <= t). Throws NumericalError if the series does not converge.
    [[nodiscard]] double cdf(double t) const;
    /// P(tau > t), accurate in the right tail.
    [[nodiscard]] double survival(double t) const;
    [[nodiscard]] double density(double t) const;

    /// Exact moments E[tau^n] = |E_{2n}| 2^n n! / (2n)! (Euler numbers), n <= 5.
    [[nodiscard]] static double moment(int n);

    /// Inverse of the distribution function at u in (0, 1).
    [[nodiscard]] double quantile(double u) const;

    [[nodiscard]] double sample(RandomState& rng) const { return quantile(rng.uniform()); }

private:
    double small_t_cdf(double t) const;
    double small_t_density(double t) const;
    double large_t_survival(double t) const;
    double large_t_density(double t) const;

    double tolerance_;
    std::size_t max_terms_;
    std::vector<double> grid_t_;
    std::vector<double> grid_cdf_;
};

/// One draw of tau (free-function form used by the skeleton builders).
double sample_unit_exit_time(const UnitExitLaw& law, RandomState& rng);

}  // namespace wfic
