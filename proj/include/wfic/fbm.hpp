#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "wfic/skeleton.hpp"
#include "wfic/snell.hpp"

namespace wfic {

/// Geometric fractional state W_H(t) = exp(alpha t + sigma B_H(t)) and the
/// discounted obstacle e^{-rt} f(W_H(t)).
struct FbmParams {
    double H = 0.7;
    double sigma = 1.0;
    double alpha = 0.0;
    double r = 0.0;
    std::function<double(double)> f;
    std::string f_name;

    /// Throws DomainError for H outside [1/2, 1), sigma <= 0 or r < 0.
    void validate() const;
    [[nodiscard]] bool identity() const noexcept { return H == 0.5; }
};

/// Log-spaced trapezoid rule for integrals over (0, inf) in x, and the
/// series rule for the inner l-integral on each segment between jumps.
struct KernelQuadrature {
    double x_min = 1e-5;
    double x_max = 1e7;
    std::size_t intervals = 64;  ///< even; the half rule uses every other node
    double tolerance = 1e-8;
    /// Segments [a, a + d] are split until d / a <= split_ratio.
    double split_ratio = 0.125;
    int series_degree = 8;

    /// Range adapted to the jump scale of level k on [0, horizon].
    static KernelQuadrature for_level(int k, double horizon);
    void validate() const;
    [[nodiscard]] std::vector<double> nodes() const;
    [[nodiscard]] double spacing() const;
};

struct QuadratureValue {
    double value = 0.0;
    double error = 0.0;  ///< estimate from the half rule
};

/// int_x_min^x_max x^beta g(x) dx by the outer rule (no tail terms).
QuadratureValue outer_integral(const KernelQuadrature& quad, double beta, const std::function<double(double)>& g);

/// int_0^d (a + u)^p e^{-x u} du for a > 0 with the segment rule.
double segment_integral(const KernelQuadrature& quad, double p, double a, double d, double x);

/// B^k_H(T_n) for n = 0..event_count() of a one-dimensional skeleton.
/// H = 1/2 returns the skeleton values. Throws NumericalError when the
/// outer quadrature misses its tolerance.
std::vector<double> fbm_skeleton(const BrownianSkeleton& skel, const FbmParams& params, const KernelQuadrature& quad);

/// Same value computed by the closed-form x-integral,
/// c sum_m w_m int_{T_m}^{T_n} l^{H-1/2} (l - T_m)^{H-3/2} dl; O(n^2) per path.
std::vector<double> fbm_skeleton_direct(const BrownianSkeleton& skel, double H);

/// Payoffs e^{-r T_i} f(W^k_H(T_i)) for i = 0..en(k, T); feature columns as
/// in payoff_table. Times are not capped at T.
PayoffTable fbm_payoff_table(const std::vector<BrownianSkeleton>& skeletons, const FbmParams& params,
                             const KernelQuadrature& quad, double T);

/// n,time,A,B_H,W_H,payoff
void write_fbm_csv(const BrownianSkeleton& skel, const std::vector<double>& b, const FbmParams& params,
                   std::ostream& out);

}  // namespace wfic
