#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "wfic/error.hpp"

namespace wfic::quad {

struct AdaptiveResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = true;
};

namespace detail {

template <typename F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm, double fb,
                       double whole, double tol, int depth, AdaptiveResult& out) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) {
        out.error_estimate += std::abs(delta) / 15.0;
        return left + right + delta / 15.0;
    }
    if (depth <= 0) {
        out.converged = false;
        out.error_estimate += std::abs(delta) / 15.0;
        return left + right + delta / 15.0;
    }
    return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, out) +
           simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, out);
}

}  // namespace detail

/// Adaptive Simpson on [a, b] with absolute tolerance `tol`.
template <typename F>
AdaptiveResult adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 50) {
    AdaptiveResult out;
    if (a == b) return out;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    out.value = detail::simpson_recurse(f, a, b, fa, fm, fb, whole, tol, max_depth, out);
    return out;
}

/// As adaptive_simpson, but throws NumericalError when the tolerance is not met.
template <typename F>
double integrate(const F& f, double a, double b, double tol, const char* what = "integral") {
    const auto r = adaptive_simpson(f, a, b, tol);
    if (!r.converged || !std::isfinite(r.value)) {
        throw NumericalError(std::string(what) + ": adaptive quadrature did not reach tolerance " +
                             std::to_string(tol) + " (estimate " +
                             std::to_string(r.error_estimate) + ")");
    }
    return r.value;
}

}  // namespace wfic::quad
