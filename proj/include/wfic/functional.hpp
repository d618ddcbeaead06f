#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "wfic/path.hpp"

namespace wfic {

/// Streaming evaluator of a functional along a growing step path.
///
/// Completed segments are absorbed once; evaluate() then prices the path made
/// of the absorbed segments, an open segment [start, t) holding `current`, and
/// the value `terminal` at t. This is what lets operators run in O(N) along a
/// skeleton instead of re-reading the history at every step.
class FunctionalAccumulator {
public:
    virtual ~FunctionalAccumulator() = default;
    virtual void absorb(double start, double end, std::span<const double> value) = 0;
    [[nodiscard]] virtual double evaluate(double start, double t, std::span<const double> current,
                                          std::span<const double> terminal) const = 0;
};

/// Evaluation rule of a non-anticipative functional F_t(c_t).
class FunctionalImpl {
public:
    virtual ~FunctionalImpl() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    /// Reference evaluation on a full slice.
    [[nodiscard]] virtual double evaluate(const PathSlice& path) const = 0;
    /// Streaming evaluator; the default replays the stored history through evaluate().
    [[nodiscard]] virtual std::unique_ptr<FunctionalAccumulator> accumulator(std::size_t dim) const;
};

/// Value-semantics handle to an immutable functional.
class PathFunctional {
public:
    PathFunctional() = default;
    explicit PathFunctional(std::shared_ptr<const FunctionalImpl> impl) : impl_(std::move(impl)) {}

    [[nodiscard]] std::string name() const { return impl_ ? impl_->name() : "<empty>"; }
    [[nodiscard]] bool valid() const noexcept { return static_cast<bool>(impl_); }

    /// Throws NumericalError on a non-finite value.
    [[nodiscard]] double operator()(const PathSlice& path) const;
    [[nodiscard]] std::unique_ptr<FunctionalAccumulator> accumulator(std::size_t dim) const;

private:
    std::shared_ptr<const FunctionalImpl> impl_;
};

/// Throws NumericalError naming the functional when `value` is not finite.
double check_finite(double value, const std::string& what);

// Evaluation entry points -------------------------------------------------

double evaluate(const PathFunctional& F, const PiecewiseConstantPath& path, double t);

/// F_s applied to the path on [0, s) with terminal value x.
double evaluate_terminal_modified(const PathFunctional& F, const PiecewiseConstantPath& path, double s,
                                  std::span<const double> x);

/// F_t on the path frozen at its pre-t value, coordinate `coord` shifted by
/// i 2^{-k} at the single point t.
double evaluate_vertical_bump(const PathFunctional& F, const PiecewiseConstantPath& path, double t, int i, int k,
                              std::size_t coord = 0);

// Built-in functionals ----------------------------------------------------

using ScalarMap = std::function<double(double)>;

/// F(c) = c_j(t).
PathFunctional coordinate(std::size_t j = 0);
/// F(c) = f(c_j(t)); `df` is optional metadata for tests and convergence checks.
PathFunctional smooth_pointwise(ScalarMap f, ScalarMap df = {}, std::size_t j = 0, std::string name = "pointwise");
/// F(c) = c_j(t)^2.
PathFunctional square(std::size_t j = 0);
/// F(c) = |c_j(t) - x0|.
PathFunctional abs_distance(double x0, std::size_t j = 0);
/// F(c) = max_{s <= t} c_j(s).
PathFunctional running_max(std::size_t j = 0);
/// F(c) = int_0^t c_j(s) ds.
PathFunctional time_integral(std::size_t j = 0);
/// F(c) = e^{-r t} f(c_j(t)).
PathFunctional discounted_pointwise(double r, ScalarMap f, std::size_t j = 0, std::string name = "discounted");
/// F(c) = value, for every path.
PathFunctional constant(double value);
/// F_t(c) = g(t), path-blind.
PathFunctional time_only(ScalarMap g, std::string name = "time-only");

/// Kernel phi(a, y) of an integral functional with y-support [lo(a), hi(a)].
struct IntegralKernelSpec {
    std::function<double(double, double)> phi;
    std::function<std::pair<double, double>(double)> support;
    double tolerance = 1e-10;
};

/// Default kernel: phi(a, y) = exp(-1 / (1 - u^2)) with u = (y - a) / width, |u| < 1.
IntegralKernelSpec bump_kernel(double width = 0.5);

/// F_t(c) = int_{-inf}^{c(t)} int_0^t phi(c(s), y) ds dy. The inner y-integral
/// is computed by adaptive Simpson on the kernel support.
PathFunctional integral_kernel(IntegralKernelSpec spec = bump_kernel(), std::size_t j = 0);

}  // namespace wfic
