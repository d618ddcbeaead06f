#include "wfic/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "wfic/error.hpp"
#include "wfic/quadrature.hpp"
#include "wfic/skeleton.hpp"
#include "wfic/text.hpp"

namespace wfic {

// PiecewiseConstantPath ----------------------------------------------------

PiecewiseConstantPath::PiecewiseConstantPath(std::vector<double> times, std::vector<double> values,
                                             std::size_t dim, double end_time)
    : times_(std::move(times)), values_(std::move(values)), dim_(dim), end_(end_time) {
    if (dim_ == 0 || times_.empty() || times_[0] != 0.0) {
        throw ContractError("path: need dim >= 1 and a first jump time of 0");
    }
    if (values_.size() != times_.size() * dim_) throw ContractError("path: values must hold one row per jump");
    for (std::size_t i = 1; i < times_.size(); ++i) {
        if (!(times_[i] > times_[i - 1])) throw ContractError("path: jump times must increase strictly");
    }
    if (!(end_ >= times_.back())) throw ContractError("path: end time precedes the last jump");
}

PiecewiseConstantPath PiecewiseConstantPath::from_skeleton(const BrownianSkeleton& skel) {
    const std::size_t count = skel.event_count() + 1;
    const std::size_t p = skel.dim();
    std::vector<double> times(count);
    std::vector<double> values(count * p);
    for (std::size_t n = 0; n < count; ++n) {
        times[n] = skel.time(n);
        for (std::size_t j = 0; j < p; ++j) values[n * p + j] = skel.value(n, j);
    }
    return PiecewiseConstantPath(std::move(times), std::move(values), p, skel.last_time());
}

std::size_t PiecewiseConstantPath::index_at(double t) const {
    return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1;
}

std::size_t PiecewiseConstantPath::index_before(double t) const {
    if (!(t > 0.0)) throw DomainError("path: no left limit at t <= 0");
    return static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1;
}

namespace {

void check_time(const PiecewiseConstantPath& path, double t) {
    if (!(t >= 0.0 && t <= path.end_time())) {
        throw DomainError("path: time " + text::fmt(t) + " outside support [0, " + text::fmt(path.end_time()) + "]");
    }
}

}  // namespace

PathSlice PiecewiseConstantPath::slice(double t) const {
    check_time(*this, t);
    return slice_with_terminal(t, row(index_at(t)));
}

PathSlice PiecewiseConstantPath::slice_with_terminal(double t, std::span<const double> terminal) const {
    check_time(*this, t);
    if (terminal.size() != dim_) throw ContractError("path: terminal value has wrong dimension");
    std::size_t m = static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
    m = std::max<std::size_t>(m, 1);
    PathSlice s;
    s.times = std::span<const double>(times_.data(), m);
    s.values = std::span<const double>(values_.data(), m * dim_);
    s.dim = dim_;
    s.end = t;
    s.terminal = terminal;
    return s;
}

// Functional plumbing ------------------------------------------------------

double check_finite(double value, const std::string& what) {
    if (!std::isfinite(value)) throw NumericalError(what + ": non-finite functional value");
    return value;
}

namespace {

class ReplayAccumulator final : public FunctionalAccumulator {
public:
    ReplayAccumulator(const FunctionalImpl& impl, std::size_t dim) : impl_(impl), dim_(dim) {}

    void absorb(double start, double /*end*/, std::span<const double> value) override {
        times_.push_back(start);
        values_.insert(values_.end(), value.begin(), value.end());
    }

    double evaluate(double start, double t, std::span<const double> current,
                    std::span<const double> terminal) const override {
        scratch_times_ = times_;
        scratch_values_ = values_;
        scratch_times_.push_back(start);
        scratch_values_.insert(scratch_values_.end(), current.begin(), current.end());
        PathSlice s;
        s.times = scratch_times_;
        s.values = scratch_values_;
        s.dim = dim_;
        s.end = t;
        s.terminal = terminal;
        return impl_.evaluate(s);
    }

private:
    const FunctionalImpl& impl_;
    std::size_t dim_;
    std::vector<double> times_;
    std::vector<double> values_;
    mutable std::vector<double> scratch_times_;
    mutable std::vector<double> scratch_values_;
};

}  // namespace

std::unique_ptr<FunctionalAccumulator> FunctionalImpl::accumulator(std::size_t dim) const {
    return std::make_unique<ReplayAccumulator>(*this, dim);
}

double PathFunctional::operator()(const PathSlice& path) const {
    if (!impl_) throw ContractError("functional: empty handle");
    const double v = impl_->evaluate(path);
    if (!std::isfinite(v)) check_finite(v, impl_->name());
    return v;
}

namespace {

// Keeps the functional alive for as long as its accumulator.
class OwningAccumulator final : public FunctionalAccumulator {
public:
    OwningAccumulator(std::shared_ptr<const FunctionalImpl> owner, std::unique_ptr<FunctionalAccumulator> inner)
        : owner_(std::move(owner)), inner_(std::move(inner)) {}
    void absorb(double start, double end, std::span<const double> value) override {
        inner_->absorb(start, end, value);
    }
    double evaluate(double start, double t, std::span<const double> current,
                    std::span<const double> terminal) const override {
        const double v = inner_->evaluate(start, t, current, terminal);
        if (!std::isfinite(v)) check_finite(v, owner_->name());
        return v;
    }

private:
    std::shared_ptr<const FunctionalImpl> owner_;
    std::unique_ptr<FunctionalAccumulator> inner_;
};

}  // namespace

std::unique_ptr<FunctionalAccumulator> PathFunctional::accumulator(std::size_t dim) const {
    if (!impl_) throw ContractError("functional: empty handle");
    return std::make_unique<OwningAccumulator>(impl_, impl_->accumulator(dim));
}

double evaluate(const PathFunctional& F, const PiecewiseConstantPath& path, double t) {
    check_time(path, t);
    return F(path.slice_with_terminal(t, path.row(path.index_at(t))));
}

double evaluate_terminal_modified(const PathFunctional& F, const PiecewiseConstantPath& path, double s,
                                  std::span<const double> x) {
    return F(path.slice_with_terminal(s, x));
}

double evaluate_vertical_bump(const PathFunctional& F, const PiecewiseConstantPath& path, double t, int i, int k,
                              std::size_t coord) {
    if (i < -1 || i > 1) throw DomainError("vertical bump: i must be -1, 0 or +1");
    if (coord >= path.dim()) throw DomainError("vertical bump: coordinate out of range");
    check_time(path, t);
    const auto before = path.row(path.index_before(t));
    std::vector<double> terminal(before.begin(), before.end());
    terminal[coord] += static_cast<double>(i) * level_step(k);
    return F(path.slice_with_terminal(t, terminal));
}

// Built-ins ----------------------------------------------------------------

namespace {

// Functionals that only look at (t, c(t)).
template <typename Rule>
class TerminalFunctional final : public FunctionalImpl {
public:
    TerminalFunctional(std::string name, Rule rule) : name_(std::move(name)), rule_(std::move(rule)) {}

    std::string name() const override { return name_; }
    double evaluate(const PathSlice& path) const override { return rule_(path.end, path.terminal); }

    std::unique_ptr<FunctionalAccumulator> accumulator(std::size_t) const override {
        struct Acc final : FunctionalAccumulator {
            explicit Acc(Rule r) : rule(std::move(r)) {}
            void absorb(double, double, std::span<const double>) override {}
            double evaluate(double, double t, std::span<const double>, std::span<const double> terminal) const override {
                return rule(t, terminal);
            }
            Rule rule;
        };
        return std::make_unique<Acc>(rule_);
    }

private:
    std::string name_;
    Rule rule_;
};

template <typename Rule>
PathFunctional make_terminal(std::string name, Rule rule) {
    return PathFunctional(std::make_shared<TerminalFunctional<Rule>>(std::move(name), std::move(rule)));
}

void check_coord(std::size_t j, std::size_t dim, const char* who) {
    if (j >= dim) throw DomainError(std::string(who) + ": coordinate out of range for path dimension");
}

class RunningMax final : public FunctionalImpl {
public:
    explicit RunningMax(std::size_t j) : j_(j) {}
    std::string name() const override { return "running-max"; }

    double evaluate(const PathSlice& path) const override {
        check_coord(j_, path.dim, "running-max");
        double m = path.terminal[j_];
        for (std::size_t i = 0; i < path.segments(); ++i) {
            if (path.times[i] < path.end) m = std::max(m, path.value(i, j_));
        }
        return m;
    }

    std::unique_ptr<FunctionalAccumulator> accumulator(std::size_t dim) const override {
        check_coord(j_, dim, "running-max");
        struct Acc final : FunctionalAccumulator {
            explicit Acc(std::size_t j) : j(j) {}
            void absorb(double, double, std::span<const double> v) override { m = std::max(m, v[j]); }
            double evaluate(double start, double t, std::span<const double> current,
                            std::span<const double> terminal) const override {
                double out = std::max(m, terminal[j]);
                if (start < t) out = std::max(out, current[j]);
                return out;
            }
            std::size_t j;
            double m = -std::numeric_limits<double>::infinity();
        };
        return std::make_unique<Acc>(j_);
    }

private:
    std::size_t j_;
};

class TimeIntegral final : public FunctionalImpl {
public:
    explicit TimeIntegral(std::size_t j) : j_(j) {}
    std::string name() const override { return "time-integral"; }

    double evaluate(const PathSlice& path) const override {
        check_coord(j_, path.dim, "time-integral");
        double sum = 0.0;
        for (std::size_t i = 0; i < path.segments(); ++i) sum += path.value(i, j_) * path.segment_length(i);
        return sum;
    }

    std::unique_ptr<FunctionalAccumulator> accumulator(std::size_t dim) const override {
        check_coord(j_, dim, "time-integral");
        struct Acc final : FunctionalAccumulator {
            explicit Acc(std::size_t j) : j(j) {}
            void absorb(double start, double end, std::span<const double> v) override { sum += v[j] * (end - start); }
            double evaluate(double start, double t, std::span<const double> current,
                            std::span<const double>) const override {
                return sum + (t > start ? current[j] * (t - start) : 0.0);
            }
            std::size_t j;
            double sum = 0.0;
        };
        return std::make_unique<Acc>(j_);
    }

private:
    std::size_t j_;
};

class IntegralKernel final : public FunctionalImpl {
public:
    IntegralKernel(IntegralKernelSpec spec, std::size_t j) : spec_(std::move(spec)), j_(j) {
        if (!spec_.phi || !spec_.support) throw ContractError("integral-kernel: kernel and support are required");
        if (!(spec_.tolerance > 0.0)) throw DomainError("integral-kernel: tolerance must be positive");
    }
    std::string name() const override { return "integral-kernel"; }

    // int_{-inf}^{z} phi(a, y) dy
    double antiderivative(double a, double z) const {
        const auto [lo, hi] = spec_.support(a);
        if (z <= lo) return 0.0;
        return quad::integrate([&](double y) { return spec_.phi(a, y); }, lo, std::min(z, hi), spec_.tolerance,
                               "integral-kernel inner integral");
    }

    double evaluate(const PathSlice& path) const override {
        check_coord(j_, path.dim, "integral-kernel");
        const double z = path.terminal[j_];
        double sum = 0.0;
        for (std::size_t i = 0; i < path.segments(); ++i) {
            const double len = path.segment_length(i);
            if (len > 0.0) sum += len * antiderivative(path.value(i, j_), z);
        }
        return sum;
    }

    std::unique_ptr<FunctionalAccumulator> accumulator(std::size_t dim) const override {
        check_coord(j_, dim, "integral-kernel");
        // Occupation time per visited value.
        struct Acc final : FunctionalAccumulator {
            Acc(const IntegralKernel& k, std::size_t j) : kernel(k), j(j) {}
            void absorb(double start, double end, std::span<const double> v) override {
                occupation[v[j]] += end - start;
            }
            double evaluate(double start, double t, std::span<const double> current,
                            std::span<const double> terminal) const override {
                const double z = terminal[j];
                double sum = 0.0;
                for (const auto& [a, time] : occupation) sum += time * kernel.antiderivative(a, z);
                if (t > start) sum += (t - start) * kernel.antiderivative(current[j], z);
                return sum;
            }
            const IntegralKernel& kernel;
            std::size_t j;
            std::map<double, double> occupation;
        };
        return std::make_unique<Acc>(*this, j_);
    }

private:
    IntegralKernelSpec spec_;
    std::size_t j_;
};

}  // namespace

PathFunctional coordinate(std::size_t j) {
    return make_terminal("coordinate", [j](double, std::span<const double> c) {
        check_coord(j, c.size(), "coordinate");
        return c[j];
    });
}

PathFunctional smooth_pointwise(ScalarMap f, ScalarMap /*df*/, std::size_t j, std::string name) {
    if (!f) throw ContractError("pointwise: f is required");
    return make_terminal(std::move(name), [f = std::move(f), j](double, std::span<const double> c) {
        check_coord(j, c.size(), "pointwise");
        return f(c[j]);
    });
}

PathFunctional square(std::size_t j) {
    return make_terminal("square", [j](double, std::span<const double> c) {
        check_coord(j, c.size(), "square");
        return c[j] * c[j];
    });
}

PathFunctional abs_distance(double x0, std::size_t j) {
    return make_terminal("abs-distance", [x0, j](double, std::span<const double> c) {
        check_coord(j, c.size(), "abs-distance");
        return std::abs(c[j] - x0);
    });
}

PathFunctional running_max(std::size_t j) { return PathFunctional(std::make_shared<RunningMax>(j)); }

PathFunctional time_integral(std::size_t j) { return PathFunctional(std::make_shared<TimeIntegral>(j)); }

PathFunctional discounted_pointwise(double r, ScalarMap f, std::size_t j, std::string name) {
    if (!f) throw ContractError("discounted: f is required");
    return make_terminal(std::move(name), [r, f = std::move(f), j](double t, std::span<const double> c) {
        check_coord(j, c.size(), "discounted");
        return std::exp(-r * t) * f(c[j]);
    });
}

PathFunctional constant(double value) {
    return make_terminal("constant", [value](double, std::span<const double>) { return value; });
}

PathFunctional time_only(ScalarMap g, std::string name) {
    if (!g) throw ContractError("time-only: g is required");
    return make_terminal(std::move(name), [g = std::move(g)](double t, std::span<const double>) { return g(t); });
}

IntegralKernelSpec bump_kernel(double width) {
    if (!(width > 0.0)) throw DomainError("bump kernel: width must be positive");
    IntegralKernelSpec spec;
    spec.phi = [width](double a, double y) {
        const double u = (y - a) / width;
        return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
    };
    spec.support = [width](double a) { return std::pair<double, double>(a - width, a + width); };
    return spec;
}

PathFunctional integral_kernel(IntegralKernelSpec spec, std::size_t j) {
    return PathFunctional(std::make_shared<IntegralKernel>(std::move(spec), j));
}

}  // namespace wfic
