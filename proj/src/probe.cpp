#include "wfic/probe.hpp"

#include <cmath>
#include <string>

#include "wfic/error.hpp"
#include "wfic/operators.hpp"
#include "wfic/parallel.hpp"
#include "wfic/rng.hpp"
#include "wfic/text.hpp"

namespace wfic {

ProbeResult pointwise_probe(const PathFunctional& X, double t, double eps, ProbeMode mode, std::size_t paths,
                            std::uint64_t seed, const ProbeOptions& options) {
    if (!(t >= 0.0)) throw DomainError("probe: t must be nonnegative");
    if (!(eps > 0.0)) throw DomainError("probe: eps must be positive");
    if (paths < 1000) throw ContractError("probe: need at least 1000 paths, got " + std::to_string(paths));
    if (!(options.grid_divisor >= 1.0) || !(options.max_wait > 0.0)) throw DomainError("probe: invalid options");

    const double target_step = eps * eps / options.grid_divisor;
    const auto steps_to_t = static_cast<std::size_t>(std::ceil(t / target_step - 1e-9));
    const double dt = steps_to_t == 0 ? target_step : t / static_cast<double>(steps_to_t);
    const auto max_steps = static_cast<std::size_t>(std::ceil(options.max_wait * eps * eps / dt));
    const double sqrt_dt = std::sqrt(dt);

    ProbeResult out;
    out.mode = mode;
    out.samples = paths;
    out.base_values.resize(paths);
    out.increments.resize(paths);
    out.exit_times.resize(paths);
    std::vector<double> jumps(paths);

    parallel_for(paths, [&](std::size_t p) {
        RandomState rng(seed, p);
        auto acc = X.accumulator(1);
        double b = 0.0;
        double time = 0.0;
        double value[1] = {0.0};
        double next[1] = {0.0};
        auto advance = [&] {
            next[0] = b + sqrt_dt * rng.normal();
            const double t_next = time + dt;
            const double x = acc->evaluate(time, t_next, value, next);
            acc->absorb(time, t_next, value);
            time = t_next;
            b = next[0];
            value[0] = b;
            return x;
        };
        double x_t = acc->evaluate(0.0, 0.0, value, value);
        for (std::size_t i = 0; i < steps_to_t; ++i) x_t = advance();
        const double b_t = b;
        double x_exit = x_t;
        std::size_t waited = 0;
        while (std::abs(b - b_t) < eps) {
            if (++waited > max_steps) {
                throw SimulationError("probe: no exit within " + text::fmt(options.max_wait) +
                                      " eps^2 after t; increase max_wait");
            }
            x_exit = advance();
        }
        out.base_values[p] = b_t;
        out.increments[p] = x_exit - x_t;
        out.exit_times[p] = static_cast<double>(waited) * dt;
        jumps[p] = b - b_t;
    });

    if (mode == ProbeMode::derivative) {
        out.ratios.resize(paths);
        for (std::size_t p = 0; p < paths; ++p) out.ratios[p] = out.increments[p] / jumps[p];
        const auto d = summarize(out.ratios);
        out.estimate = d.mean;
        out.se = d.se;
    } else {
        const auto dx = summarize(out.increments);
        const auto tau = summarize(out.exit_times);
        const double ratio = dx.mean / tau.mean;
        std::vector<double> linear(paths);
        for (std::size_t p = 0; p < paths; ++p) linear[p] = out.increments[p] - ratio * out.exit_times[p];
        out.estimate = ratio;
        out.se = summarize(linear).se / tau.mean;
    }
    return out;
}

}  // namespace wfic
