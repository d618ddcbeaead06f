#include "wfic/fbm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "wfic/error.hpp"
#include "wfic/parallel.hpp"
#include "wfic/quadrature.hpp"
#include "wfic/text.hpp"

namespace wfic {

void FbmParams::validate() const {
    if (!(H > 0.0 && H < 1.0)) throw DomainError("fbm: Hurst index must lie in (0, 1), got " + text::fmt(H));
    if (H < 0.5) {
        throw DomainError("fbm: the kernel representation diverges for H < 1/2 (got " + text::fmt(H) + ")");
    }
    if (!(sigma > 0.0)) throw DomainError("fbm: sigma must be positive");
    if (!(r >= 0.0)) throw DomainError("fbm: discount rate must be nonnegative");
    if (!std::isfinite(alpha)) throw DomainError("fbm: drift must be finite");
}

KernelQuadrature KernelQuadrature::for_level(int k, double horizon) {
    KernelQuadrature q;
    const double h2 = std::ldexp(1.0, -2 * k);
    q.x_min = 1e-5 / std::max(1.0, horizon);
    q.x_max = 1e4 / h2;
    return q;
}

void KernelQuadrature::validate() const {
    if (!(x_min > 0.0) || !(x_max > x_min)) throw DomainError("kernel quadrature: need 0 < x_min < x_max");
    if (intervals < 2 || intervals % 2 != 0) throw DomainError("kernel quadrature: intervals must be even and >= 2");
    if (!(tolerance > 0.0)) throw DomainError("kernel quadrature: tolerance must be positive");
    if (!(split_ratio > 0.0 && split_ratio <= 0.5)) throw DomainError("kernel quadrature: split_ratio in (0, 1/2]");
    if (series_degree < 1 || series_degree > 30) throw DomainError("kernel quadrature: series_degree in [1, 30]");
}

double KernelQuadrature::spacing() const {
    return (std::log(x_max) - std::log(x_min)) / static_cast<double>(intervals);
}

std::vector<double> KernelQuadrature::nodes() const {
    std::vector<double> x(intervals + 1);
    const double y0 = std::log(x_min);
    const double s = spacing();
    for (std::size_t i = 0; i <= intervals; ++i) x[i] = std::exp(y0 + s * static_cast<double>(i));
    return x;
}

namespace {

// Trapezoid in y = log x on node values f_i = x_i^{beta+1} g(x_i), continued
// past both ends as geometric tails f_0 e^{-lo (y_0 - y)} and f_n e^{-hi (y - y_n)}
// (rate 0: no tail). The half rule drops odd nodes. The rule converges
// geometrically in the step, so the error of the full rule is about the
// square of the relative gap.
QuadratureValue trapezoid(const std::vector<double>& f, double s, double lo, double hi) {
    const std::size_t n = f.size() - 1;
    auto tails = [&](double step) {
        double t = 0.0;
        if (lo > 0.0) t += f[0] * (lo * step > 700.0 ? 0.0 : 1.0 / std::expm1(lo * step));
        if (hi > 0.0) t += f[n] * (hi * step > 700.0 ? 0.0 : 1.0 / std::expm1(hi * step));
        return t;
    };
    const double end_w_lo = lo > 0.0 ? 1.0 : 0.5;
    const double end_w_hi = hi > 0.0 ? 1.0 : 0.5;
    double full = tails(s);
    double half = tails(2.0 * s);
    double scale = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double w = i == 0 ? end_w_lo : (i == n ? end_w_hi : 1.0);
        full += w * f[i];
        scale += w * std::abs(f[i]);
        if (i % 2 == 0) half += w * f[i];
    }
    full *= s;
    half *= 2.0 * s;
    scale *= s;
    const double gap = std::abs(full - half);
    QuadratureValue out;
    out.value = full;
    out.error = scale > 0.0 ? std::min(gap, gap * gap / scale) : gap;
    return out;
}

// m_j(z) = int_0^1 v^j e^{-z v} dv for j = 0..J.
void unit_moments(double z, int J, double* m) {
    const double e = std::exp(-z);
    if (z > static_cast<double>(J) + 1.0) {
        m[0] = -std::expm1(-z) / z;
        for (int j = 1; j <= J; ++j) m[j] = (static_cast<double>(j) * m[j - 1] - e) / z;
        return;
    }
    double term = 1.0 / static_cast<double>(J + 1);
    double sum = term;
    for (int i = 1; i < 200; ++i) {
        term *= z / static_cast<double>(J + 1 + i);
        sum += term;
        if (term <= 1e-17 * sum) break;
    }
    m[J] = e * sum;
    for (int j = J; j >= 1; --j) m[j - 1] = (z * m[j] + e) / static_cast<double>(j);
}

// Precomputed series for one segment [a, a + d]: (a + u)^p expanded in
// u / a' on subsegments [a', a' + d'] with d' / a' <= split_ratio.
struct SegmentRule {
    struct Piece {
        double offset;  // a' - a
        double width;   // d'
        std::vector<double> coef;  // binom(p, j) (d'/a')^j a'^p d'
    };
    std::vector<Piece> pieces;
    double width = 0.0;

    SegmentRule(const KernelQuadrature& quad, const std::vector<double>& binom, double p, double a, double d) : width(d) {
        const int J = quad.series_degree;
        double start = a;
        const double end = a + d;
        while (start < end) {
            const double stop = std::min(end, start * (1.0 + quad.split_ratio));
            Piece pc{start - a, stop - start, std::vector<double>(static_cast<std::size_t>(J + 1))};
            const double ratio = pc.width / start;
            double scale = std::pow(start, p) * pc.width;
            for (int j = 0; j <= J; ++j) {
                pc.coef[static_cast<std::size_t>(j)] = binom[static_cast<std::size_t>(j)] * scale;
                scale *= ratio;
            }
            pieces.push_back(std::move(pc));
            start = stop;
        }
    }

    [[nodiscard]] double integral(double x, double* m) const {
        double total = 0.0;
        for (const auto& pc : pieces) {
            const int J = static_cast<int>(pc.coef.size()) - 1;
            unit_moments(x * pc.width, J, m);
            double s = 0.0;
            for (int j = J; j >= 0; --j) s += pc.coef[static_cast<std::size_t>(j)] * m[j];
            total += pc.offset > 0.0 ? std::exp(-x * pc.offset) * s : s;
        }
        return total;
    }
};

std::vector<double> binomial_series(double p, int J) {
    std::vector<double> c(static_cast<std::size_t>(J + 1));
    c[0] = 1.0;
    for (int j = 1; j <= J; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] * (p - j + 1) / j;
    return c;
}

}  // namespace

QuadratureValue outer_integral(const KernelQuadrature& quad, double beta, const std::function<double(double)>& g) {
    quad.validate();
    const auto x = quad.nodes();
    std::vector<double> f(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) f[i] = std::pow(x[i], beta + 1.0) * g(x[i]);
    return trapezoid(f, quad.spacing(), 0.0, 0.0);
}

double segment_integral(const KernelQuadrature& quad, double p, double a, double d, double x) {
    quad.validate();
    if (!(a > 0.0) || !(d >= 0.0)) throw DomainError("segment_integral: need a > 0 and d >= 0");
    const auto binom = binomial_series(p, quad.series_degree);
    SegmentRule rule(quad, binom, p, a, d);
    std::vector<double> m(static_cast<std::size_t>(quad.series_degree + 1));
    return rule.integral(x, m.data());
}

std::vector<double> fbm_skeleton(const BrownianSkeleton& skel, const FbmParams& params, const KernelQuadrature& quad) {
    params.validate();
    quad.validate();
    if (skel.dim() != 1) throw ContractError("fbm_skeleton: needs a one-dimensional skeleton");
    const std::size_t N = skel.event_count() + 1;
    std::vector<double> out(N, 0.0);
    if (params.identity()) {
        for (std::size_t n = 0; n < N; ++n) out[n] = skel.value(n, 0);
        return out;
    }
    const double p = params.H - 0.5;
    const double h = skel.step();
    const double c0 = std::sin(std::numbers::pi * p) / std::numbers::pi;
    const double kappa = 1.0 / (h * h);
    const auto x = quad.nodes();
    const std::size_t nx = x.size();
    const double s = quad.spacing();
    const auto binom = binomial_series(p, quad.series_degree);
    std::vector<double> moments(static_cast<std::size_t>(quad.series_degree + 1));

    // Per node: S = sum_m e^{-x (l - T_m)} w_m just after the last jump, G the
    // completed l-integral. Node nx is x = 0 for the lower tail.
    std::vector<double> S(nx + 1, 0.0);
    std::vector<double> G(nx + 1, 0.0);
    std::vector<double> f(nx);
    double C1 = 0.0;  // G(x) ~ C1 / x + C2 / x^2 as x -> inf
    double C2 = 0.0;

    for (std::size_t n = 1; n < N; ++n) {
        const double a = skel.time(n - 1);
        const double d = skel.time(n) - a;
        if (n > 1) {
            SegmentRule rule(quad, binom, p, a, d);
            const double w_prev = std::pow(a, -p) * h * skel.sign(n - 1);
            C1 += w_prev * std::pow(a, p);
            C2 += p * w_prev * std::pow(a, p - 1.0);
            for (std::size_t i = 0; i <= nx; ++i) {
                const double xi = i < nx ? x[i] : 0.0;
                G[i] += S[i] * rule.integral(xi, moments.data());
                S[i] *= std::exp(-xi * d);
            }
        }
        const double w = std::pow(skel.time(n), -p) * h * skel.sign(n);
        for (std::size_t i = 0; i <= nx; ++i) S[i] += w;

        for (std::size_t i = 0; i < nx; ++i) f[i] = std::pow(x[i], 1.0 - p) * (G[i] - C1 / (x[i] + kappa));
        // Below x_min the integrand behaves like x^{1-p} (G(0) - C1 / kappa),
        // above x_max like x^{-1-p} (C2 + C1 kappa).
        f.front() = std::pow(x.front(), 1.0 - p) * (G[nx] - C1 / kappa);
        f.back() = std::pow(x.back(), -1.0 - p) * (C2 + C1 * kappa);
        const auto q = trapezoid(f, s, 1.0 - p, 1.0 + p);
        const double err = c0 * q.error;
        if (err > quad.tolerance) {
            throw NumericalError("fbm_skeleton: outer quadrature error estimate " + text::fmt(err) +
                                 " exceeds tolerance " + text::fmt(quad.tolerance) + " at event " +
                                 std::to_string(n) + "; increase intervals");
        }
        out[n] = c0 * q.value + C1 * std::pow(kappa, -p);
    }
    return out;
}

std::vector<double> fbm_skeleton_direct(const BrownianSkeleton& skel, double H) {
    if (!(H > 0.5 && H < 1.0)) throw DomainError("fbm_skeleton_direct: needs 1/2 < H < 1");
    if (skel.dim() != 1) throw ContractError("fbm_skeleton_direct: needs a one-dimensional skeleton");
    const double p = H - 0.5;
    const double c = 1.0 / std::tgamma(p);
    const double h = skel.step();
    const std::size_t N = skel.event_count() + 1;
    std::vector<double> out(N, 0.0);
    for (std::size_t n = 1; n < N; ++n) {
        const double t = skel.time(n);
        double sum = 0.0;
        for (std::size_t m = 1; m < n; ++m) {
            const double tm = skel.time(m);
            // v = (l - T_m)^p removes the endpoint singularity.
            const auto integrand = [&](double v) { return std::pow(tm + std::pow(v, 1.0 / p), p) / p; };
            const double inner = quad::integrate(integrand, 0.0, std::pow(t - tm, p), 1e-13, "fbm direct kernel");
            sum += std::pow(tm, -p) * h * skel.sign(m) * inner;
        }
        out[n] = c * sum;
    }
    return out;
}

PayoffTable fbm_payoff_table(const std::vector<BrownianSkeleton>& skeletons, const FbmParams& params,
                             const KernelQuadrature& quad, double T) {
    params.validate();
    if (!params.f) throw ContractError("fbm_payoff_table: payoff function required");
    if (skeletons.empty()) throw ContractError("fbm_payoff_table: empty path sample");
    const int k = skeletons.front().level();
    const std::size_t steps = en_steps(k, T);
    PayoffTable t;
    t.level = k;
    t.paths = skeletons.size();
    t.steps = steps;
    const std::size_t cells = t.paths * (steps + 1);
    t.Z.resize(cells);
    t.times.resize(cells);
    t.levels.resize(cells);
    t.signs.resize(cells);
    t.features.resize(cells * kFeatureCount);
    for (const auto& s : skeletons) {
        if (s.level() != k || s.event_count() < steps) {
            throw ContractError("fbm_payoff_table: every skeleton needs level " + std::to_string(k) + " and " +
                                std::to_string(steps) + " events");
        }
    }
    parallel_for(t.paths, [&](std::size_t p) {
        const auto& s = skeletons[p];
        const auto b = fbm_skeleton(s, params, quad);
        double running_max = 0.0;
        double integral = 0.0;
        for (std::size_t i = 0; i <= steps; ++i) {
            const std::size_t c = t.index(p, i);
            const double time = s.time(i);
            const double a = s.value(i, 0);
            if (i > 0) integral += s.value(i - 1, 0) * (time - s.time(i - 1));
            running_max = std::max(running_max, a);
            const double z = std::exp(-params.r * time) * params.f(std::exp(params.alpha * time + params.sigma * b[i]));
            if (!(z >= 0.0)) {
                throw ContractError("fbm_payoff_table: payoff f must be nonnegative, got " + text::fmt(z));
            }
            t.Z[c] = z;
            t.times[c] = time;
            t.levels[c] = s.level_index(i, 0);
            t.signs[c] = i > 0 ? s.sign(i) : 0;
            double* f = t.features.data() + c * kFeatureCount;
            f[kFeatureLevel] = a;
            f[kFeatureMax] = running_max;
            f[kFeatureTime] = time;
            f[kFeatureIntegral] = integral;
            f[kFeaturePayoff] = z;
        }
    });
    return t;
}

void write_fbm_csv(const BrownianSkeleton& skel, const std::vector<double>& b, const FbmParams& params,
                   std::ostream& out) {
    if (b.size() != skel.event_count() + 1) throw ContractError("write_fbm_csv: value count does not match skeleton");
    out << "n,time,A,B_H,W_H,payoff\n";
    for (std::size_t n = 0; n < b.size(); ++n) {
        const double t = skel.time(n);
        const double w = std::exp(params.alpha * t + params.sigma * b[n]);
        const double z = params.f ? std::exp(-params.r * t) * params.f(w) : 0.0;
        out << n << ',' << text::fmt(t) << ',' << text::fmt(skel.value(n, 0)) << ',' << text::fmt(b[n]) << ','
            << text::fmt(w) << ',' << text::fmt(z) << '\n';
    }
}

}  // namespace wfic
