#include "wfic/operators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "wfic/error.hpp"
#include "wfic/parallel.hpp"
#include "wfic/text.hpp"

namespace wfic {

namespace {

std::vector<double> row_values(const BrownianSkeleton& skel, std::size_t n) {
    std::vector<double> v(skel.dim());
    for (std::size_t j = 0; j < skel.dim(); ++j) v[j] = skel.value(n, j);
    return v;
}

void require_one_dimensional(const BrownianSkeleton& skel, const char* who) {
    if (skel.dim() != 1) throw DomainError(std::string(who) + ": requires a one-dimensional skeleton");
}

}  // namespace

// Operator series ----------------------------------------------------------

OperatorSeries discrete_operators(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord,
                                  double max_time) {
    if (coord >= skel.dim()) throw DomainError("operators: coordinate out of range");
    if (std::isnan(max_time)) max_time = skel.horizon();
    const std::size_t M = skel.count_until(max_time);
    const double h = skel.step();
    const double h2 = h * h;

    OperatorSeries out;
    out.level = skel.level();
    out.step = h;
    out.coord = coord;
    out.times.reserve(M + 1);
    out.X.reserve(M + 1);

    auto acc = F.accumulator(skel.dim());
    std::vector<double> prev = row_values(skel, 0);
    std::vector<double> next(skel.dim());
    std::vector<double> bumped(skel.dim());
    out.times.push_back(0.0);
    out.X.push_back(acc->evaluate(0.0, 0.0, prev, prev));

    for (std::size_t n = 1; n <= M; ++n) {
        const double t_prev = skel.time(n - 1);
        const double t = skel.time(n);
        const double X_prev = out.X.back();
        double X = 0.0;
        if (skel.coord(n) == coord) {
            OperatorRow row;
            row.n = n;
            row.time = t;
            row.sign = skel.sign(n);
            row.X_prev = X_prev;
            row.F_zero = acc->evaluate(t_prev, t, prev, prev);
            bumped = prev;
            const auto level = skel.level_index(n - 1, coord);
            bumped[coord] = static_cast<double>(level + 1) * h;
            row.F_plus = acc->evaluate(t_prev, t, prev, bumped);
            bumped[coord] = static_cast<double>(level - 1) * h;
            row.F_minus = acc->evaluate(t_prev, t, prev, bumped);
            X = row.sign > 0 ? row.F_plus : row.F_minus;
            row.X = X;
            // Division by the jump is by exactly +-2^{-k}.
            row.D = (X - X_prev) / (static_cast<double>(row.sign) * h);
            row.Dh = (row.F_zero - X_prev) / h2;
            row.D2 = (row.F_plus + row.F_minus - 2.0 * row.F_zero) / h2;
            row.U = (0.5 * (row.F_plus + row.F_minus) - X_prev) / h2;
            out.rows.push_back(row);
        } else {
            for (std::size_t j = 0; j < skel.dim(); ++j) next[j] = skel.value(n, j);
            X = acc->evaluate(t_prev, t, prev, next);
        }
        acc->absorb(t_prev, t, prev);
        for (std::size_t j = 0; j < skel.dim(); ++j) prev[j] = skel.value(n, j);
        out.times.push_back(t);
        out.X.push_back(X);
    }
    out.rows.shrink_to_fit();
    out.max_time = max_time;
    return out;
}

OperatorSeries discrete_derivative(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord) {
    return discrete_operators(F, skel, coord);
}

OperatorSeries discrete_generator(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord) {
    return discrete_operators(F, skel, coord);
}

namespace {

std::ptrdiff_t last_row_at(const OperatorSeries& s, double t) {
    const auto it = std::upper_bound(s.rows.begin(), s.rows.end(), t,
                                     [](double x, const OperatorRow& r) { return x < r.time; });
    return (it - s.rows.begin()) - 1;
}

}  // namespace

double OperatorSeries::derivative_at(double t) const {
    const auto i = last_row_at(*this, t);
    return i < 0 ? 0.0 : rows[static_cast<std::size_t>(i)].D;
}

double OperatorSeries::generator_at(double t) const {
    const auto i = last_row_at(*this, t);
    return i < 0 ? 0.0 : rows[static_cast<std::size_t>(i)].U;
}

double OperatorSeries::derivative_integral(double a, double b) const {
    if (!(a <= b) || a < 0.0 || b > max_time) {
        throw DomainError("derivative_integral: need 0 <= a <= b <= " + text::fmt(max_time));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double lo = std::max(a, rows[i].time);
        const double hi = std::min(b, i + 1 < rows.size() ? rows[i + 1].time : b);
        if (hi > lo) sum += rows[i].D * (hi - lo);
    }
    return sum;
}

// Statistics ---------------------------------------------------------------

Diagnostic summarize(const std::vector<double>& values, std::string name) {
    Diagnostic d;
    d.name = std::move(name);
    d.samples = values.size();
    if (values.empty()) return d;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    d.mean = mean;
    if (values.size() > 1) {
        const double var = ss / static_cast<double>(values.size() - 1);
        d.se = std::sqrt(var / static_cast<double>(values.size()));
    }
    return d;
}

Diagnostic martingale_residual(const PathFunctional& F, const std::vector<BrownianSkeleton>& paths,
                               const PastTest& psi, std::size_t coord) {
    if (paths.size() < 100) {
        throw ContractError("martingale_residual: need at least 100 paths, got " + std::to_string(paths.size()));
    }
    if (!psi) throw ContractError("martingale_residual: test function required");
    std::vector<double> per_path(paths.size());
    parallel_for(paths.size(), [&](std::size_t p) {
        const auto& skel = paths[p];
        const auto series = discrete_operators(F, skel, coord);
        const double h2 = series.step * series.step;
        double sum = 0.0;
        for (const auto& r : series.rows) sum += ((r.X - r.X_prev) - h2 * r.U) * psi(skel, r.n - 1);
        per_path[p] = sum;
    });
    return summarize(per_path, "martingale_residual:" + F.name());
}

EnergyStats energy(const PathFunctional& F, const std::vector<BrownianSkeleton>& paths) {
    EnergyStats out;
    out.per_path.resize(paths.size());
    parallel_for(paths.size(), [&](std::size_t p) {
        const auto series = discrete_operators(F, paths[p], 0);
        double e = 0.0;
        for (std::size_t n = 1; n < series.X.size(); ++n) {
            const double dx = series.X[n] - series.X[n - 1];
            e += dx * dx;
        }
        out.per_path[p] = e;
    });
    out.summary = summarize(out.per_path, "energy:" + F.name());
    return out;
}

double BracketPath::at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

BracketPath covariation_bracket(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord) {
    const auto series = discrete_operators(F, skel, coord);
    BracketPath out;
    double acc = 0.0;
    for (const auto& r : series.rows) {
        acc += (r.X - r.X_prev) * static_cast<double>(r.sign) * series.step;
        out.times.push_back(r.time);
        out.values.push_back(acc);
    }
    return out;
}

// Vertical grid derivative -------------------------------------------------

LevelWindow auto_window(const BrownianSkeleton& skel, std::size_t count, std::size_t coord) {
    if (count > skel.event_count()) throw DomainError("auto_window: step beyond the skeleton");
    std::int64_t lo = skel.level_index(0, coord);
    std::int64_t hi = lo;
    for (std::size_t n = 1; n <= count; ++n) {
        lo = std::min(lo, skel.level_index(n, coord));
        hi = std::max(hi, skel.level_index(n, coord));
    }
    return {lo - 1, hi + 1};
}

namespace {

void require_covered(const BrownianSkeleton& skel, std::size_t count, std::size_t coord, const LevelWindow& w,
                     const char* who) {
    if (w.hi < w.lo) throw DomainError(std::string(who) + ": empty level window");
    for (std::size_t n = 0; n <= count; ++n) {
        if (!w.contains(skel.level_index(n, coord))) {
            throw DomainError(std::string(who) + ": window [" + std::to_string(w.lo) + ", " + std::to_string(w.hi) +
                              "] does not cover visited level " + std::to_string(skel.level_index(n, coord)));
        }
    }
}

}  // namespace

std::vector<double> vertical_grid_derivative(const PathFunctional& F, const BrownianSkeleton& skel, double t,
                                             const LevelWindow& window, std::size_t coord) {
    if (coord >= skel.dim()) throw DomainError("vertical_grid_derivative: coordinate out of range");
    if (!(t > 0.0 && t <= skel.last_time())) {
        throw DomainError("vertical_grid_derivative: t must lie in (0, " + text::fmt(skel.last_time()) + "]");
    }
    const auto path = PiecewiseConstantPath::from_skeleton(skel);
    const std::size_t before = path.index_before(t);
    require_covered(skel, before, coord, window, "vertical_grid_derivative");
    const double h = skel.step();
    std::vector<double> terminal(path.row(before).begin(), path.row(before).end());
    auto at = [&](std::int64_t j) {
        terminal[coord] = static_cast<double>(j) * h;
        return evaluate_terminal_modified(F, path, t, terminal);
    };
    std::vector<double> out(window.size());
    double lower = at(window.lo - 1);
    for (std::int64_t j = window.lo; j <= window.hi; ++j) {
        const double upper = at(j);
        out[static_cast<std::size_t>(j - window.lo)] = (upper - lower) / h;
        lower = upper;
    }
    return out;
}

// Local times --------------------------------------------------------------

double CrossingLocalTimeField::L(std::int64_t j) const {
    if (!window.contains(j)) return 0.0;
    const auto i = static_cast<std::size_t>(j - window.lo);
    return step * static_cast<double>(up[i] + down[i]);
}

double CrossingLocalTimeField::occupation(std::int64_t j) const {
    if (!window.contains(j)) return 0.0;
    return step * static_cast<double>(visits[static_cast<std::size_t>(j - window.lo)]);
}

bool CrossingLocalTimeField::crossings_interleave() const {
    for (std::size_t i = 0; i + 1 < up.size(); ++i) {
        if (std::llabs(up[i + 1] - down[i]) > 1) return false;
    }
    return true;
}

CrossingLocalTimeField crossing_local_time(const BrownianSkeleton& skel, double t) {
    require_one_dimensional(skel, "crossing_local_time");
    if (!(t >= 0.0 && t <= skel.last_time())) throw DomainError("crossing_local_time: t outside the skeleton");
    return crossing_local_time(skel, t, auto_window(skel, skel.count_until(t)));
}

CrossingLocalTimeField crossing_local_time(const BrownianSkeleton& skel, double t, const LevelWindow& window) {
    require_one_dimensional(skel, "crossing_local_time");
    if (!(t >= 0.0 && t <= skel.last_time())) throw DomainError("crossing_local_time: t outside the skeleton");
    const std::size_t N = skel.count_until(t);
    require_covered(skel, N, 0, window, "crossing_local_time");
    CrossingLocalTimeField f;
    f.level = skel.level();
    f.step = skel.step();
    f.time = t;
    f.window = window;
    f.up.assign(window.size(), 0);
    f.down.assign(window.size(), 0);
    f.visits.assign(window.size(), 0);
    for (std::size_t n = 1; n < N; ++n) {
        const auto i = static_cast<std::size_t>(skel.level_index(n, 0) - window.lo);
        (skel.sign(n) > 0 ? f.up : f.down)[i] += 1;
    }
    for (std::size_t n = 1; n <= N; ++n) {
        f.visits[static_cast<std::size_t>(skel.level_index(n - 1, 0) - window.lo)] += 1;
    }
    return f;
}

double spacetime_localtime_sum(const BrownianSkeleton& skel, const SimpleRandomField& H, double t,
                               const LevelWindow& window) {
    require_one_dimensional(skel, "spacetime_localtime_sum");
    if (!H.alpha) throw ContractError("spacetime_localtime_sum: field has no coefficients");
    if (H.support.lo < window.lo || H.support.hi > window.hi) {
        throw DomainError("spacetime_localtime_sum: field support exceeds the level window");
    }
    if (!(t >= 0.0 && t <= skel.last_time())) throw DomainError("spacetime_localtime_sum: t outside the skeleton");
    const std::size_t N = skel.count_until(t);
    if (N > 0) require_covered(skel, N - 1, 0, window, "spacetime_localtime_sum");
    const double h = skel.step();
    auto alpha = [&](std::int64_t j, std::size_t n) {
        return H.support.contains(j) ? H.alpha(j, n) : 0.0;
    };
    double sum = 0.0;
    for (std::size_t n = 1; n <= N; ++n) {
        // l^j grows at T_n for j = A(T_{n-1}); it enters with + at level j and
        // with - at level j + 1.
        const std::int64_t l = skel.level_index(n - 1, 0);
        if (window.contains(l)) sum += h * alpha(l, n);
        if (window.contains(l + 1)) sum -= h * alpha(l + 1, n);
    }
    return sum;
}

SimpleRandomField vertical_derivative_field(const PathFunctional& F, const BrownianSkeleton& skel,
                                            const OperatorSeries& series, const LevelWindow& window) {
    require_one_dimensional(skel, "vertical_derivative_field");
    struct Cache {
        std::vector<std::ptrdiff_t> row_of;  // merged n -> row
        std::vector<OperatorRow> rows;
        std::vector<std::int64_t> level_before;
        std::vector<double> times;
        double h = 0.0;
        PathFunctional F;
        std::shared_ptr<PiecewiseConstantPath> path;
    };
    auto cache = std::make_shared<Cache>();
    cache->row_of.assign(series.times.size(), -1);
    for (std::size_t i = 0; i < series.rows.size(); ++i) {
        cache->row_of[series.rows[i].n] = static_cast<std::ptrdiff_t>(i);
    }
    cache->rows = series.rows;
    cache->level_before.resize(series.times.size(), 0);
    for (std::size_t n = 1; n < series.times.size(); ++n) cache->level_before[n] = skel.level_index(n - 1, 0);
    cache->times = series.times;
    cache->h = series.step;
    cache->F = F;
    cache->path = std::make_shared<PiecewiseConstantPath>(PiecewiseConstantPath::from_skeleton(skel));

    SimpleRandomField field;
    field.support = window;
    field.alpha = [cache](std::int64_t j, std::size_t n) {
        if (n == 0 || n >= cache->row_of.size()) throw DomainError("vertical derivative field: step out of range");
        const double h = cache->h;
        const std::int64_t l = cache->level_before[n];
        const auto r = cache->row_of[n];
        if (r >= 0) {
            const auto& row = cache->rows[static_cast<std::size_t>(r)];
            if (j == l) return (row.F_zero - row.F_minus) / h;
            if (j == l + 1) return (row.F_plus - row.F_zero) / h;
        }
        std::vector<double> x{static_cast<double>(j) * h};
        const double upper = evaluate_terminal_modified(cache->F, *cache->path, cache->times[n], x);
        x[0] = static_cast<double>(j - 1) * h;
        const double lower = evaluate_terminal_modified(cache->F, *cache->path, cache->times[n], x);
        return (upper - lower) / h;
    };
    return field;
}

double summation_by_parts_residual(const PathFunctional& F, const BrownianSkeleton& skel, double t) {
    require_one_dimensional(skel, "summation_by_parts_residual");
    const auto series = discrete_operators(F, skel, 0, t);
    const std::size_t N = series.times.size() - 1;
    const auto window = auto_window(skel, N);
    const auto field = vertical_derivative_field(F, skel, series, window);
    const double h2 = series.step * series.step;
    double second = 0.0;
    for (const auto& r : series.rows) second += r.D2 * h2;
    return 0.5 * second + 0.5 * spacetime_localtime_sum(skel, field, t, window);
}

TanakaResult tanaka_residual(const BrownianSkeleton& skel, double x, double t) {
    require_one_dimensional(skel, "tanaka_residual");
    const double h = skel.step();
    const double ratio = x / h;
    if (std::abs(ratio - std::round(ratio)) > 1e-9) {
        throw DomainError("tanaka_residual: x=" + text::fmt(x) + " is not on the level-" +
                          std::to_string(skel.level()) + " grid");
    }
    const double a_t = skel.evaluate_A(t)[0];
    const std::size_t N = skel.count_until(t);
    TanakaResult out;
    double drift = 0.0;
    for (std::size_t n = 1; n <= N; ++n) {
        const double before = skel.value(n - 1, 0);
        const double jump = skel.value(n, 0) - before;
        if (before > x) {
            drift += jump;
        } else if (before < x) {
            drift -= jump;
        } else {
            ++out.visits;
        }
    }
    out.residual = std::abs(a_t - x) - std::abs(skel.value(0, 0) - x) - drift - h * static_cast<double>(out.visits);
    return out;
}

// Export -------------------------------------------------------------------

void write_operator_csv(const OperatorSeries& series, std::ostream& out) {
    out << "n,time,D,Dh,D2,U\n";
    for (const auto& r : series.rows) {
        out << r.n << ',' << text::fmt(r.time) << ',' << text::fmt(r.D) << ',' << text::fmt(r.Dh) << ','
            << text::fmt(r.D2) << ',' << text::fmt(r.U) << '\n';
    }
}

void write_localtime_csv(const CrossingLocalTimeField& field, std::ostream& out) {
    out << "j,level,u,d,L\n";
    for (std::int64_t j = field.window.lo; j <= field.window.hi; ++j) {
        const auto i = static_cast<std::size_t>(j - field.window.lo);
        out << j << ',' << text::fmt(static_cast<double>(j) * field.step) << ',' << field.up[i] << ','
            << field.down[i] << ',' << text::fmt(field.L(j)) << '\n';
    }
}

}  // namespace wfic
