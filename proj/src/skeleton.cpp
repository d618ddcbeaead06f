#include "wfic/skeleton.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>

#include "wfic/error.hpp"
#include "wfic/text.hpp"

namespace wfic {

std::string_view to_string(SkeletonBackend backend) noexcept {
    return backend == SkeletonBackend::renewal ? "renewal" : "grid-coupled";
}

double level_step(int k) { return std::ldexp(1.0, -k); }

const UnitExitLaw& default_exit_law() {
    static const UnitExitLaw law;
    return law;
}

BrownianSkeleton::BrownianSkeleton(int k, double horizon, SkeletonBackend backend,
                                   std::vector<std::vector<double>> times,
                                   std::vector<std::vector<int>> signs)
    : k_(k), step_(level_step(k)), horizon_(horizon), backend_(backend),
      times_(std::move(times)), signs_(std::move(signs)) {
    if (k_ < 1) throw DomainError("skeleton: level k must be >= 1");
    if (!(horizon_ > 0.0)) throw DomainError("skeleton: horizon must be positive");
    if (times_.empty() || times_.size() != signs_.size()) {
        throw ContractError("skeleton: need one time and sign array per coordinate");
    }
    const std::size_t p = times_.size();
    std::size_t total = 0;
    for (std::size_t j = 0; j < p; ++j) {
        const auto& t = times_[j];
        const auto& s = signs_[j];
        if (t.empty() || t.size() != s.size() || t[0] != 0.0) {
            throw ContractError("skeleton: coordinate " + std::to_string(j) + " must start at time 0");
        }
        for (std::size_t n = 1; n < t.size(); ++n) {
            if (!(t[n] > t[n - 1])) {
                throw SimulationError("skeleton: hitting times of coordinate " + std::to_string(j) +
                                      " not strictly increasing at n=" + std::to_string(n));
            }
            if (s[n] != 1 && s[n] != -1) throw ContractError("skeleton: signs must be +1 or -1");
        }
        total += t.size() - 1;
    }

    events_.reserve(total + 1);
    events_.push_back(SkeletonEvent{});
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t n = 1; n < times_[j].size(); ++n) {
            events_.push_back({times_[j][n], static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(n),
                               signs_[j][n]});
        }
    }
    std::sort(events_.begin() + 1, events_.end(), [](const SkeletonEvent& a, const SkeletonEvent& b) {
        return a.time < b.time || (a.time == b.time && a.coord < b.coord);
    });
    // Each coordinate is frozen after its last event, so the merged timeline
    // is what must reach the horizon.
    if (events_.back().time < horizon_) throw ContractError("skeleton: events do not cover the horizon");
    for (std::size_t n = 2; n < events_.size(); ++n) {
        if (events_[n].time == events_[n - 1].time) {
            throw SimulationError("skeleton: tie in merged timeline at t=" + text::fmt(events_[n].time) +
                                  " (coordinates " + std::to_string(events_[n - 1].coord) + " and " +
                                  std::to_string(events_[n].coord) + ")");
        }
    }

    levels_.assign(events_.size() * p, 0);
    for (std::size_t n = 1; n < events_.size(); ++n) {
        std::copy_n(levels_.begin() + static_cast<std::ptrdiff_t>((n - 1) * p), p,
                    levels_.begin() + static_cast<std::ptrdiff_t>(n * p));
        levels_[n * p + events_[n].coord] += events_[n].sign;
    }
}

std::size_t BrownianSkeleton::count_until(double t) const {
    const auto it = std::upper_bound(events_.begin() + 1, events_.end(), t,
                                     [](double x, const SkeletonEvent& e) { return x < e.time; });
    return static_cast<std::size_t>(it - events_.begin()) - 1;
}

std::vector<double> BrownianSkeleton::evaluate_A(double t) const {
    if (!(t >= 0.0 && t <= horizon_)) {
        throw DomainError("evaluate_A: t=" + text::fmt(t) + " outside [0, " + text::fmt(horizon_) + "]");
    }
    const std::size_t n = count_until(t);
    std::vector<double> out(dim());
    for (std::size_t j = 0; j < dim(); ++j) out[j] = value(n, j);
    return out;
}

namespace {

struct CoordinateEvents {
    std::vector<double> times{0.0};
    std::vector<int> signs{0};
};

// Uniforms and a standard normal attached to node `key` of the refinement tree.
double keyed_uniform(std::uint64_t seed, std::uint64_t key, std::uint64_t salt) {
    return (static_cast<double>(splitmix64(seed ^ splitmix64(key) ^ salt) >> 11) + 0.5) * 0x1.0p-53;
}

double keyed_normal(std::uint64_t seed, std::uint64_t key) {
    const double u1 = keyed_uniform(seed, key, 0);
    const double u2 = keyed_uniform(seed, key, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Seed of the bridge refinement: a hash of the first grid rows, which extend()
// never changes.
std::uint64_t path_seed(const GridBrownianPath& path) {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    const std::size_t n = std::min<std::size_t>(path.values().size(), 64);
    for (std::size_t i = 0; i < n; ++i) {
        h = splitmix64(h ^ std::bit_cast<std::uint64_t>(path.values()[i]));
    }
    return h;
}

constexpr int kMaxRefineDepth = 40;
// Sub-steps whose bridge may still cross with probability above this are bisected.
constexpr double kRefineProbability = 1e-2;

// Per-coordinate crossing detector on a grid path.
class GridDetector {
public:
    GridDetector(const GridBrownianPath& path, std::size_t j, double h, bool refine, double min_step)
        : path_(path), j_(j), h_(h), refine_(refine), min_step_(min_step),
          seed_(splitmix64(path_seed(path) + j)) {}

    // Returns false when the grid path is exhausted.
    bool next(double& time, int& sign) {
        while (pending_.empty()) {
            if (i_ + 1 >= path_.size()) return false;
            const double t0 = path_.time(i_);
            const double b0 = path_.value(i_, j_);
            const double b1 = path_.value(i_ + 1, j_);
            walk(t0, b0, t0 + path_.step(), b1, 1, 0);
            ++i_;
        }
        time = pending_.front().first;
        sign = pending_.front().second;
        pending_.pop_front();
        return true;
    }

private:
    // A Brownian bridge from b0 to b1 over dt touches c (both ends on one
    // side) with probability exp(-e), e = 2 (c - b0)(c - b1) / dt.
    static double crossing_exponent(double c, double b0, double b1, double dt) {
        return 2.0 * (c - b0) * (c - b1) / dt;
    }

    void walk(double t0, double b0, double t1, double b1, std::uint64_t node, int depth) {
        static const double refine_exponent = -std::log(kRefineProbability);
        constexpr double negligible_exponent = 40.0;
        const double dt = t1 - t0;
        const double a = static_cast<double>(anchor_) * h_;
        const std::uint64_t key = (static_cast<std::uint64_t>(i_) << 42) ^ node;
        const bool inside = b1 < a + h_ && b1 > a - h_;
        const double e_up = crossing_exponent(a + h_, b0, b1, dt);
        const double e_down = crossing_exponent(a - h_, b0, b1, dt);
        if (refine_ && depth < kMaxRefineDepth && dt > min_step_ && std::min(e_up, e_down) < refine_exponent) {
            const double bm = 0.5 * (b0 + b1) + 0.5 * std::sqrt(dt) * keyed_normal(seed_, key);
            const double tm = 0.5 * (t0 + t1);
            walk(t0, b0, tm, bm, 2 * node, depth + 1);
            walk(tm, bm, t1, b1, 2 * node + 1, depth + 1);
            return;
        }
        if (refine_ && inside) {
            // Leaf: draw the remaining bridge crossing so the event rate stays unbiased.
            if (e_up < negligible_exponent && keyed_uniform(seed_, key, 2) < std::exp(-e_up)) {
                pending_.emplace_back(t0 + 0.5 * dt, 1);
                ++anchor_;
            } else if (e_down < negligible_exponent && keyed_uniform(seed_, key, 3) < std::exp(-e_down)) {
                pending_.emplace_back(t0 + 0.5 * dt, -1);
                --anchor_;
            }
            return;
        }
        if (b1 >= a + h_) {
            const auto m = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor((b1 - a) / h_)));
            for (std::int64_t r = 1; r <= m; ++r) {
                const double crossed = a + static_cast<double>(r) * h_;
                pending_.emplace_back(t0 + dt * std::clamp((crossed - b0) / (b1 - b0), 0.0, 1.0), 1);
            }
            anchor_ += m;
        } else if (b1 <= a - h_) {
            const auto m = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor((a - b1) / h_)));
            for (std::int64_t r = 1; r <= m; ++r) {
                const double crossed = a - static_cast<double>(r) * h_;
                pending_.emplace_back(t0 + dt * std::clamp((b0 - crossed) / (b0 - b1), 0.0, 1.0), -1);
            }
            anchor_ -= m;
        }
    }

    const GridBrownianPath& path_;
    std::size_t j_;
    double h_;
    bool refine_;
    double min_step_;
    std::uint64_t seed_;
    std::size_t i_ = 0;
    std::int64_t anchor_ = 0;
    std::deque<std::pair<double, int>> pending_;
};

// Runs every coordinate past T + 2^{-2k}, pads the merged count to
// `min_events`, then cuts all coordinates at the earliest coordinate end so
// the merged timeline is complete. `draw` returns false when a source is
// exhausted, in which case the whole build reports failure.
template <typename Draw>
std::optional<BrownianSkeleton> assemble(int k, std::size_t p, double T, std::size_t min_events,
                                         SkeletonBackend backend, Draw&& draw) {
    const double h = level_step(k);
    const double cover = T + h * h;
    std::vector<CoordinateEvents> coords(p);
    auto push = [&](std::size_t j) {
        double t = 0.0;
        int s = 0;
        if (!draw(j, t, s)) return false;
        coords[j].times.push_back(t);
        coords[j].signs.push_back(s);
        return true;
    };
    for (std::size_t j = 0; j < p; ++j) {
        while (coords[j].times.back() < cover) {
            if (!push(j)) return std::nullopt;
        }
    }
    auto common_end = [&] {
        double end = std::numeric_limits<double>::infinity();
        for (const auto& c : coords) end = std::min(end, c.times.back());
        return end;
    };
    auto complete_count = [&](double end) {
        std::size_t count = 0;
        for (const auto& c : coords) {
            count += static_cast<std::size_t>(std::upper_bound(c.times.begin(), c.times.end(), end) -
                                              c.times.begin()) - 1;
        }
        return count;
    };
    while (complete_count(common_end()) < min_events) {
        std::size_t lagging = 0;
        for (std::size_t j = 1; j < p; ++j) {
            if (coords[j].times.back() < coords[lagging].times.back()) lagging = j;
        }
        if (!push(lagging)) return std::nullopt;
    }
    const double end = common_end();
    std::vector<std::vector<double>> times(p);
    std::vector<std::vector<int>> signs(p);
    for (std::size_t j = 0; j < p; ++j) {
        const auto keep = static_cast<std::size_t>(
            std::upper_bound(coords[j].times.begin(), coords[j].times.end(), end) - coords[j].times.begin());
        coords[j].times.resize(keep);
        coords[j].signs.resize(keep);
        times[j] = std::move(coords[j].times);
        signs[j] = std::move(coords[j].signs);
    }
    return BrownianSkeleton(k, T, backend, std::move(times), std::move(signs));
}

std::optional<BrownianSkeleton> try_from_grid(const GridBrownianPath& path, int k, double T,
                                              const SkeletonOptions& options) {
    if (!(options.bridge_resolution > 0.0)) throw DomainError("skeleton: bridge resolution must be positive");
    const double h = level_step(k);
    std::vector<GridDetector> detectors;
    detectors.reserve(path.dim());
    for (std::size_t j = 0; j < path.dim(); ++j) {
        detectors.emplace_back(path, j, h, options.bridge_correction, options.bridge_resolution * h * h);
    }
    return assemble(k, path.dim(), T, options.min_events, SkeletonBackend::grid_coupled,
                    [&](std::size_t j, double& t, int& s) { return detectors[j].next(t, s); });
}

void check_common(int k, std::size_t p, double T) {
    if (k < 1) throw DomainError("skeleton: level k must be >= 1");
    if (p < 1) throw DomainError("skeleton: dimension p must be >= 1");
    if (!(T > 0.0)) throw DomainError("skeleton: horizon T must be positive");
}

}  // namespace

BrownianSkeleton build_skeleton(int k, std::size_t p, double T, RandomState& rng, const SkeletonOptions& options) {
    check_common(k, p, T);
    const double h = level_step(k);
    if (options.backend == SkeletonBackend::renewal) {
        const UnitExitLaw& law = default_exit_law();
        std::vector<double> clock(p, 0.0);
        auto result = assemble(k, p, T, options.min_events, SkeletonBackend::renewal,
                               [&](std::size_t j, double& t, int& s) {
                                   clock[j] += h * h * sample_unit_exit_time(law, rng);
                                   t = clock[j];
                                   s = rng.sign();
                                   return true;
                               });
        return std::move(*result);
    }

    const double grid_step = options.grid_step > 0.0 ? options.grid_step : std::ldexp(1.0, -2 * k - 2);
    const double expected_span =
        std::max(T, h * h * static_cast<double>(options.min_events) / static_cast<double>(p));
    GridBrownianPath path = GridBrownianPath::simulate(p, 1.25 * expected_span + 8.0 * h * h, grid_step, rng);
    for (;;) {
        auto result = try_from_grid(path, k, T, options);
        if (result) return std::move(*result);
        path.extend(1.5 * path.horizon(), rng);
    }
}

BrownianSkeleton skeleton_from_grid(const GridBrownianPath& path, int k, double T, const SkeletonOptions& options) {
    check_common(k, path.dim(), T);
    auto result = try_from_grid(path, k, T, options);
    if (!result) {
        throw SimulationError("skeleton: grid path horizon " + text::fmt(path.horizon()) +
                              " is too short for level " + std::to_string(k) + " on [0, " + text::fmt(T) +
                              "]; supply a longer path");
    }
    return std::move(*result);
}

std::vector<BrownianSkeleton> coupled_levels(const GridBrownianPath& path, const std::vector<int>& levels, double T,
                                             const SkeletonOptions& options) {
    if (levels.empty()) throw ContractError("coupled_levels: no levels given");
    for (std::size_t i = 1; i < levels.size(); ++i) {
        if (levels[i] <= levels[i - 1]) throw ContractError("coupled_levels: levels must be strictly ascending");
    }
    const double limit = std::ldexp(1.0, -2 * levels.back() - 2);
    if (path.step() > limit * (1.0 + 1e-12)) {
        throw DomainError("coupled_levels: grid step " + text::fmt(path.step()) + " cannot resolve level " +
                          std::to_string(levels.back()) + " (need step <= " + text::fmt(limit) + ")");
    }
    std::vector<BrownianSkeleton> out;
    out.reserve(levels.size());
    for (int k : levels) out.push_back(skeleton_from_grid(path, k, T, options));
    return out;
}

double sup_distance_to_path(const BrownianSkeleton& skel, const GridBrownianPath& path) {
    if (path.dim() != skel.dim()) throw ContractError("sup_distance_to_path: dimension mismatch");
    double worst = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < path.size() && path.time(i) <= skel.horizon(); ++i) {
        const double t = path.time(i);
        while (n < skel.event_count() && skel.time(n + 1) <= t) ++n;
        for (std::size_t j = 0; j < skel.dim(); ++j) {
            worst = std::max(worst, std::abs(skel.value(n, j) - path.value(i, j)));
        }
    }
    return worst;
}

InfoState info_state(const BrownianSkeleton& skel, std::size_t n) {
    if (n > skel.event_count()) {
        throw DomainError("info_state: step " + std::to_string(n) + " beyond " +
                          std::to_string(skel.event_count()) + " merged events");
    }
    InfoState state;
    state.n = n;
    state.times.reserve(n);
    state.marks.reserve(n);
    for (std::size_t i = 1; i <= n; ++i) {
        const auto& e = skel.event(i);
        state.times.push_back(e.time);
        std::vector<int> mark(skel.dim(), 0);
        mark[e.coord] = e.sign;
        state.marks.push_back(std::move(mark));
    }
    return state;
}

void write_skeleton_csv(const BrownianSkeleton& skel, std::ostream& out) {
    out << "level,coord,n,time,sign\n";
    for (std::size_t j = 0; j < skel.dim(); ++j) {
        const auto& t = skel.coordinate_times(j);
        const auto& s = skel.coordinate_signs(j);
        for (std::size_t n = 0; n < t.size(); ++n) {
            out << skel.level() << ',' << j << ',' << n << ',' << text::fmt(t[n]) << ',' << s[n] << '\n';
        }
    }
}

BrownianSkeleton read_skeleton_csv(std::istream& in, double horizon, SkeletonBackend backend) {
    std::string line;
    if (!std::getline(in, line) || line != "level,coord,n,time,sign") {
        throw ContractError("skeleton csv: missing header 'level,coord,n,time,sign'");
    }
    int k = 0;
    std::vector<std::vector<double>> times;
    std::vector<std::vector<int>> signs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = text::split(line);
        if (cells.size() != 5) throw ContractError("skeleton csv: expected 5 columns in '" + line + "'");
        const int level = static_cast<int>(text::parse_int(cells[0]));
        if (k == 0) k = level;
        if (level != k) throw ContractError("skeleton csv: mixed levels");
        const auto j = static_cast<std::size_t>(text::parse_int(cells[1]));
        const auto n = static_cast<std::size_t>(text::parse_int(cells[2]));
        if (j >= times.size()) {
            times.resize(j + 1);
            signs.resize(j + 1);
        }
        if (n != times[j].size()) throw ContractError("skeleton csv: rows of coordinate out of order");
        times[j].push_back(text::parse_double(cells[3]));
        signs[j].push_back(static_cast<int>(text::parse_int(cells[4])));
    }
    if (times.empty()) throw ContractError("skeleton csv: no rows");
    return BrownianSkeleton(k, horizon, backend, std::move(times), std::move(signs));
}

}  // namespace wfic
