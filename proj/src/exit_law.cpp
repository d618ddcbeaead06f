#include "wfic/exit_law.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "wfic/error.hpp"

namespace wfic {

namespace {

constexpr double kSwitchTime = 1.0;  // image series below, eigen series above
constexpr double kGridMin = 0.02;
constexpr double kGridMax = 16.0;
constexpr std::size_t kGridSize = 512;

[[noreturn]] void truncation_failure(const char* series, double t, std::size_t terms) {
    throw NumericalError(std::string("exit-time law: ") + series + " series at t=" +
                         std::to_string(t) + " did not reach tolerance within " +
                         std::to_string(terms) + " terms");
}

}  // namespace

UnitExitLaw::UnitExitLaw(double series_truncation_tolerance, std::size_t max_terms)
    : tolerance_(series_truncation_tolerance), max_terms_(max_terms) {
    if (!(tolerance_ > 0.0) || max_terms_ == 0) {
        throw DomainError("exit-time law: tolerance must be positive and max_terms >= 1");
    }
    grid_t_.resize(kGridSize);
    grid_cdf_.resize(kGridSize);
    const double log_lo = std::log(kGridMin);
    const double log_hi = std::log(kGridMax);
    for (std::size_t i = 0; i < kGridSize; ++i) {
        grid_t_[i] = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) /
                                           static_cast<double>(kGridSize - 1));
        grid_cdf_[i] = cdf(grid_t_[i]);
    }
}

double UnitExitLaw::small_t_cdf(double t) const {
    // P(tau <= t) = 2 sum_n (-1)^n erfc((2n+1) / sqrt(2t))
    const double scale = 1.0 / std::sqrt(2.0 * t);
    double sum = 0.0;
    for (std::size_t n = 0; n < max_terms_; ++n) {
        const double a = static_cast<double>(2 * n + 1);
        const double term = 2.0 * std::erfc(a * scale);
        sum += (n % 2 == 0) ? term : -term;
        if (term == 0.0 || term <= tolerance_ * std::abs(sum)) return sum;
    }
    truncation_failure("image", t, max_terms_);
}

double UnitExitLaw::small_t_density(double t) const {
    const double pref = 2.0 / (std::sqrt(2.0 * std::numbers::pi) * t * std::sqrt(t));
    double sum = 0.0;
    for (std::size_t n = 0; n < max_terms_; ++n) {
        const double a = static_cast<double>(2 * n + 1);
        const double term = pref * a * std::exp(-a * a / (2.0 * t));
        sum += (n % 2 == 0) ? term : -term;
        if (term == 0.0 || term <= tolerance_ * std::abs(sum)) return sum;
    }
    truncation_failure("image density", t, max_terms_);
}

double UnitExitLaw::large_t_survival(double t) const {
    // P(tau > t) = (4/pi) sum_n (-1)^n / (2n+1) exp(-(2n+1)^2 pi^2 t / 8)
    constexpr double pi2_8 = std::numbers::pi * std::numbers::pi / 8.0;
    double sum = 0.0;
    for (std::size_t n = 0; n < max_terms_; ++n) {
        const double a = static_cast<double>(2 * n + 1);
        const double term = 4.0 / std::numbers::pi / a * std::exp(-a * a * pi2_8 * t);
        sum += (n % 2 == 0) ? term : -term;
        if (term == 0.0 || term <= tolerance_ * std::abs(sum)) return sum;
    }
    truncation_failure("eigenfunction", t, max_terms_);
}

double UnitExitLaw::large_t_density(double t) const {
    constexpr double pi2_8 = std::numbers::pi * std::numbers::pi / 8.0;
    double sum = 0.0;
    for (std::size_t n = 0; n < max_terms_; ++n) {
        const double a = static_cast<double>(2 * n + 1);
        const double term = 0.5 * std::numbers::pi * a * std::exp(-a * a * pi2_8 * t);
        sum += (n % 2 == 0) ? term : -term;
        if (term == 0.0 || term <= tolerance_ * std::abs(sum)) return sum;
    }
    truncation_failure("eigenfunction density", t, max_terms_);
}

double UnitExitLaw::cdf(double t) const {
    if (!(t > 0.0)) return 0.0;
    if (t < kSwitchTime) return small_t_cdf(t);
    return 1.0 - large_t_survival(t);
}

double UnitExitLaw::survival(double t) const {
    if (!(t > 0.0)) return 1.0;
    if (t < kSwitchTime) return 1.0 - small_t_cdf(t);
    return large_t_survival(t);
}

double UnitExitLaw::density(double t) const {
    if (!(t > 0.0)) return 0.0;
    return t < kSwitchTime ? small_t_density(t) : large_t_density(t);
}

double UnitExitLaw::moment(int n) {
    // |E_{2n}| for n = 0..5: 1, 1, 5, 61, 1385, 50521
    static constexpr double euler[] = {1.0, 1.0, 5.0, 61.0, 1385.0, 50521.0};
    if (n < 0 || n > 5) throw DomainError("exit-time law: moments available for n in [0, 5]");
    double value = euler[n];
    for (int i = 1; i <= n; ++i) value *= 2.0 * i;      // 2^n n!
    for (int i = 1; i <= 2 * n; ++i) value /= i;        // (2n)!
    return value;
}

double UnitExitLaw::quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("exit-time law: quantile requires u in (0, 1)");
    const bool lower = u <= 0.5;
    const double target = lower ? u : 1.0 - u;
    // g is increasing in t and vanishes at the quantile.
    auto g = [&](double t) { return lower ? cdf(t) - target : target - survival(t); };

    double lo = 0.0;
    double hi = 0.0;
    if (u < grid_cdf_.front()) {
        hi = grid_t_.front();
        lo = 0.5 * hi;
        while (cdf(lo) >= u) {
            hi = lo;
            lo *= 0.5;
            if (lo < 1e-6) break;  // cdf underflows well before this
        }
    } else if (u >= grid_cdf_.back()) {
        lo = grid_t_.back();
        hi = 2.0 * lo;
        while (survival(hi) > 1.0 - u) {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        const auto it = std::upper_bound(grid_cdf_.begin(), grid_cdf_.end(), u);
        const std::size_t i = static_cast<std::size_t>(it - grid_cdf_.begin());
        lo = grid_t_[i - 1];
        hi = grid_t_[i];
    }

    double t = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double value = g(t);
        if (value == 0.0) return t;
        if (value < 0.0) lo = t; else hi = t;
        const double f = density(t);
        double next = (f > 0.0) ? t - value / f : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - t);
        t = next;
        if (step <= tolerance_ * std::max(1.0, t) || hi - lo <= tolerance_ * std::max(1.0, t)) {
            return t;
        }
    }
    throw NumericalError("exit-time law: quantile search did not converge at u=" + std::to_string(u));
}

double sample_unit_exit_time(const UnitExitLaw& law, RandomState& rng) { return law.sample(rng); }

}  // namespace wfic
