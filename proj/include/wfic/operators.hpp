#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "wfic/functional.hpp"
#include "wfic/skeleton.hpp"

namespace wfic {

/// Operator values at one hitting time T_n of the chosen coordinate.
struct OperatorRow {
    std::size_t n = 0;  ///< merged event index
    double time = 0.0;
    int sign = 0;
    double X_prev = 0.0;  ///< F_{T_{n-1}}(A_{T_{n-1}})
    double F_zero = 0.0;  ///< F_{T_n}(A_{T_n-})
    double F_plus = 0.0;  ///< F_{T_n} with terminal A_{T_n-} + 2^{-k}
    double F_minus = 0.0; ///< F_{T_n} with terminal A_{T_n-} - 2^{-k}
    double X = 0.0;       ///< F_{T_n}(A_{T_n})
    double D = 0.0;
    double Dh = 0.0;
    double D2 = 0.0;
    double U = 0.0;
};

/// D, Dh, D2 and U along a skeleton for one coordinate, plus the merged
/// series X(T_n) of the functional itself.
struct OperatorSeries {
    int level = 0;
    double step = 0.0;
    std::size_t coord = 0;
    double max_time = 0.0;      ///< events with T_n <= max_time are included
    std::vector<double> times;  ///< merged T_0..T_M used
    std::vector<double> X;      ///< X(T_0..T_M)
    std::vector<OperatorRow> rows;

    /// Stepwise embedding: D(T_l) on [T_l, T_{l+1}) of the coordinate, 0 before T_1.
    [[nodiscard]] double derivative_at(double t) const;
    [[nodiscard]] double generator_at(double t) const;
    /// int_a^b of the derivative embedding, exact for the step path.
    [[nodiscard]] double derivative_integral(double a, double b) const;
};

/// Computes every operator column on merged events with T_n <= max_time
/// (default: the skeleton horizon). Cost is linear in the event count for
/// functionals with streaming accumulators.
OperatorSeries discrete_operators(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord = 0,
                                  double max_time = std::numeric_limits<double>::quiet_NaN());

/// Named entry points; both return the full series.
OperatorSeries discrete_derivative(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord = 0);
OperatorSeries discrete_generator(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord = 0);

/// Mean, standard error and sample size of a per-path statistic.
struct Diagnostic {
    std::string name;
    double mean = 0.0;
    double se = 0.0;
    std::size_t samples = 0;
};

Diagnostic summarize(const std::vector<double>& values, std::string name = {});

/// psi(skeleton, n) evaluated on the information up to step n.
using PastTest = std::function<double(const BrownianSkeleton&, std::size_t)>;

/// Per path sum_n m_n psi(A_{n-1}) with m_n = dX(T_n) - 2^{-2k} U(T_n) over
/// hitting times T_n <= horizon. Needs at least 100 paths.
Diagnostic martingale_residual(const PathFunctional& F, const std::vector<BrownianSkeleton>& paths,
                               const PastTest& psi, std::size_t coord = 0);

struct EnergyStats {
    std::vector<double> per_path;
    Diagnostic summary;
};

/// sum_n |dX(T_n)|^2 over merged events T_n <= horizon.
EnergyStats energy(const PathFunctional& F, const std::vector<BrownianSkeleton>& paths);

/// [X, A^j](t) = sum_{T_n <= t} dX dA^j as a step path.
struct BracketPath {
    std::vector<double> times{0.0};
    std::vector<double> values{0.0};
    [[nodiscard]] double at(double t) const;
};

BracketPath covariation_bracket(const PathFunctional& F, const BrownianSkeleton& skel, std::size_t coord = 0);

/// Closed level window [lo, hi] in units of 2^{-k}.
struct LevelWindow {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    [[nodiscard]] bool contains(std::int64_t j) const noexcept { return j >= lo && j <= hi; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(hi - lo + 1); }
};

/// Range of coordinate levels visited at steps 0..count, widened by one level.
LevelWindow auto_window(const BrownianSkeleton& skel, std::size_t count, std::size_t coord = 0);

/// grad(j) = [F_t(t(A_t, j h)) - F_t(t(A_t, (j-1) h))] / h for j in the window,
/// at t in (T_{n-1}, T_n]. The window must cover the levels visited before t.
std::vector<double> vertical_grid_derivative(const PathFunctional& F, const BrownianSkeleton& skel, double t,
                                             const LevelWindow& window, std::size_t coord = 0);

/// Local-time counts of a one-dimensional skeleton on a level window.
///
/// u, d count arrivals at each level among steps 1..N(t)-1, split by
/// direction, and L = 2^{-k}(u + d). `visits` counts steps n <= N(t) that
/// leave from the level (A(T_{n-1}) = j h); `occupation` = 2^{-k} visits is
/// the bracket-clock occupation used by the space-time sums.
struct CrossingLocalTimeField {
    int level = 0;
    double step = 0.0;
    double time = 0.0;
    LevelWindow window;
    std::vector<std::int64_t> up;
    std::vector<std::int64_t> down;
    std::vector<std::int64_t> visits;

    [[nodiscard]] double L(std::int64_t j) const;
    [[nodiscard]] double occupation(std::int64_t j) const;
    /// Up-crossings of the edge (j, j+1) and down-crossings of it alternate:
    /// |u(j+1) - d(j)| <= 1 for every j.
    [[nodiscard]] bool crossings_interleave() const;
};

CrossingLocalTimeField crossing_local_time(const BrownianSkeleton& skel, double t);
CrossingLocalTimeField crossing_local_time(const BrownianSkeleton& skel, double t, const LevelWindow& window);

/// Simple random field H = sum_j alpha_j(s) 1_{(j-1, j]} with alpha_j given
/// at the skeleton's jump times and zero outside [support.lo, support.hi].
struct SimpleRandomField {
    LevelWindow support;
    std::function<double(std::int64_t j, std::size_t n)> alpha;
};

/// sum_j int_0^t alpha_j(s) [d l^j(s) - d l^{j-1}(s)] with the bracket-clock
/// occupation l^j, which grows by 2^{-k} at T_n when A(T_{n-1}) = j 2^{-k}.
double spacetime_localtime_sum(const BrownianSkeleton& skel, const SimpleRandomField& H, double t,
                               const LevelWindow& window);

/// The vertical grid derivative of F as a simple random field on `window`.
/// Values on the two levels adjacent to A(T_{n-1}) come from the operator
/// series; other levels are evaluated on demand.
SimpleRandomField vertical_derivative_field(const PathFunctional& F, const BrownianSkeleton& skel,
                                            const OperatorSeries& series, const LevelWindow& window);

/// (1/2) sum_{T_n <= t} D2(T_n) 2^{-2k} + (1/2) spacetime sum of the vertical
/// derivative field; zero up to rounding.
double summation_by_parts_residual(const PathFunctional& F, const BrownianSkeleton& skel, double t);

struct TanakaResult {
    double residual = 0.0;
    std::int64_t visits = 0;
};

/// |A(t) - x| - |A(0) - x| - sum_n sgn(A(T_{n-1}) - x) dA(T_n) - 2^{-k} #{n <= N(t): A(T_{n-1}) = x}.
TanakaResult tanaka_residual(const BrownianSkeleton& skel, double x, double t);

void write_operator_csv(const OperatorSeries& series, std::ostream& out);
void write_localtime_csv(const CrossingLocalTimeField& field, std::ostream& out);

}  // namespace wfic
