#pragma once

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace impulse {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();
inline constexpr double inf_v = std::numeric_limits<double>::infinity();

/// Finite-difference step with uniform relative accuracy.
inline double fd_step(double x) { return std::max(1e-6, 1e-6 * std::fabs(x)); }

template <class Fn>
double central_diff(Fn&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

template <class Fn>
double second_diff(Fn&& f, double x, double h) {
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = a;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.back() = b;
    return out;
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// the input, never on how work was scheduled.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Root of f on [a, b] given f(a), f(b) of opposite sign, to absolute
/// tolerance xtol in x.
template <class Fn>
double solve_bracketed(Fn&& f, double a, double b, double fa, double fb, double xtol,
                       std::uintmax_t max_iter = 200) {
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0) == (fb > 0)) throw SolverError("root not bracketed");
    auto tol = [xtol](double l, double r) { return std::fabs(r - l) <= xtol; };
    std::uintmax_t it = max_iter;
    const auto [l, r] = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, it);
    return 0.5 * (l + r);
}

template <class Fn>
double solve_bracketed(Fn&& f, double a, double b, double xtol) {
    return solve_bracketed(f, a, b, f(a), f(b), xtol);
}

} // namespace impulse
