#pragma once

// Euler-Maruyama building blocks shared by the policy simulator and the
// resolvent validator.

#include <impulse/problem.hpp>

#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <random>

namespace impulse {

/// Algorithm recorded in simulation output headers.
inline constexpr const char* generator_name =
    "mt19937_64 seeded by seed_seq{seed, path_hi, path_lo}; boost ziggurat normal";

/// Independent, reproducible normal stream for one path.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
        engine_.seed(seq);
    }

    double normal() { return normal_(engine_); }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_;
};

/// Expression evaluator with a fast path for polynomials of degree <= 2,
/// detected by exact agreement on a wide sample. Falls back to the
/// expression interpreter otherwise.
class FastFn {
public:
    FastFn() = default;

    FastFn(const Expr& e, double lo, double hi) : expr_(e) {
        try {
            const double m = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
            const double f0 = e(lo), f1 = e(m), f2 = e(hi);
            // Newton form through (lo, m, hi).
            const double d1 = (f1 - f0) / h, d2 = (f2 - f1) / h;
            c2_ = (d2 - d1) / (2.0 * h);
            c1_ = d1 - c2_ * (lo + m);
            c0_ = f0 - c1_ * lo - c2_ * lo * lo;
            double scale = std::max({std::fabs(f0), std::fabs(f1), std::fabs(f2), 1.0});
            for (int i = 0; i <= 40; ++i) {
                const double x = lo + (hi - lo) * (i + 0.37) / 41.0;
                const double v = e(x);
                if (!std::isfinite(v) || std::fabs(v - poly(x)) > 1e-12 * std::max(scale, std::fabs(v))) return;
            }
            poly_ = true;
        } catch (const EvalError&) {
        }
    }

    double operator()(double x) const { return poly_ ? poly(x) : expr_(x); }
    bool polynomial() const { return poly_; }
    bool constant() const { return poly_ && c1_ == 0.0 && c2_ == 0.0; }

private:
    double poly(double x) const { return c0_ + x * (c1_ + x * c2_); }

    Expr expr_;
    bool poly_ = false;
    double c0_ = 0.0, c1_ = 0.0, c2_ = 0.0;
};

/// Drift, volatility and running reward with fast evaluators over the
/// region a simulation may visit.
struct SdeCoefficients {
    FastFn mu, sigma, f;
    double alpha = 0.0;

    SdeCoefficients(const ImpulseProblem& p, double lo, double hi)
        : mu(p.diffusion.drift, lo, hi), sigma(p.diffusion.vol, lo, hi), f(p.f, lo, hi), alpha(p.diffusion.alpha) {}

    /// Constant drift and volatility: increments do not depend on the state.
    bool additive() const { return mu.constant() && sigma.constant(); }
};

} // namespace impulse
