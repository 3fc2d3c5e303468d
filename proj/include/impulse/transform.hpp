#pragma once

// Resolvent g, shifted reward Kbar, transformed rewards and boundary data.

#include <impulse/fundamentals.hpp>
#include <impulse/numerics.hpp>
#include <impulse/parallel.hpp>
#include <impulse/problem.hpp>
#include <impulse/sde.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace impulse {

/// Expected discounted running reward of the uncontrolled diffusion.
class Resolvent {
public:
    enum class Method { zero, polynomial, quadrature };

    struct Table {
        std::vector<double> x, IL, IR, A, B;
    };

    static Resolvent zero() { return Resolvent(); }

    static Resolvent polynomial(double c2, double c1, double c0) {
        Resolvent r;
        r.method_ = Method::polynomial;
        r.c_ = {c0, c1, c2};
        return r;
    }

    static Resolvent quadrature(std::shared_ptr<const Table> table, FundamentalPair pair) {
        Resolvent r;
        r.method_ = Method::quadrature;
        r.table_ = std::move(table);
        r.pair_ = std::make_shared<FundamentalPair>(std::move(pair));
        return r;
    }

    double operator()(double x) const {
        switch (method_) {
        case Method::zero: return 0.0;
        case Method::polynomial: return c_[0] + x * (c_[1] + x * c_[2]);
        case Method::quadrature: {
            const auto [il, ir] = integrals(x);
            const auto v = (*pair_)(x);
            return v.phi * il + v.psi * ir;
        }
        }
        return nan_v;
    }

    double deriv(double x) const {
        switch (method_) {
        case Method::zero: return 0.0;
        case Method::polynomial: return c_[1] + 2.0 * x * c_[2];
        case Method::quadrature: {
            const auto [il, ir] = integrals(x);
            const auto v = (*pair_)(x);
            return v.dphi * il + v.dpsi * ir;
        }
        }
        return nan_v;
    }

    Method method() const { return method_; }

    const char* method_name() const {
        switch (method_) {
        case Method::zero: return "zero";
        case Method::polynomial: return "polynomial";
        case Method::quadrature: return "quadrature";
        }
        return "?";
    }

private:
    // Cubic Hermite interpolation of the cumulative integrals, whose
    // derivatives are the tabulated integrands.
    std::pair<double, double> integrals(double x) const {
        const auto& t = *table_;
        if (x < t.x.front() || x > t.x.back()) throw std::domain_error("resolvent evaluated outside its table");
        auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
        std::size_t i = it == t.x.begin() ? 0 : static_cast<std::size_t>(it - t.x.begin()) - 1;
        if (i + 1 >= t.x.size()) i = t.x.size() - 2;
        const double h = t.x[i + 1] - t.x[i];
        const double s = (x - t.x[i]) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        const double il = h00 * t.IL[i] + h10 * h * t.A[i] + h01 * t.IL[i + 1] + h11 * h * t.A[i + 1];
        const double ir = h00 * t.IR[i] - h10 * h * t.B[i] + h01 * t.IR[i + 1] - h11 * h * t.B[i + 1];
        return {il, ir};
    }

    Method method_ = Method::zero;
    std::array<double, 3> c_{0.0, 0.0, 0.0};
    std::shared_ptr<const Table> table_;
    std::shared_ptr<const FundamentalPair> pair_;
};

namespace detail {

// Fourth-order cumulative integral of samples on a uniform grid.
inline std::vector<double> cumulative_integral(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    std::vector<double> out(n, 0.0);
    if (n < 4) {
        for (std::size_t i = 1; i < n; ++i) out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
        return out;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        double seg;
        if (i == 0) seg = h / 24.0 * (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3]);
        else if (i + 2 == n) seg = h / 24.0 * (f[n - 4] - 5 * f[n - 3] + 19 * f[n - 2] + 9 * f[n - 1]);
        else seg = h / 24.0 * (-f[i - 1] + 13 * f[i] + 13 * f[i + 1] - f[i + 2]);
        out[i + 1] = out[i] + seg;
    }
    return out;
}

inline bool all_zero(const Expr& f, const std::vector<double>& xs) {
    for (const double x : xs)
        if (f(x) != 0.0) return false;
    return true;
}

} // namespace detail

/// Resolvent of f. Closed forms: f = 0, and polynomial f of degree <= 2
/// under constant volatility and affine drift (Brownian motion with drift,
/// Ornstein-Uhlenbeck). Otherwise the Green's function of (A - alpha)
/// built from the pair,
///   g(x) = phi(x) int_L^x psi f rho + psi(x) int_x^U phi f rho,
///   rho = 2 / (sigma^2 (psi' phi - psi phi')),
/// by fourth-order cumulative quadrature on the pair's domain.
inline Resolvent compute_g(const ImpulseProblem& p, const FundamentalPair& pair) {
    const auto& d = p.diffusion;
    const double lo = p.settings.x_min, hi = p.settings.x_max;
    const auto grid = diagnostic_grid(p);
    if (detail::all_zero(p.f, grid)) return Resolvent::zero();
    if (d.alpha == 0.0) throw SolverError("alpha = 0 requires f = 0");

    const FastFn fpoly(p.f, lo, hi);
    const auto mu = detail::detect_affine([&](double x) { return d.mu(x); }, lo, hi);
    const auto sig = detail::detect_affine([&](double x) { return d.sigma(x); }, lo, hi);
    if (fpoly.polynomial() && mu.ok && sig.ok && detail::slope_tol(sig.slope, std::fabs(sig.intercept)) &&
        d.alpha - 2.0 * mu.slope > 0.0) {
        // f = q2 x^2 + q1 x + q0 recovered from three samples.
        const double x0 = lo, x1 = 0.5 * (lo + hi), x2 = hi;
        const double f0 = fpoly(x0), f1 = fpoly(x1), f2 = fpoly(x2);
        const double hh = 0.5 * (hi - lo);
        const double q2 = (f2 - 2 * f1 + f0) / (2 * hh * hh);
        const double q1 = (f1 - f0) / hh - q2 * (x0 + x1);
        const double q0 = f0 - q1 * x0 - q2 * x0 * x0;
        const double m0 = mu.intercept, m1 = mu.slope, s2 = sig.intercept * sig.intercept, a = d.alpha;
        const double A = q2 / (a - 2.0 * m1);
        const double B = (q1 + 2.0 * m0 * A) / (a - m1);
        const double C = (q0 + s2 * A + m0 * B) / a;
        return Resolvent::polynomial(A, B, C);
    }

    const double width = hi - lo;
    const double ext = std::max(2.0, width);
    double L = std::max(pair.domain_lo(), lo - ext);
    double U = std::min(pair.domain_hi(), hi + ext);
    const auto n = static_cast<std::size_t>(std::max(64, p.settings.resolvent_nodes));
    auto table = std::make_shared<Resolvent::Table>();
    table->x = linspace(L, U, n);
    table->A.resize(n);
    table->B.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = table->x[i];
        const auto v = pair(x);
        const double s = d.sigma(x);
        const double w = v.dpsi * v.phi - v.psi * v.dphi;
        const double rho = 2.0 / (s * s * w);
        const double fx = p.f(x);
        table->A[i] = v.psi * fx * rho;
        table->B[i] = v.phi * fx * rho;
    }
    const double h = (U - L) / static_cast<double>(n - 1);
    table->IL = detail::cumulative_integral(table->A, h);
    const std::vector<double> Brev(table->B.rbegin(), table->B.rend());
    const auto IRrev = detail::cumulative_integral(Brev, h);
    table->IR.assign(IRrev.rbegin(), IRrev.rend());
    return Resolvent::quadrature(table, pair);
}

/// Transformed-space data for one problem; immutable and shareable.
class TransformContext {
public:
    std::shared_ptr<const ImpulseProblem> problem;
    FundamentalPair pair;
    Resolvent g;
    double F_lo = 0.0;
    double D = 0.0;

    TransformContext(std::shared_ptr<const ImpulseProblem> prob, FundamentalPair fp, Resolvent res)
        : problem(std::move(prob)), pair(std::move(fp)), g(std::move(res)) {}

    bool absorbing() const { return problem->absorbing(); }
    double x_min() const { return problem->settings.x_min; }
    double x_max() const { return problem->settings.x_max; }
    double lo() const { return problem->diffusion.lo; }

    double K(double x, double y) const { return problem->K(x, y); }

    /// dK/dx by central differences; one-sided when x - h would cross y,
    /// where K may be undefined.
    double dK_dx(double x, double y) const {
        const double h = fd_step(x);
        if (x - h < y)
            return (-3.0 * problem->K(x, y) + 4.0 * problem->K(x + h, y) - problem->K(x + 2.0 * h, y)) / (2.0 * h);
        return (problem->K(x + h, y) - problem->K(x - h, y)) / (2.0 * h);
    }

    double kbar(double x, double y) const { return problem->K(x, y) - g(x) + g(y); }

    double dkbar_dx(double x, double y) const { return dK_dx(x, y) - g.deriv(x); }

    /// psi - F_lo phi: the pair member vanishing at the transformed boundary.
    double psi_hat(const PairValues& v) const { return v.psi - F_lo * v.phi; }
    double dpsi_hat(const PairValues& v) const { return v.dpsi - F_lo * v.dphi; }

    /// (A - alpha) h at x by central differences.
    template <class Fn>
    double generator(Fn&& h, double x) const {
        const auto& d = problem->diffusion;
        const double s = d.sigma(x);
        const double h1 = fd_step(x);
        const double h2 = std::max(1e-4, 1e-4 * std::fabs(x));
        return 0.5 * s * s * second_diff(h, x, h2) + d.mu(x) * central_diff(h, x, h1) - d.alpha * h(x);
    }
};

using ContextPtr = std::shared_ptr<const TransformContext>;

struct BoundaryData {
    double F_lo = 0.0;
    double D = 0.0;
    bool converged = true;
};

/// Boundary point of the transformed problem. Absorbing: (F(lo), (P -
/// g(lo))/phi(lo)). Natural: (F at the left end, l_c) with l_c the limit of
/// K(x,x)^+/phi(x) along probes toward the left boundary.
inline BoundaryData boundary_data(const TransformContext& ctx) {
    BoundaryData out;
    if (ctx.absorbing()) {
        const double lo = ctx.lo();
        const auto v = ctx.pair(lo);
        out.F_lo = v.F();
        out.D = (ctx.problem->penalty() - ctx.g(lo)) / v.phi;
        return out;
    }
    out.F_lo = ctx.pair.F_left();
    const double width = ctx.x_max() - ctx.x_min();
    const double reach = std::isfinite(ctx.pair.domain_lo()) ? ctx.x_min() - ctx.pair.domain_lo()
                                                             : 32.0 * std::max(1.0, width);
    std::vector<double> est;
    for (int k = 0; k < 12; ++k) {
        const double x = ctx.x_min() - reach * std::ldexp(1.0, k - 11);
        try {
            const double kxx = ctx.K(x, x);
            const double r = std::max(kxx, 0.0) / ctx.pair.phi(x);
            if (std::isfinite(r)) est.push_back(r);
        } catch (const std::exception&) {
        }
    }
    if (est.size() < 3) {
        out.converged = false;
        return out;
    }
    const double a = est[est.size() - 3], b = est[est.size() - 2], c = est.back();
    const double top = std::max({a, b, c});
    out.converged = top == 0.0 || (std::max({a, b, c}) - std::min({a, b, c})) <= 1e-6 * top;
    if (!out.converged && c > b && b > a) throw SolverError("boundary limit l_c diverges; problem is ill-posed");
    out.D = top;
    return out;
}

/// Builds pair, resolvent and boundary data for a validated problem.
inline ContextPtr make_context(const ImpulseProblem& problem) {
    auto prob = std::make_shared<const ImpulseProblem>(problem);
    FundamentalPair pair = make_fundamentals(*prob);
    Resolvent g = compute_g(*prob, pair);
    auto ctx = std::make_shared<TransformContext>(prob, pair, g);
    const auto bd = boundary_data(*ctx);
    ctx->F_lo = bd.F_lo;
    ctx->D = bd.D;
    return ctx;
}

/// R(y, a) = Kbar(x, a)/phi(x) at x = F^{-1}(y) for x > a. For x <= a no
/// downward move to a exists; the stay-put reward K(x, x)/phi(x) is shown
/// instead. In absorbing mode R is pinned to D at F_lo.
inline std::function<double(double)> transformed_reward(ContextPtr ctx, double a) {
    return [ctx, a](double y) {
        if (ctx->absorbing() && y <= ctx->F_lo) return ctx->D;
        const double x = ctx->pair.F_inv(y);
        const double phi = ctx->pair.phi(x);
        if (x > a) return ctx->kbar(x, a) / phi;
        return ctx->K(x, x) / phi;
    };
}

struct FinitenessReport {
    bool finite = true;
    double q = 0.0;
    bool converged = false;
    std::vector<double> y;
    std::vector<double> quotient;
};

/// Left difference quotients of H = (Kbar(., a)/phi) o F^{-1} along a
/// geometric sequence (ratio 2) of 12 transformed points toward the right
/// boundary. Declared infinite when a quotient is not finite or the
/// quotients grow monotonically by three decades.
inline FinitenessReport finiteness_check(const TransformContext& ctx, double a) {
    FinitenessReport out;
    const double Fa = std::max(ctx.pair.F(a), ctx.F_lo);
    const double span = ctx.pair.F(ctx.x_max()) - ctx.F_lo;
    auto H = [&](double y) {
        const double x = ctx.pair.F_inv(y);
        return ctx.kbar(x, a) / ctx.pair.phi(x);
    };
    double prev_y = nan_v, prev_h = nan_v;
    for (int k = 0; k < 12; ++k) {
        const double y = ctx.F_lo + span * std::ldexp(1.0, k - 8);
        if (y <= Fa) continue;
        double h;
        try {
            h = H(y);
        } catch (const std::exception&) {
            out.finite = false;
            break;
        }
        if (!std::isfinite(h)) {
            out.finite = false;
            break;
        }
        if (std::isfinite(prev_y)) {
            out.y.push_back(y);
            out.quotient.push_back((h - prev_h) / (y - prev_y));
        }
        prev_y = y;
        prev_h = h;
    }
    const auto& qv = out.quotient;
    if (out.finite && qv.size() >= 2) {
        // Monotone growth across the probes by a factor of 1000.
        bool monotone = true;
        for (std::size_t i = 1; i < qv.size(); ++i) monotone = monotone && qv[i] > qv[i - 1] && qv[i] > 0.0;
        if (monotone && qv.front() > 0.0 && qv.back() >= 1000.0 * qv.front()) out.finite = false;
    }
    if (out.finite && !qv.empty()) {
        const std::size_t n = qv.size();
        const std::size_t from = n >= 3 ? n - 3 : 0;
        double lo = inf_v, hi = -inf_v;
        for (std::size_t i = from; i < n; ++i) {
            lo = std::min(lo, qv[i]);
            hi = std::max(hi, qv[i]);
        }
        out.q = hi;
        out.converged = n >= 3 && (hi - lo) <= 1e-6 * std::max(std::fabs(hi), std::fabs(lo));
    }
    if (!out.finite) out.q = inf_v;
    return out;
}

struct ConcavityProfile {
    std::vector<double> x;
    std::vector<double> value;  // (A - alpha) h
    std::vector<int> sign;
    std::vector<double> changes;  // x where the sign flips
};

/// Sign of (A - alpha) h on a uniform grid of the truncated interval. By
/// the change of variables y = F(x), this is the sign of the second
/// derivative of (h/phi) o F^{-1}. Sign changes are refined by bisection.
template <class Fn>
ConcavityProfile concavity_profile(const TransformContext& ctx, Fn&& h, int n = 256, double zero_tol = 1e-9,
                                   double from = nan_v, double to = nan_v) {
    ConcavityProfile out;
    const double lo = std::isnan(from) ? ctx.x_min() : from;
    const double hi = std::isnan(to) ? ctx.x_max() : to;
    const double margin = 1e-3 * (hi - lo);
    out.x = linspace(lo + margin, hi - margin, static_cast<std::size_t>(n));
    auto gen = [&](double x) { return ctx.generator(h, x); };
    for (const double x : out.x) {
        const double v = gen(x);
        out.value.push_back(v);
        out.sign.push_back(std::fabs(v) <= zero_tol ? 0 : (v > 0 ? 1 : -1));
    }
    int last = 0;
    std::size_t last_i = 0;
    for (std::size_t i = 0; i < out.x.size(); ++i) {
        if (out.sign[i] == 0) continue;
        if (last != 0 && out.sign[i] != last) {
            double l = out.x[last_i], r = out.x[i];
            for (int it = 0; it < 60 && r - l > 1e-10 * std::max(1.0, std::fabs(l)); ++it) {
                const double m = 0.5 * (l + r);
                if ((gen(m) > 0) == (last > 0)) l = m;
                else r = m;
            }
            out.changes.push_back(0.5 * (l + r));
        }
        last = out.sign[i];
        last_i = i;
    }
    return out;
}

struct ResolventCheck {
    double x;
    double g;
    double estimate;
    double std_error;
    bool ok;
};

/// Monte Carlo estimate of E^x int_0^T e^{-alpha s} f(X_s) ds for the
/// uncontrolled diffusion (trapezoidal in time, T with e^{-alpha T} =
/// 1e-6), compared with g at each probe to 3 standard errors plus the
/// horizon tail.
inline std::vector<ResolventCheck> validate_resolvent(const TransformContext& ctx, const std::vector<double>& probes,
                                                      long n_paths, double dt, std::uint64_t seed) {
    const auto& p = *ctx.problem;
    const double alpha = p.diffusion.alpha;
    if (!(alpha > 0.0)) throw SolverError("resolvent validation requires alpha > 0");
    const double T = std::log(1e6) / alpha;
    const auto steps = static_cast<long>(std::ceil(T / dt));
    const double width = ctx.x_max() - ctx.x_min();
    SdeCoefficients co(p, ctx.x_min() - 10.0 * width, ctx.x_max() + 10.0 * width);
    const double disc = std::exp(-alpha * dt), sq = std::sqrt(dt);

    std::vector<ResolventCheck> out;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        std::vector<double> payoff(static_cast<std::size_t>(n_paths));
        parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t i) {
            PathRng rng(seed + k, i);
            double x = probes[k], w = 1.0, acc = 0.0, fprev = co.f(x);
            for (long s = 0; s < steps; ++s) {
                x += co.mu(x) * dt + co.sigma(x) * sq * rng.normal();
                const double fx = co.f(x);
                acc += 0.5 * dt * w * (fprev + disc * fx);
                w *= disc;
                fprev = fx;
            }
            payoff[i] = acc;
        });
        const double mean = pairwise_sum(payoff) / static_cast<double>(n_paths);
        std::vector<double> sq_dev(payoff.size());
        for (std::size_t i = 0; i < payoff.size(); ++i) sq_dev[i] = (payoff[i] - mean) * (payoff[i] - mean);
        const double var = pairwise_sum(sq_dev) / static_cast<double>(n_paths - 1);
        const double se = std::sqrt(var / static_cast<double>(n_paths));
        const double gx = ctx.g(probes[k]);
        const double tail = 1e-6 * std::fabs(gx);
        out.push_back({probes[k], gx, mean, se, std::fabs(mean - gx) <= 3.0 * se + tail});
    }
    return out;
}

} // namespace impulse
