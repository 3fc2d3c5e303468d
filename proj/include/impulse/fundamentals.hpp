#pragma once

// Fundamental solutions psi (increasing) and phi (decreasing) of
//   (sigma^2/2) u'' + mu u' - alpha u = 0,
// and the transform F = psi/phi.

#include <impulse/hermite.hpp>
#include <impulse/numerics.hpp>
#include <impulse/problem.hpp>

#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace impulse {

enum class Provenance { analytic_bm, analytic_ou, numeric };

inline const char* to_string(Provenance p) {
    switch (p) {
    case Provenance::analytic_bm: return "analytic_bm";
    case Provenance::analytic_ou: return "analytic_ou";
    case Provenance::numeric: return "numeric";
    }
    return "?";
}

struct PairValues {
    double psi;
    double phi;
    double dpsi;
    double dphi;

    double F() const { return psi / phi; }
    double dF() const { return (dpsi * phi - psi * dphi) / (phi * phi); }
};

class FundamentalModel {
public:
    virtual ~FundamentalModel() = default;
    virtual PairValues eval(double x) const = 0;
    virtual std::optional<double> F_inv(double) const { return std::nullopt; }
};

class FundamentalPair {
public:
    FundamentalPair(std::shared_ptr<const FundamentalModel> model, Provenance provenance, double c, double domain_lo,
                    double domain_hi, double F_left)
        : model_(std::move(model)), provenance_(provenance), c_(c), lo_(domain_lo), hi_(domain_hi),
          F_left_(F_left) {}

    PairValues operator()(double x) const { return model_->eval(x); }
    double psi(double x) const { return model_->eval(x).psi; }
    double phi(double x) const { return model_->eval(x).phi; }
    double F(double x) const { return model_->eval(x).F(); }
    double dF(double x) const { return model_->eval(x).dF(); }

    /// Inverse transform; closed form when the model has one, otherwise a
    /// bracketed solve on the evaluation domain.
    double F_inv(double y) const {
        if (auto x = model_->F_inv(y)) return *x;
        const double flo = F(lo_), fhi = F(hi_);
        if (!(y >= flo && y <= fhi)) throw std::domain_error("F_inv: value outside the range of F");
        auto fn = [&](double x) { return F(x) - y; };
        const double span = hi_ - lo_;
        return solve_bracketed(fn, lo_, hi_, flo - y, fhi - y, 1e-13 * std::max(1.0, span));
    }

    double norm_point() const { return c_; }
    Provenance provenance() const { return provenance_; }
    double domain_lo() const { return lo_; }
    double domain_hi() const { return hi_; }
    /// F at the left end of the evaluation domain (its limit for natural
    /// boundaries at infinity).
    double F_left() const { return F_left_; }

private:
    std::shared_ptr<const FundamentalModel> model_;
    Provenance provenance_;
    double c_;
    double lo_, hi_;
    double F_left_;
};

namespace detail {

// exp(lp (x - c)), exp(lm (x - c)) for constant coefficients; when alpha =
// mu = 0 the pair degenerates to (x - lo, 1).
class ConstantCoefficientModel final : public FundamentalModel {
public:
    ConstantCoefficientModel(double lp, double lm, double c, bool linear, double lo)
        : lp_(lp), lm_(lm), c_(c), linear_(linear), lo_(lo) {}

    PairValues eval(double x) const override {
        if (linear_) return {x - lo_, 1.0, 1.0, 0.0};
        const double p = std::exp(lp_ * (x - c_));
        const double q = std::exp(lm_ * (x - c_));
        return {p, q, lp_ * p, lm_ * q};
    }

    std::optional<double> F_inv(double y) const override {
        if (linear_) return y + lo_;
        if (!(y > 0.0)) throw std::domain_error("F_inv: value outside the range of F");
        return c_ + std::log(y) / (lp_ - lm_);
    }

private:
    double lp_, lm_, c_;
    bool linear_;
    double lo_;
};

// psi(x) = s H_nu(-(x-m) sqrt(delta)/sigma), phi(x) = s H_nu((x-m) sqrt(delta)/sigma),
// nu = -alpha/delta, s = 2^(-nu/2) (times an optional renormalization).
class OrnsteinUhlenbeckModel final : public FundamentalModel {
public:
    OrnsteinUhlenbeckModel(double delta, double m, double sigma, double alpha)
        : nu_(-alpha / delta), m_(m), k_(std::sqrt(delta) / sigma), s_psi_(std::pow(2.0, -nu_ / 2.0)),
          s_phi_(s_psi_) {}

    PairValues eval(double x) const override {
        const double w = (x - m_) * k_;
        const double hp = hermite_fn(nu_, -w), hm = hermite_fn(nu_, w);
        const double dp = 2.0 * nu_ * hermite_fn(nu_ - 1.0, -w);
        const double dm = 2.0 * nu_ * hermite_fn(nu_ - 1.0, w);
        return {s_psi_ * hp, s_phi_ * hm, -s_psi_ * k_ * dp, s_phi_ * k_ * dm};
    }

    void renormalize(double c) {
        const auto v = eval(c);
        s_psi_ /= v.psi;
        s_phi_ /= v.phi;
    }

    double nu() const { return nu_; }

private:
    double nu_, m_, k_;
    double s_psi_, s_phi_;
};

// Piecewise quintic Hermite interpolation of solutions tabulated on nodes.
// Each node stores a mantissa (u, u', u'') and a log scale, so the true
// value is exp(scale) * mantissa.
class TabulatedSolution {
public:
    std::vector<double> x, scale, u, du, d2u;

    // Value and derivative at t, relative to the reference exp(ref_scale).
    std::array<double, 2> eval(double t, double ref_scale) const {
        auto it = std::upper_bound(x.begin(), x.end(), t);
        std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
        if (i + 1 >= x.size()) i = x.size() - 2;
        const double h = x[i + 1] - x[i];
        const double s = (t - x[i]) / h;
        const double r = std::exp(scale[i + 1] - scale[i]);
        const double y0 = u[i], y1 = u[i + 1] * r;
        const double d0 = du[i] * h, d1 = du[i + 1] * r * h;
        const double c0 = d2u[i] * h * h, c1 = d2u[i + 1] * r * h * h;
        const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
        const double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
        const double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
        const double H2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5);
        const double H3 = 0.5 * (s3 - 2 * s4 + s5);
        const double H4 = -4 * s3 + 7 * s4 - 3 * s5;
        const double H5 = 10 * s3 - 15 * s4 + 6 * s5;
        const double G0 = -30 * s2 + 60 * s3 - 30 * s4;
        const double G1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
        const double G2 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4);
        const double G3 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4);
        const double G4 = -12 * s2 + 28 * s3 - 15 * s4;
        const double G5 = 30 * s2 - 60 * s3 + 30 * s4;
        const double value = H0 * y0 + H1 * d0 + H2 * c0 + H3 * c1 + H4 * d1 + H5 * y1;
        const double deriv = (G0 * y0 + G1 * d0 + G2 * c0 + G3 * c1 + G4 * d1 + G5 * y1) / h;
        const double f = std::exp(scale[i] - ref_scale);
        return {value * f, deriv * f};
    }
};

class NumericModel final : public FundamentalModel {
public:
    TabulatedSolution psi, phi;
    double psi_ref = 0.0, phi_ref = 0.0;  // log of psi(c), phi(c)

    PairValues eval(double x) const override {
        if (x < psi.x.front() || x > psi.x.back()) throw std::domain_error("fundamental pair evaluated outside its domain");
        const auto p = psi.eval(x, psi_ref);
        const auto q = phi.eval(x, phi_ref);
        return {p[0], q[0], p[1], q[1]};
    }
};

struct AffineFit {
    bool ok = false;
    double intercept = 0.0;
    double slope = 0.0;
};

// Detects an affine function by sampling; exact to rounding for catalog members.
template <class Fn>
AffineFit detect_affine(Fn&& fn, double lo, double hi) {
    AffineFit fit;
    try {
        const double f0 = fn(lo), f1 = fn(hi);
        fit.slope = (f1 - f0) / (hi - lo);
        fit.intercept = f0 - fit.slope * lo;
        double scale = std::max({std::fabs(f0), std::fabs(f1), 1.0});
        for (const double x : linspace(lo, hi, 37)) {
            const double v = fn(x);
            if (!std::isfinite(v) || std::fabs(v - (fit.intercept + fit.slope * x)) > 1e-12 * scale) return fit;
        }
        fit.ok = true;
    } catch (const EvalError&) {
    }
    return fit;
}

inline double slope_tol(double slope, double scale) { return std::fabs(slope) <= 1e-14 * std::max(1.0, scale); }

} // namespace detail

/// Catalog entry a problem's diffusion matches, if any.
enum class CatalogEntry { none, brownian, ornstein_uhlenbeck };

inline CatalogEntry catalog_entry(const ImpulseProblem& p) {
    const auto& d = p.diffusion;
    const double lo = p.settings.x_min, hi = p.settings.x_max;
    const auto mu = detail::detect_affine([&](double x) { return d.mu(x); }, lo, hi);
    const auto sig = detail::detect_affine([&](double x) { return d.sigma(x); }, lo, hi);
    if (!mu.ok || !sig.ok || !detail::slope_tol(sig.slope, std::fabs(sig.intercept))) return CatalogEntry::none;
    const double span = std::max({std::fabs(lo), std::fabs(hi), 1.0});
    if (detail::slope_tol(mu.slope * span, std::fabs(mu.intercept))) {
        if (d.alpha > 0.0 || mu.intercept == 0.0) return CatalogEntry::brownian;
        return CatalogEntry::none;
    }
    if (mu.slope < 0.0 && d.alpha > 0.0) return CatalogEntry::ornstein_uhlenbeck;
    return CatalogEntry::none;
}

inline double default_norm_point(const ImpulseProblem& p) {
    return p.settings.norm_point.value_or(0.5 * (p.settings.x_min + p.settings.x_max));
}

/// Closed-form pair for catalog diffusions: constant coefficients
/// (Brownian motion with drift) or Ornstein-Uhlenbeck mu = delta (m - x).
/// Throws SolverError when the diffusion is not in the catalog.
inline FundamentalPair analytic_fundamentals(const ImpulseProblem& p) {
    const auto& d = p.diffusion;
    const double lo = p.settings.x_min, hi = p.settings.x_max;
    const auto entry = catalog_entry(p);

    if (entry == CatalogEntry::brownian) {
        const double mu = d.mu(0.5 * (lo + hi));
        const double sig = d.sigma(0.5 * (lo + hi));
        if (d.alpha == 0.0) {
            // Solutions 1 and x; psi vanishes at the absorbing boundary.
            auto model = std::make_shared<detail::ConstantCoefficientModel>(0.0, 0.0, d.lo + 1.0, true, d.lo);
            return FundamentalPair(model, Provenance::analytic_bm, d.lo + 1.0, d.lo, inf_v, 0.0);
        }
        const double disc = std::sqrt(mu * mu + 2.0 * sig * sig * d.alpha);
        const double lp = (-mu + disc) / (sig * sig);
        const double lm = (-mu - disc) / (sig * sig);
        const double c = default_norm_point(p);
        auto model = std::make_shared<detail::ConstantCoefficientModel>(lp, lm, c, false, d.lo);
        const double F_left = std::isfinite(d.lo) ? model->eval(d.lo).F() : 0.0;
        return FundamentalPair(model, Provenance::analytic_bm, c, d.lo, d.hi, F_left);
    }
    if (entry == CatalogEntry::ornstein_uhlenbeck) {
        const auto mu = detail::detect_affine([&](double x) { return d.mu(x); }, lo, hi);
        const double delta = -mu.slope;
        const double m = mu.intercept / delta;
        const double sig = d.sigma(0.5 * (lo + hi));
        auto model = std::make_shared<detail::OrnsteinUhlenbeckModel>(delta, m, sig, d.alpha);
        double c = m;
        if (p.settings.norm_point) {
            c = *p.settings.norm_point;
            model->renormalize(c);
        }
        const double F_left = std::isfinite(d.lo) ? model->eval(d.lo).F() : 0.0;
        // Hermite quadrature stays accurate well past any practical truncation.
        const double span = hi - lo;
        const double dlo = std::isfinite(d.lo) ? d.lo : lo - 2.0 * span;
        const double dhi = std::isfinite(d.hi) ? d.hi : hi + 2.0 * span;
        return FundamentalPair(model, Provenance::analytic_ou, c, dlo, dhi, F_left);
    }
    throw SolverError("diffusion is not in the analytic catalog");
}

namespace detail {

using OdeState = std::array<double, 2>;

// Coefficients valid (finite, sigma > 0) on a sample of [a, b].
inline bool coefficients_valid(const DiffusionSpec& d, double a, double b) {
    try {
        for (const double x : linspace(a, b, 65)) {
            const double m = d.mu(x), s = d.sigma(x);
            if (!std::isfinite(m) || !(s > 0.0) || !std::isfinite(s)) return false;
        }
    } catch (const EvalError&) {
        return false;
    }
    return true;
}

// Largest extension e <= want with valid coefficients on the extended side.
// The extension may cross lo or hi; it only shapes the start of psi and phi.
inline double valid_extension(const DiffusionSpec& d, double edge, double want, int direction) {
    double e = want;
    for (int k = 0; k < 20 && e > 1e-3; ++k, e *= 0.5) {
        const double far = edge + direction * e;
        if (coefficients_valid(d, std::min(edge, far), std::max(edge, far))) return e;
    }
    return 0.0;
}

// Local exponential rates of the constant-coefficient problem frozen at x.
inline std::array<double, 2> local_rates(const DiffusionSpec& d, double x) {
    const double m = d.mu(x), s = d.sigma(x);
    const double disc = std::sqrt(m * m + 2.0 * s * s * d.alpha);
    return {(-m + disc) / (s * s), (-m - disc) / (s * s)};
}

// Integrates the ODE across `nodes` (in the given order) from the initial
// state, storing mantissa and log scale per node.
inline void integrate_table(const DiffusionSpec& d, const std::vector<double>& nodes, OdeState state, double tol,
                            bool forward, TabulatedSolution& out) {
    namespace ode = boost::numeric::odeint;
    const std::size_t n = nodes.size();
    out.x = nodes;
    out.scale.assign(n, 0.0);
    out.u.assign(n, 0.0);
    out.du.assign(n, 0.0);
    out.d2u.assign(n, 0.0);

    auto rhs = [&d](const OdeState& s, OdeState& ds, double x) {
        const double sig = d.sigma(x);
        ds[0] = s[1];
        ds[1] = 2.0 * (d.alpha * s[0] - d.mu(x) * s[1]) / (sig * sig);
    };
    auto second = [&d](double x, const OdeState& s) {
        const double sig = d.sigma(x);
        return 2.0 * (d.alpha * s[0] - d.mu(x) * s[1]) / (sig * sig);
    };

    constexpr double big = 1e100;
    const double log_big = std::log(big);
    double scale = 0.0;
    auto store = [&](std::size_t i) {
        out.scale[i] = scale;
        out.u[i] = state[0];
        out.du[i] = state[1];
        out.d2u[i] = second(nodes[i], state);
    };

    std::size_t i = forward ? 0 : n - 1;
    store(i);
    for (std::size_t step = 1; step < n; ++step) {
        const std::size_t j = forward ? i + 1 : i - 1;
        const double mag = std::max(std::fabs(state[0]), std::fabs(state[1]));
        auto stepper = ode::make_controlled(tol * mag, tol, ode::runge_kutta_dopri5<OdeState>());
        const double dx = nodes[j] - nodes[i];
        ode::integrate_adaptive(stepper, rhs, state, nodes[i], nodes[j], dx / 4.0);
        if (!std::isfinite(state[0]) || !std::isfinite(state[1]))
            throw SolverError("fundamental solution integration overflowed");
        if (std::max(std::fabs(state[0]), std::fabs(state[1])) > big) {
            state[0] /= big;
            state[1] /= big;
            scale += log_big;
        }
        i = j;
        store(i);
    }
}

// Log scale and mantissa of the tabulated value at t, for normalization.
inline double table_log_value(const TabulatedSolution& tab, double t) {
    auto it = std::upper_bound(tab.x.begin(), tab.x.end(), t);
    std::size_t i = it == tab.x.begin() ? 0 : static_cast<std::size_t>(it - tab.x.begin()) - 1;
    if (i + 1 >= tab.x.size()) i = tab.x.size() - 2;
    const auto v = tab.eval(t, tab.scale[i]);
    if (!(v[0] > 0.0)) throw SolverError("fundamental solution is not positive at the normalization point");
    return tab.scale[i] + std::log(v[0]);
}

} // namespace detail

/// Fundamental pair by integrating the ODE in each solution's stable
/// direction: psi forward from the left, phi backward from the right. Each
/// start uses the local exponential rate of the frozen-coefficient problem
/// at a point extended past the truncation, so the unwanted solution decays
/// relative to the wanted one. When alpha = 0 (absorbing problems), psi
/// starts killed at lo. Normalized so psi(c) = phi(c) = 1.
inline FundamentalPair numeric_fundamentals(const ImpulseProblem& p, std::optional<double> c_opt = std::nullopt,
                                            std::optional<double> tol_opt = std::nullopt) {
    const auto& d = p.diffusion;
    const double x_min = p.settings.x_min, x_max = p.settings.x_max;
    const double c = c_opt.value_or(default_norm_point(p));
    const double tol = tol_opt.value_or(p.settings.ode_tol);
    if (!(c > x_min && c < x_max)) throw SolverError("normalization point must be interior");
    const double width = x_max - x_min;
    const double want = std::max(2.0, width);

    const bool killed_left = d.alpha == 0.0;
    double left = x_min, right = x_max;
    if (killed_left) {
        left = d.lo;
        if (!detail::coefficients_valid(d, left, x_min)) throw SolverError("coefficients invalid near lo");
    } else {
        left = x_min - detail::valid_extension(d, x_min, want, -1);
    }
    right = x_max + detail::valid_extension(d, x_max, want, +1);

    // Node spacing resolves the fastest local exponential rate.
    double lam = 0.0;
    for (const double x : linspace(left, right, 257)) {
        const auto r = detail::local_rates(d, x);
        lam = std::max({lam, std::fabs(r[0]), std::fabs(r[1])});
    }
    const double h = std::min(width / 2048.0, lam > 0.0 ? 0.05 / lam : width / 2048.0);
    const std::size_t n = static_cast<std::size_t>(std::ceil((right - left) / h)) + 1;
    if (n > 2000000) throw SolverError("fundamental solution grid too fine");
    const auto nodes = linspace(left, right, n);

    auto model = std::make_shared<detail::NumericModel>();
    detail::OdeState start_psi = killed_left ? detail::OdeState{0.0, 1.0}
                                             : detail::OdeState{1.0, detail::local_rates(d, left)[0]};
    detail::integrate_table(d, nodes, start_psi, tol, true, model->psi);
    detail::OdeState start_phi = {1.0, detail::local_rates(d, right)[1]};
    detail::integrate_table(d, nodes, start_phi, tol, false, model->phi);

    model->psi_ref = detail::table_log_value(model->psi, c);
    model->phi_ref = detail::table_log_value(model->phi, c);

    const double F_left = model->eval(left).F();
    return FundamentalPair(model, Provenance::numeric, c, left, right, F_left);
}

/// Pair selected per the problem settings: the catalog when it applies
/// (or is requested), numeric integration otherwise.
inline FundamentalPair make_fundamentals(const ImpulseProblem& p) {
    switch (p.settings.fundamentals) {
    case FundamentalsChoice::analytic: return analytic_fundamentals(p);
    case FundamentalsChoice::numeric: return numeric_fundamentals(p);
    case FundamentalsChoice::automatic:
        if (catalog_entry(p) != CatalogEntry::none) return analytic_fundamentals(p);
        return numeric_fundamentals(p);
    }
    throw SolverError("unknown fundamentals choice");
}

} // namespace impulse
