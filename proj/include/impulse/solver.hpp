#pragma once

// Direct method: for each target a, the smallest line through the boundary
// point (F_lo, D) majorizing the shifted reward has slope
//
//   beta(a) = sup_{b > a} [Kbar(b, a) - D (phi(b) - phi(a))] / [psi^(b) - psi^(a)],
//
// psi^ = psi - F_lo phi, attained at the trigger b(a). The optimal policy
// maximizes beta(a) over a.

#include <impulse/numerics.hpp>
#include <impulse/parallel.hpp>
#include <impulse/policy.hpp>
#include <impulse/transform.hpp>

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace impulse {

enum class StageStatus { ok, no_intervention, no_tangency };

inline const char* to_string(StageStatus s) {
    switch (s) {
    case StageStatus::ok: return "ok";
    case StageStatus::no_intervention: return "no_intervention";
    case StageStatus::no_tangency: return "no_tangency";
    }
    return "?";
}

struct TangencyRoot {
    double b;
    double beta;
};

struct StageResult {
    double a = nan_v;
    double b = nan_v;
    double beta = nan_v;
    double gamma = nan_v;
    double residual = nan_v;  // relative tangency residual at b
    int n_roots = 0;
    bool multi_trigger = false;
    std::vector<TangencyRoot> roots;
    StageStatus status = StageStatus::no_tangency;

    bool ok() const { return status == StageStatus::ok; }
};

namespace detail {

inline constexpr double root_xtol = 1e-9;
inline constexpr double tie_rel = 1e-4;
inline constexpr int tangency_scan = 400;

// Pair and resolvent sampled at the trigger candidates of a stage.
struct Sample {
    double x;
    PairValues v;
    double g;
    double dg;
};

inline Sample make_sample(const TransformContext& ctx, double x) {
    return {x, ctx.pair(x), ctx.g(x), ctx.g.deriv(x)};
}

inline std::vector<Sample> make_samples(const TransformContext& ctx, const std::vector<double>& xs) {
    std::vector<Sample> nodes(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) { nodes[i] = make_sample(ctx, xs[i]); });
    return nodes;
}

// Everything about a fixed target a that the trigger search needs.
struct Stage {
    const TransformContext& ctx;
    double a;
    Sample na;

    double psi_hat_a() const { return ctx.psi_hat(na.v); }

    double numerator(const Sample& n) const {
        return ctx.K(n.x, a) - n.g + na.g - ctx.D * (n.v.phi - na.v.phi);
    }

    double slope(const Sample& n) const { return numerator(n) / (ctx.psi_hat(n.v) - psi_hat_a()); }

    // d beta(a, b)/db up to the positive factor 1/(psi^(b) - psi^(a)).
    double slope_derivative(const Sample& n, double* rel = nullptr) const {
        const double dn = ctx.dK_dx(n.x, a) - n.dg - ctx.D * n.v.dphi;
        const double term = slope(n) * ctx.dpsi_hat(n.v);
        if (rel) *rel = std::fabs(dn - term) / std::max(std::fabs(dn) + std::fabs(term), 1e-300);
        return dn - term;
    }
};

// Trigger search over precomputed candidate nodes strictly above a.
inline StageResult tangency_on_nodes(const TransformContext& ctx, double a, const std::vector<Sample>& nodes) {
    StageResult out;
    out.a = a;
    const Stage st{ctx, a, make_sample(ctx, a)};

    std::vector<const Sample*> cand;
    for (const auto& n : nodes)
        if (n.x > a + 1e-12 * std::max(1.0, std::fabs(a))) cand.push_back(&n);
    if (cand.size() < 3) return out;

    double best_k = -inf_v;
    for (const auto* n : cand) best_k = std::max(best_k, ctx.K(n->x, a) - n->g + st.na.g);
    if (!(best_k > 0.0)) {
        out.status = StageStatus::no_intervention;
        return out;
    }

    std::vector<double> d(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) d[i] = st.slope_derivative(*cand[i]);

    for (std::size_t i = 0; i + 1 < cand.size(); ++i) {
        if (!(d[i] > 0.0 && d[i + 1] <= 0.0)) continue;
        auto fn = [&](double b) { return st.slope_derivative(make_sample(ctx, b)); };
        const double b = solve_bracketed(fn, cand[i]->x, cand[i + 1]->x, d[i], d[i + 1], root_xtol);
        out.roots.push_back({b, st.slope(make_sample(ctx, b))});
    }
    out.n_roots = static_cast<int>(out.roots.size());
    if (out.roots.empty()) return out;

    const auto best = std::max_element(out.roots.begin(), out.roots.end(),
                                       [](const auto& l, const auto& r) { return l.beta < r.beta; });
    // A supremum approached at the right edge means no interior tangency.
    const double edge_beta = st.slope(*cand.back());
    if (d.back() > 0.0 && edge_beta > best->beta) return out;

    int ties = 0;
    for (const auto& r : out.roots)
        if (std::fabs(r.beta - best->beta) <= tie_rel * std::fabs(best->beta)) ++ties;
    out.multi_trigger = ties >= 2;
    out.b = best->b;
    out.beta = best->beta;
    out.gamma = out.beta * st.psi_hat_a() + ctx.D * st.na.v.phi;
    st.slope_derivative(make_sample(ctx, out.b), &out.residual);
    out.status = StageStatus::ok;
    return out;
}

} // namespace detail

/// Trigger b(a) and slope beta(a) for target a: interior local maxima of
/// b -> beta(a, b) are bracketed on a uniform scan of (a, x_max] and refined
/// to 1e-9 in x; the largest is returned, with all roots listed.
inline StageResult tangency_solve(const TransformContext& ctx, double a) {
    const double hi = ctx.x_max();
    if (!(a < hi)) {
        StageResult out;
        out.a = a;
        return out;
    }
    std::vector<double> xs;
    for (int i = 1; i <= detail::tangency_scan; ++i) xs.push_back(a + (hi - a) * i / detail::tangency_scan);
    std::vector<detail::Sample> nodes;
    for (const double x : xs) nodes.push_back(detail::make_sample(ctx, x));
    return detail::tangency_on_nodes(ctx, a, nodes);
}

struct GammaResult {
    StageStatus status = StageStatus::ok;
    double gamma = nan_v;
    double residual = nan_v;  // |V(gamma) - gamma|
    int evaluations = 0;
};

/// Optimal stopping value at a for the reward Kbar(x, a) + gamma, x > a,
/// with the boundary point (F_lo, D): the smallest line through the
/// boundary point majorizing the reward, or immediate stopping.
class StoppingValue {
public:
    StoppingValue(const TransformContext& ctx, double a) : ctx_(ctx), a_(a), na_(detail::make_sample(ctx, a)) {
        const double hi = ctx.x_max();
        for (int i = 1; i <= detail::tangency_scan; ++i) {
            const double x = a + (hi - a) * i / detail::tangency_scan;
            nodes_.push_back(detail::make_sample(ctx, x));
        }
    }

    /// sup over x > a of Kbar(x, a) + gamma, on the scan nodes.
    double max_reward() const {
        double best = -inf_v;
        for (const auto& n : nodes_) best = std::max(best, kbar(n));
        return best;
    }

    double operator()(double gamma) const {
        auto ratio = [&](const detail::Sample& n) {
            return (kbar(n) + gamma - ctx_.D * n.v.phi) / ctx_.psi_hat(n.v);
        };
        std::size_t arg = 0;
        double s = -inf_v;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const double r = ratio(nodes_[i]);
            if (r > s) {
                s = r;
                arg = i;
            }
        }
        // Refine the supremum between the neighbouring scan nodes.
        const double l = arg == 0 ? a_ : nodes_[arg - 1].x;
        const double r = nodes_[std::min(arg + 1, nodes_.size() - 1)].x;
        auto neg = [&](double x) { return -ratio(detail::make_sample(ctx_, x)); };
        const auto [xm, fm] = boost::math::tools::brent_find_minima(neg, std::max(l, a_ + 1e-12), r, 40);
        (void)xm;
        s = std::max(s, -fm);
        const double line = na_.v.phi * ctx_.D + ctx_.psi_hat(na_.v) * s;
        return std::max(line, ctx_.K(a_, a_) + gamma);
    }

private:
    double kbar(const detail::Sample& n) const { return ctx_.K(n.x, a_) - n.g + na_.g; }

    const TransformContext& ctx_;
    double a_;
    detail::Sample na_;
    std::vector<detail::Sample> nodes_;
};

/// Fixed point gamma = V^gamma_a(a) by bracketed root finding on the
/// nonincreasing map gamma -> V^gamma_a(a) - gamma.
inline GammaResult solve_gamma(const TransformContext& ctx, double a) {
    GammaResult out;
    const StoppingValue V(ctx, a);
    if (!(V.max_reward() > 0.0)) {
        out.status = StageStatus::no_intervention;
        return out;
    }
    auto m = [&](double g) {
        ++out.evaluations;
        return V(g) - g;
    };
    double lo = 0.0, hi = 1.0;
    double mlo = m(lo);
    for (int k = 0; mlo < 0.0 && k < 200; ++k) {
        hi = lo;
        lo = lo == 0.0 ? -1.0 : 2.0 * lo;
        mlo = m(lo);
    }
    double mhi = m(hi);
    for (int k = 0; mhi > 0.0 && k < 200; ++k) {
        lo = hi;
        mlo = mhi;
        hi *= 2.0;
        mhi = m(hi);
    }
    if (!(mlo >= 0.0 && mhi <= 0.0)) throw SolverError("gamma fixed point not bracketed");
    const double g = solve_bracketed(m, lo, hi, mlo, mhi, 1e-13 * std::max(1.0, std::fabs(hi)));
    out.gamma = g;
    out.residual = std::fabs(V(g) - g);
    return out;
}

struct SlopeResult {
    BandPolicy policy;
    std::vector<StageResult> scan;     // coarse scan over a, sorted by a
    std::vector<StageResult> refined;  // refined local maximizers
    bool multi_trigger = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> target_grid(const TransformContext& ctx) {
    const int n = ctx.problem->settings.scan_points;
    const int n_geo = n / 4, n_uni = n - n_geo;
    const double lo = ctx.x_min(), hi = ctx.x_max(), w = hi - lo;
    const double excl = 1e-4 * std::max(1.0, w);
    std::vector<double> as;
    for (int i = 0; i < n_uni; ++i) as.push_back(lo + w * (i + 0.5) / n_uni);
    for (int i = 0; i < n_geo; ++i) {
        const double t = static_cast<double>(i) / std::max(1, n_geo - 1);
        as.push_back(lo + 2.0 * excl * std::pow(0.05 * w / excl, t));
    }
    std::sort(as.begin(), as.end());
    as.erase(std::remove_if(as.begin(), as.end(), [&](double a) { return a <= lo + excl || a >= hi; }), as.end());
    as.erase(std::unique(as.begin(), as.end()), as.end());
    return as;
}

} // namespace detail

/// Scans targets, refines each local maximizer of beta(a) with Brent's
/// method, and keeps every maximizer within 1e-4 relative of the best as a
/// band. An empty policy is returned when no target yields a positive slope.
inline SlopeResult maximize_slope(const TransformContext& ctx) {
    SlopeResult out;
    out.policy.D = ctx.D;
    out.policy.F_lo = ctx.F_lo;

    // Shared trigger candidates: one uniform grid, reused for every target.
    const double lo = ctx.x_min(), hi = ctx.x_max();
    const int n_nodes = 4 * detail::tangency_scan;
    std::vector<double> xs;
    for (int i = 1; i <= n_nodes; ++i) xs.push_back(lo + (hi - lo) * i / n_nodes);
    const auto nodes = detail::make_samples(ctx, xs);

    const auto as = detail::target_grid(ctx);
    out.scan.resize(as.size());
    parallel_for(as.size(), [&](std::size_t i) { out.scan[i] = detail::tangency_on_nodes(ctx, as[i], nodes); });

    bool any_ok = false, all_none = true;
    for (const auto& s : out.scan) {
        any_ok = any_ok || s.ok();
        all_none = all_none && s.status == StageStatus::no_intervention;
    }
    if (all_none) return out;
    if (!any_ok) throw SolverError("no tangency found for any target in the truncated domain");

    // Local maxima of beta over the scan (ok stages only).
    std::vector<std::size_t> ok_idx;
    for (std::size_t i = 0; i < out.scan.size(); ++i)
        if (out.scan[i].ok()) ok_idx.push_back(i);
    std::vector<std::pair<double, double>> brackets;
    for (std::size_t k = 0; k < ok_idx.size(); ++k) {
        const double bk = out.scan[ok_idx[k]].beta;
        const bool left = k == 0 || out.scan[ok_idx[k - 1]].beta <= bk;
        const bool right = k + 1 == ok_idx.size() || out.scan[ok_idx[k + 1]].beta < bk;
        if (!(left && right)) continue;
        const std::size_t i = ok_idx[k];
        const double l = i == 0 ? as[i] : as[i - 1];
        const double r = i + 1 == as.size() ? as[i] : as[i + 1];
        brackets.emplace_back(l, r);
    }

    out.refined.resize(brackets.size());
    parallel_for(brackets.size(), [&](std::size_t k) {
        auto neg = [&](double a) {
            const auto s = tangency_solve(ctx, a);
            return s.ok() ? -s.beta : inf_v;
        };
        const auto [l, r] = brackets[k];
        const auto [am, fm] = boost::math::tools::brent_find_minima(neg, l, r, 30);
        (void)fm;
        out.refined[k] = tangency_solve(ctx, am);
    });
    // A refinement can only fail at a bracket edge; fall back to the scan.
    for (std::size_t k = 0; k < out.refined.size(); ++k) {
        if (out.refined[k].ok()) continue;
        for (const auto& s : out.scan)
            if (s.ok() && s.a >= brackets[k].first && s.a <= brackets[k].second &&
                (!out.refined[k].ok() || s.beta > out.refined[k].beta))
                out.refined[k] = s;
    }

    double best = -inf_v;
    for (const auto& s : out.refined)
        if (s.ok()) best = std::max(best, s.beta);
    for (const auto& s : out.scan)
        if (s.ok() && s.beta > best * (1.0 + detail::tie_rel) && s.beta > best)
            out.warnings.push_back("scan point a = " + std::to_string(s.a) + " exceeds the refined maximum");
    if (!(best > 0.0)) return out;

    std::vector<StageResult> keep;
    for (const auto& s : out.refined)
        if (s.ok() && s.beta >= best - detail::tie_rel * std::fabs(best)) keep.push_back(s);
    std::sort(keep.begin(), keep.end(), [](const auto& l, const auto& r) { return l.a < r.a; });
    std::vector<StageResult> bands;
    for (const auto& s : keep) {
        if (!bands.empty() && std::fabs(s.a - bands.back().a) <= 1e-6 * std::max(1.0, std::fabs(s.a))) {
            if (s.beta > bands.back().beta) bands.back() = s;
            continue;
        }
        if (!bands.empty() && s.b > 0.0 && bands.back().b > s.a) {
            out.warnings.push_back("overlapping bands near a = " + std::to_string(s.a) + "; keeping the larger slope");
            if (s.beta > bands.back().beta) bands.back() = s;
            continue;
        }
        bands.push_back(s);
    }
    for (const auto& s : bands) {
        out.policy.bands.push_back({s.a, s.b});
        out.policy.band_beta.push_back(s.beta);
        out.multi_trigger = out.multi_trigger || s.multi_trigger;
    }
    out.policy.beta = best;

    // Connected continuation regions are assumed; flag unusual concavity.
    const double a0 = bands.front().a;
    const auto prof = concavity_profile(
        ctx, [&](double x) { return ctx.kbar(x, a0); }, 256, 1e-9, a0, ctx.x_max());
    if (prof.changes.size() > 2 && bands.size() == 1)
        out.warnings.push_back("concavity profile of the reward has " + std::to_string(prof.changes.size()) +
                               " sign changes; optimality is not certified");
    if (out.multi_trigger) out.warnings.push_back("multiple triggers tie for one target; only the first is used");
    return out;
}

/// Piecewise value function of a band policy:
///   v = beta psi^ + D phi + g on (lo, b_last],
///   v(x) = v(a_last) + K(x, a_last) beyond b_last;
/// with no bands, v = g + D phi. In absorbing mode v = P at and below lo.
class ValueFunction {
public:
    ValueFunction(ContextPtr ctx, BandPolicy policy) : ctx_(std::move(ctx)), policy_(std::move(policy)) {}

    const BandPolicy& policy() const { return policy_; }
    const TransformContext& context() const { return *ctx_; }

    double continuation(double x) const {
        const auto v = ctx_->pair(x);
        return policy_.beta * ctx_->psi_hat(v) + policy_.D * v.phi + ctx_->g(x);
    }

    double continuation_deriv(double x) const {
        const auto v = ctx_->pair(x);
        return policy_.beta * ctx_->dpsi_hat(v) + policy_.D * v.dphi + ctx_->g.deriv(x);
    }

    /// Value of intervening from x to a_k.
    double intervention(double x, std::size_t k) const {
        const double a = policy_.bands[k].a;
        return continuation(a) + ctx_->K(x, a);
    }

    double operator()(double x) const {
        if (ctx_->absorbing() && x <= ctx_->lo()) return ctx_->problem->penalty();
        if (!policy_.empty() && x > policy_.bands.back().b) return intervention(x, policy_.bands.size() - 1);
        return continuation(x);
    }

    double deriv(double x) const {
        if (!policy_.empty() && x > policy_.bands.back().b) return ctx_->dK_dx(x, policy_.bands.back().a);
        return continuation_deriv(x);
    }

    /// (v - g)/phi at x: the transformed value W(F(x)).
    double transformed(double x) const {
        const auto v = ctx_->pair(x);
        return ((*this)(x) - ctx_->g(x)) / v.phi;
    }

private:
    ContextPtr ctx_;
    BandPolicy policy_;
};

inline ValueFunction assemble_value(ContextPtr ctx, const BandPolicy& policy) {
    return ValueFunction(std::move(ctx), policy);
}

struct SmoothFit {
    double left;   // v'(b-) from the continuation piece
    double right;  // v'(b+) from the intervention piece to the band's target
    double gap;
};

/// One-sided three-point derivatives at trigger b of band k, step 1e-5.
inline SmoothFit smooth_fit_check(const ValueFunction& vf, std::size_t k) {
    const double b = vf.policy().bands.at(k).b;
    constexpr double h = 1e-5;
    auto c = [&](double x) { return vf.continuation(x); };
    auto r = [&](double x) { return vf.intervention(x, k); };
    const double left = (3.0 * c(b) - 4.0 * c(b - h) + c(b - 2 * h)) / (2.0 * h);
    const double right = (-3.0 * r(b) + 4.0 * r(b + h) - r(b + 2 * h)) / (2.0 * h);
    return {left, right, std::fabs(left - right)};
}

} // namespace impulse
