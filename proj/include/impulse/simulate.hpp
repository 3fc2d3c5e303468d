#pragma once

// Monte Carlo evaluation of band policies by Euler-Maruyama.

#include <impulse/parallel.hpp>
#include <impulse/policy.hpp>
#include <impulse/sde.hpp>
#include <impulse/transform.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace impulse {

struct SimConfig {
    double x0 = 0.0;
    double dt = 1e-3;
    double horizon = 0.0;  // 0: ln(1e6)/alpha, or the [solver] sim_horizon when alpha = 0
    long n_paths = 10000;
    std::uint64_t seed = 1;
    // Natural-mode censoring window; default [x_min - 10w, x_max + 10w].
    std::optional<double> censor_lo, censor_hi;
};

struct SimEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    long n_paths = 0;
    long censored = 0;
    double censored_fraction = 0.0;
    double mean_interventions = 0.0;
    double horizon = 0.0;
};

struct DominanceReport {
    SimEstimate opt, alt;
    double diff = 0.0;     // alt - opt, paired
    double diff_se = 0.0;  // standard error of the paired difference
    bool dominated = true; // alt <= opt + 3 diff_se
};

/// Horizon actually used: explicit, or e^{-alpha T} = 1e-6, or the
/// configured horizon when alpha = 0.
inline double simulation_horizon(const TransformContext& ctx, const SimConfig& cfg) {
    if (cfg.horizon > 0.0) return cfg.horizon;
    const double alpha = ctx.problem->diffusion.alpha;
    if (alpha > 0.0) return std::log(1e6) / alpha;
    if (ctx.problem->settings.sim_horizon > 0.0) return ctx.problem->settings.sim_horizon;
    throw ConfigError("alpha = 0 needs an explicit simulation horizon (sim_horizon)");
}

inline void validate_sim_config(const TransformContext& ctx, const SimConfig& cfg) {
    const double alpha = ctx.problem->diffusion.alpha;
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw ConfigError("dt must be positive");
    if (alpha > 0.0 && !(cfg.dt < 1.0 / alpha)) throw ConfigError("dt must be below 1/alpha");
    if (cfg.n_paths < 1) throw ConfigError("n_paths must be positive");
    if (!std::isfinite(cfg.x0)) throw ConfigError("x0 must be finite");
    if (ctx.absorbing() && cfg.x0 < ctx.lo()) throw ConfigError("x0 lies below the absorbing boundary");
    if (!ctx.absorbing() && alpha > 0.0 && cfg.horizon > 0.0 && std::exp(-alpha * cfg.horizon) >= 1e-6)
        throw ConfigError("horizon too short: exp(-alpha T) must be below 1e-6");
}

namespace detail {

struct PathState {
    double x;
    double acc = 0.0;
    int interventions = 0;
    bool alive = true;
    bool censored = false;
};

inline SimEstimate summarize(std::span<const double> payoff, long censored, double interventions, double T) {
    SimEstimate e;
    e.n_paths = static_cast<long>(payoff.size());
    const double n = static_cast<double>(payoff.size());
    e.estimate = pairwise_sum(payoff) / n;
    if (payoff.size() > 1) {
        std::vector<double> dev(payoff.size());
        for (std::size_t i = 0; i < payoff.size(); ++i) dev[i] = (payoff[i] - e.estimate) * (payoff[i] - e.estimate);
        e.std_error = std::sqrt(pairwise_sum(dev) / (n - 1.0) / n);
    }
    e.censored = censored;
    e.censored_fraction = static_cast<double>(censored) / n;
    e.mean_interventions = interventions / n;
    e.horizon = T;
    return e;
}

} // namespace detail

/// Joint simulation of several policies on common random numbers: every
/// policy sees the same normal increments, one per step. Returns the
/// estimates and, through `payoffs`, the per-path payoffs (policy-major).
inline std::vector<SimEstimate> simulate_policies(const TransformContext& ctx, const std::vector<BandPolicy>& policies,
                                                  const SimConfig& cfg,
                                                  std::vector<std::vector<double>>* payoffs = nullptr) {
    validate_sim_config(ctx, cfg);
    const auto& p = *ctx.problem;
    const double alpha = p.diffusion.alpha;
    const double T = simulation_horizon(ctx, cfg);
    const auto steps = static_cast<long>(std::ceil(T / cfg.dt));
    const double width = ctx.x_max() - ctx.x_min();
    const double cen_lo = cfg.censor_lo.value_or(ctx.x_min() - 10.0 * width);
    const double cen_hi = cfg.censor_hi.value_or(ctx.x_max() + 10.0 * width);
    const bool absorbing = ctx.absorbing();
    const double lo = ctx.lo();
    const double P = p.penalty();
    const double low_bar = absorbing ? lo : cen_lo;
    const SdeCoefficients co(p, absorbing ? lo : cen_lo, cen_hi);
    const double dt = cfg.dt, sq = std::sqrt(dt), step_disc = std::exp(-alpha * dt);

    const bool additive = co.additive();
    const double mu0 = co.mu(0.0), sig0 = co.sigma(0.0);
    constexpr long block = 1024;
    const std::size_t n_pol = policies.size();
    const auto n = static_cast<std::size_t>(cfg.n_paths);
    std::vector<std::vector<double>> pay(n_pol, std::vector<double>(n));
    std::vector<std::vector<unsigned char>> cens(n_pol, std::vector<unsigned char>(n));
    std::vector<std::vector<double>> count(n_pol, std::vector<double>(n));

    parallel_for(n, [&](std::size_t path) {
        PathRng rng(cfg.seed, path);
        std::vector<detail::PathState> st(n_pol, detail::PathState{cfg.x0});
        std::size_t alive = 0;
        for (std::size_t q = 0; q < n_pol; ++q) {
            const auto& bands = policies[q].bands;
            auto& s = st[q];
            // Above the last trigger the policy acts at once.
            if (!bands.empty() && s.x >= bands.back().b) {
                s.acc += p.K(s.x, bands.back().a);
                s.x = bands.back().a;
                ++s.interventions;
            }
            if (absorbing && s.x <= lo) {
                s.acc += P;
                s.alive = false;
            }
            alive += s.alive;
        }
        // Normals are drawn in blocks and replayed for each policy, so every
        // policy sees the same increments. With constant coefficients the
        // block holds the increments themselves.
        std::array<double, block> z;
        for (long k0 = 0; k0 < steps && alive > 0; k0 += block) {
            const long len = std::min<long>(block, steps - k0);
            for (long j = 0; j < len; ++j) z[j] = rng.normal();
            if (additive)
                for (long j = 0; j < len; ++j) z[j] = mu0 * dt + sig0 * sq * z[j];
            for (std::size_t q = 0; q < n_pol; ++q) {
                auto& s = st[q];
                if (!s.alive) continue;
                const auto& bands = policies[q].bands;
                double x = s.x, acc = s.acc;
                // Nearest triggers above and at-or-below x; only crossing one
                // of these, or a boundary, needs attention.
                auto bracket = [&](double at, double& up, double& down) {
                    up = inf_v;
                    down = -inf_v;
                    for (const auto& band : bands) {
                        if (band.b > at) up = std::min(up, band.b);
                        else down = std::max(down, band.b);
                    }
                };
                double b_up, b_down;
                bracket(x, b_up, b_down);
                double disc = std::exp(-alpha * static_cast<double>(k0) * dt);
                for (long j = 0; j < len; ++j, disc *= step_disc) {
                    acc += disc * co.f(x) * dt;
                    const double xn = additive ? x + z[j] : x + co.mu(x) * dt + co.sigma(x) * sq * z[j];
                    if (xn > b_down && xn < b_up && xn > low_bar && xn < cen_hi) [[likely]] {
                        x = xn;
                        continue;
                    }
                    const double t = static_cast<double>(k0 + j) * dt;
                    if (xn <= low_bar) {
                        if (absorbing) {
                            const double theta = (x - lo) / (x - xn);
                            acc += std::exp(-alpha * (t + theta * dt)) * P;
                        } else {
                            s.censored = true;
                        }
                        s.alive = false;
                        break;
                    }
                    if (xn >= b_up) {
                        const Band& hit = *std::find_if(bands.begin(), bands.end(),
                                                        [&](const Band& band) { return band.b == b_up; });
                        const double theta = (hit.b - x) / (xn - x);
                        acc += std::exp(-alpha * (t + theta * dt)) * p.K(hit.b, hit.a);
                        x = hit.a;
                        ++s.interventions;
                        bracket(x, b_up, b_down);
                        continue;
                    }
                    if (!absorbing && xn >= cen_hi) {
                        s.censored = true;
                        s.alive = false;
                        break;
                    }
                    x = xn;
                    bracket(x, b_up, b_down);
                }
                s.x = x;
                s.acc = acc;
                if (!s.alive) --alive;
            }
        }
        for (std::size_t q = 0; q < n_pol; ++q) {
            pay[q][path] = st[q].acc;
            cens[q][path] = st[q].censored;
            count[q][path] = st[q].interventions;
        }
    });

    std::vector<SimEstimate> out;
    for (std::size_t q = 0; q < n_pol; ++q) {
        long c = 0;
        for (const auto v : cens[q]) c += v;
        out.push_back(detail::summarize(pay[q], c, pairwise_sum(count[q]), T));
    }
    if (payoffs) *payoffs = std::move(pay);
    return out;
}

/// J of one band policy from cfg.x0: mean payoff and standard error.
/// Running reward by the left-endpoint rule; impulses and ruin at the
/// linearly interpolated crossing time; censored paths keep what they
/// accrued before leaving the window.
inline SimEstimate simulate_policy(const TransformContext& ctx, const BandPolicy& policy, const SimConfig& cfg) {
    return simulate_policies(ctx, {policy}, cfg).front();
}

/// Paired comparison of two policies on common random numbers.
inline DominanceReport paired_dominance(const std::vector<double>& opt, const std::vector<double>& alt,
                                        const SimEstimate& e_opt, const SimEstimate& e_alt) {
    DominanceReport r{e_opt, e_alt};
    std::vector<double> d(opt.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = alt[i] - opt[i];
    const auto s = detail::summarize(d, 0, 0.0, e_opt.horizon);
    r.diff = s.estimate;
    r.diff_se = s.std_error;
    r.dominated = r.diff <= 3.0 * r.diff_se;
    return r;
}

inline DominanceReport policy_dominance(const TransformContext& ctx, const BandPolicy& opt, const BandPolicy& alt,
                                        const SimConfig& cfg) {
    std::vector<std::vector<double>> pay;
    const auto est = simulate_policies(ctx, {opt, alt}, cfg, &pay);
    return paired_dominance(pay[0], pay[1], est[0], est[1]);
}

} // namespace impulse
