#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace impulse;
using impulse::test::Gen;
using impulse::test::solved;

namespace {

struct Best {
    double a, b, slope;
};

// Maximizes slope(a, b) over lo <= a < b <= hi by a grid followed by
// repeated local zooms. Independent of the solver's two-stage scheme.
template <class Fn>
Best brute_slope(Fn&& slope, double lo, double hi, int n = 400) {
    Best best{nan_v, nan_v, -inf_v};
    const double h = (hi - lo) / n;
    for (int i = 0; i <= n; ++i)
        for (int j = i + 1; j <= n; ++j) {
            const double a = lo + i * h, b = lo + j * h;
            const double s = slope(a, b);
            if (s > best.slope) best = {a, b, s};
        }
    for (double step = h; step > 1e-10; step *= 0.5) {
        for (bool moved = true; moved;) {
            moved = false;
            for (int da = -1; da <= 1; ++da)
                for (int db = -1; db <= 1; ++db) {
                    const double a = best.a + da * step, b = best.b + db * step;
                    if (a < lo || b > hi || !(a < b)) continue;
                    const double s = slope(a, b);
                    if (s > best.slope) {
                        best = {a, b, s};
                        moved = true;
                    }
                }
        }
    }
    return best;
}

} // namespace

TEST(Solver, BrownianQuadraticBand) {
    const auto& s = solved("example1.cfg");
    const auto& p = s.policy();
    ASSERT_EQ(p.bands.size(), 1u);
    // Closed-form pieces: psi = e^{r x}, g = -x^2/alpha - 1/alpha^2.
    const double r = std::sqrt(0.4);
    auto g = [](double x) { return -x * x / 0.2 - 25.0; };
    const auto ref = brute_slope(
        [&](double a, double b) { return (-150.0 - 50.0 * (b - a) - g(b) + g(a)) / (std::exp(r * b) - std::exp(r * a)); },
        0.0, 20.0);
    EXPECT_NEAR(p.bands[0].a, ref.a, 1e-5);
    EXPECT_NEAR(p.bands[0].b, ref.b, 1e-5);
    EXPECT_NEAR(p.beta, ref.slope, 1e-8 * ref.slope);
    // Published figures.
    EXPECT_NEAR(p.bands[0].a, 5.077, 0.01 * 5.077);
    EXPECT_NEAR(p.bands[0].b, 12.261, 0.01 * 12.261);
    EXPECT_NEAR(p.beta, 0.0492, 0.01 * 0.0492);
}

TEST(Solver, OrnsteinUhlenbeckHarvestBand) {
    const auto& s = solved("example2.cfg");
    const auto& p = s.policy();
    ASSERT_EQ(p.bands.size(), 1u);
    EXPECT_NEAR(p.bands[0].a, 0.2192, 0.01 * 0.2192);
    EXPECT_NEAR(p.bands[0].b, 0.6220, 0.01 * 0.6220);
    EXPECT_NEAR(p.beta, 0.5749, 0.01 * 0.5749);
    // Independent slope maximization with the same pair.
    const auto& ctx = *s.ctx;
    const auto ref = brute_slope(
        [&](double a, double b) {
            const auto va = ctx.pair(a), vb = ctx.pair(b);
            return (ctx.kbar(b, a) - ctx.D * (vb.phi - va.phi)) / (ctx.psi_hat(vb) - ctx.psi_hat(va));
        },
        1e-3, 3.0, 150);
    EXPECT_NEAR(p.beta, ref.slope, 1e-7 * ref.slope);
    EXPECT_NEAR(p.bands[0].a, ref.a, 1e-4);
    EXPECT_NEAR(p.bands[0].b, ref.b, 1e-4);
}

TEST(Solver, PeriodicRewardHasRepeatedBands) {
    const auto& s = solved("example3.cfg");
    const auto& p = s.policy();
    // psi = x, phi = 1: the slope is K(b, a)/(b - a).
    const auto ref = brute_slope(
        [](double a, double b) { return (-10.0 * (std::sin(b) - std::sin(a)) - 0.35) / (b - a); }, 0.0, 2.0 * std::numbers::pi, 300);
    EXPECT_NEAR(p.beta, ref.slope, 1e-7 * ref.slope);
    EXPECT_NEAR(p.beta, 9.30, 0.02 * 9.30);
    ASSERT_GE(p.bands.size(), 3u);
    for (const auto& band : p.bands) {
        const double k = std::round((band.b - ref.b) / (2.0 * std::numbers::pi));
        EXPECT_NEAR(band.a - 2.0 * std::numbers::pi * k, ref.a, 1e-4);
        EXPECT_NEAR(band.b - 2.0 * std::numbers::pi * k, ref.b, 1e-4);
    }
    for (int k = 0; k <= 2; ++k) {
        bool found = false;
        for (const auto& band : p.bands)
            found = found || (std::fabs(band.a - (2.75 + 4 * k * std::numbers::pi)) < 0.02 * (2.75 + 4 * k * std::numbers::pi) &&
                              std::fabs(band.b - (3.52 + 4 * k * std::numbers::pi)) < 0.02 * (3.52 + 4 * k * std::numbers::pi));
        EXPECT_TRUE(found) << k;
    }
}

TEST(Solver, NoInterventionGivesEmptyPolicy) {
    const auto& s = solved("no_intervention.cfg");
    EXPECT_TRUE(s.policy().empty());
    const auto vf = s.value();
    for (const double x : {0.0, 0.5, 3.0}) EXPECT_DOUBLE_EQ(vf(x), 0.0);
}

TEST(Solver, TangencyIsSelfConsistent) {
    for (const char* name : {"example1.cfg", "example2.cfg", "example3.cfg"}) {
        const auto& s = solved(name);
        for (const auto& band : s.policy().bands) {
            const auto st = tangency_solve(*s.ctx, band.a);
            ASSERT_TRUE(st.ok()) << name;
            EXPECT_NEAR(st.b, band.b, 1e-7 * std::max(1.0, band.b)) << name;
            EXPECT_LE(st.residual, 1e-8) << name;
        }
    }
}

TEST(Solver, GammaIsValueAboveResolvent) {
    const auto& s = solved("example1.cfg");
    const double a = s.policy().bands[0].a;
    const auto gr = solve_gamma(*s.ctx, a);
    ASSERT_EQ(gr.status, StageStatus::ok);
    EXPECT_NEAR(gr.gamma, 1.2212, 1e-4);
    const auto vf = s.value();
    EXPECT_NEAR(gr.gamma, vf(a) - s.ctx->g(a), 1e-7);
    EXPECT_LE(gr.residual, 1e-9);
}

TEST(Solver, StoppingValueContracts) {
    const auto& s = solved("example1.cfg");
    const double a = s.policy().bands[0].a;
    const StoppingValue V(*s.ctx, a);
    for (const double g : {-5.0, 0.0, 1.22, 3.4})
        for (const double d : {0.1, 1.0, 10.0}) {
            const double inc = V(g + d) - V(g);
            EXPECT_GE(inc, -1e-9);
            EXPECT_LE(inc, d + 1e-9 * std::max(1.0, std::fabs(V(g + d))));
        }
}

TEST(SolverProperty, UniqueGammaSignChange) {
    const auto& s = solved("example1.cfg");
    Gen gen(21);
    for (int t = 0; t < 10; ++t) {
        const double a = gen.uniform(-5.0, 10.0);
        const auto gr = solve_gamma(*s.ctx, a);
        ASSERT_EQ(gr.status, StageStatus::ok) << a;
        const StoppingValue V(*s.ctx, a);
        int changes = 0, last = 0;
        for (const double g : linspace(gr.gamma - 20.0, gr.gamma + 20.0, 41)) {
            const double m = V(g) - g;
            const int sg = m > 0 ? 1 : (m < 0 ? -1 : 0);
            if (sg && last && sg != last) ++changes;
            if (sg) last = sg;
        }
        EXPECT_EQ(changes, 1) << a;
    }
}

TEST(Solver, ValueAtOrigin) {
    EXPECT_NEAR(solved("example1.cfg").value()(0.0), -24.9508, 1e-4);
    EXPECT_DOUBLE_EQ(solved("example2.cfg").value()(0.0), 0.0);
}

TEST(Solver, InterventionPieceBeyondLastTrigger) {
    for (const char* name : {"example1.cfg", "example2.cfg"}) {
        const auto& s = solved(name);
        const auto vf = s.value();
        const auto [a, b] = s.policy().bands.back();
        const double hi = s.ctx->x_max();
        for (const double x : linspace(b, hi, 12)) EXPECT_NEAR(vf(x), vf(a) + s.ctx->K(x, a), 1e-8 * (1.0 + std::fabs(vf(x))));
        // Continuous at the trigger.
        EXPECT_NEAR(vf.continuation(b), vf.intervention(b, 0), 1e-7 * (1.0 + std::fabs(vf(b))));
    }
}

TEST(Solver, SmoothFit) {
    for (const char* name : {"example1.cfg", "example2.cfg"}) {
        const auto& s = solved(name);
        const auto sf = smooth_fit_check(s.value(), 0);
        EXPECT_LE(sf.gap, 1e-3 * std::fabs(sf.left)) << name;
    }
}

TEST(SolverProperty, TransformedValueIsConcave) {
    Gen gen(22);
    for (const char* name : {"example1.cfg", "example2.cfg"}) {
        const auto& s = solved(name);
        const auto vf = s.value();
        const auto& ctx = *s.ctx;
        const double lo = ctx.x_min() + (ctx.absorbing() ? 1e-6 : 0.0);
        for (int t = 0; t < 200; ++t) {
            double x[3] = {gen.uniform(lo, ctx.x_max()), gen.uniform(lo, ctx.x_max()), gen.uniform(lo, ctx.x_max())};
            std::sort(x, x + 3);
            double y[3], w[3];
            for (int i = 0; i < 3; ++i) {
                y[i] = ctx.pair.F(x[i]);
                w[i] = vf.transformed(x[i]);
            }
            if (!(y[0] < y[1] && y[1] < y[2])) continue;
            const double chord = w[0] + (y[1] - y[0]) / (y[2] - y[0]) * (w[2] - w[0]);
            EXPECT_GE(w[1], chord - 1e-8 * std::max({1.0, std::fabs(w[0]), std::fabs(w[1]), std::fabs(w[2])})) << name;
        }
    }
}

TEST(SolverProperty, ValueMajorizesIntervention) {
    Gen gen(23);
    for (const char* name : {"example1.cfg", "example2.cfg", "example3.cfg"}) {
        const auto& s = solved(name);
        const auto vf = s.value();
        // Beyond the last trigger v follows the band's own target, which
        // need not be the best jump when K is concave in the jump size.
        const double lo = s.ctx->x_min(), hi = s.policy().bands.back().b;
        for (int t = 0; t < 300; ++t) {
            const double x = gen.uniform(lo, hi), y = gen.uniform(lo, x);
            const double mv = vf(y) + s.ctx->K(x, y);
            EXPECT_LE(mv, vf(x) + 1e-8 * std::max(1.0, std::fabs(vf(x)))) << name << " x=" << x << " y=" << y;
        }
    }
}

TEST(SolverProperty, OptimalSlopeDominates) {
    Gen gen(24);
    for (const char* name : {"example1.cfg", "example2.cfg"}) {
        const auto& s = solved(name);
        const double lo = s.ctx->x_min(), hi = s.ctx->x_max();
        for (int t = 0; t < 15; ++t) {
            const double a = gen.uniform(lo + 0.01 * (hi - lo), hi - 0.05 * (hi - lo));
            const auto st = tangency_solve(*s.ctx, a);
            if (st.ok()) {
                EXPECT_LE(st.beta, s.policy().beta * (1.0 + 1e-9)) << name << " a=" << a;
            }
        }
    }
}
