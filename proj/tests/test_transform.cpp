#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace impulse;
using impulse::test::load_example;

namespace {

const char* ou_linear = R"cfg(
[diffusion]
drift = "delta*(m - x)"
vol = "s"
alpha = 0.105
[reward]
f = "x"
K = "-1"
[params]
delta = 0.1
m = 0.9
s = 0.35
[solver]
x_min = -3
x_max = 5
)cfg";

} // namespace

TEST(Transform, BrownianQuadraticResolvent) {
    const auto ctx = make_context(load_example("example1.cfg"));
    EXPECT_NEAR(ctx->g(0.0), -25.0, 1e-6);
    // E int e^{-a t} -(x + W_t)^2 dt = -x^2/a - 1/a^2.
    for (const double x : {-7.0, -1.0, 2.5, 12.0})
        EXPECT_NEAR(ctx->g(x), -x * x / 0.2 - 25.0, 1e-6 * (1.0 + x * x / 0.2)) << x;
}

TEST(Transform, OrnsteinUhlenbeckLinearResolvent) {
    const auto ctx = make_context(load_problem(ou_linear));
    const double a = 0.105, d = 0.1, m = 0.9;
    for (const double x : {-2.0, 0.0, 0.9, 3.0})
        EXPECT_NEAR(ctx->g(x), m / a + (x - m) / (a + d), 1e-6 * (1.0 + std::fabs(ctx->g(x)))) << x;
}

TEST(Transform, ResolventMonteCarloCheck) {
    const auto ctx = make_context(load_problem(ou_linear));
    const auto checks = validate_resolvent(*ctx, {0.0, 2.0}, 4000, 1e-2, 1);
    ASSERT_EQ(checks.size(), 2u);
    for (const auto& c : checks) EXPECT_TRUE(c.ok) << c.x << " g=" << c.g << " mc=" << c.estimate << "+-" << c.std_error;
}

TEST(Transform, ShiftedRewardAndBoundary) {
    const auto ctx = make_context(load_example("example1.cfg"));
    EXPECT_NEAR(ctx->kbar(12.261, 5.077), 113.6, 0.05);
    const auto bd = boundary_data(*ctx);
    EXPECT_DOUBLE_EQ(bd.F_lo, 0.0);
    EXPECT_DOUBLE_EQ(bd.D, 0.0);
    EXPECT_TRUE(bd.converged);

    const auto ctx2 = make_context(load_example("example2.cfg"));
    const auto bd2 = boundary_data(*ctx2);
    EXPECT_NEAR(bd2.F_lo, ctx2->pair.F(0.0), 1e-15);
    EXPECT_DOUBLE_EQ(bd2.D, 0.0);
}

TEST(Transform, TransformedRewardRoundTrip) {
    const auto ctx = make_context(load_example("example1.cfg"));
    const double a = 5.077;
    const auto R = transformed_reward(ctx, a);
    for (const double x : linspace(a + 0.1, 19.0, 30)) {
        const double want = ctx->kbar(x, a) / ctx->pair.phi(x);
        EXPECT_NEAR(R(ctx->pair.F(x)), want, 1e-10 * std::max(1.0, std::fabs(want))) << x;
    }
    // Left of the target the stay-put reward K(x, x)/phi = -c sqrt(y).
    for (const double y : {0.01, 0.3, 0.9}) EXPECT_NEAR(R(y), -150.0 * std::sqrt(y), 1e-8);
}

TEST(Transform, AbsorbingRewardPinned) {
    const auto ctx = make_context(load_example("example2.cfg"));
    const auto R = transformed_reward(ctx, 0.2);
    EXPECT_DOUBLE_EQ(R(ctx->F_lo), ctx->D);
    EXPECT_DOUBLE_EQ(R(ctx->F_lo - 1.0), ctx->D);
}

TEST(Transform, ConcavityProfileQuadraticRoot) {
    const auto ctx = make_context(load_example("example1.cfg"));
    const double a = 5.077, alpha = 0.2, c = 150.0, lam = 50.0;
    // (A - alpha) Kbar(., a) = alpha (c + lam (x - a) - g(a)) - x^2.
    const double q = c - lam * a - ctx->g(a);
    const double k = 0.5 * (alpha * lam + std::sqrt(alpha * alpha * lam * lam + 4.0 * alpha * q));
    const auto prof = concavity_profile(*ctx, [&](double x) { return ctx->kbar(x, a); }, 256, 1e-9, a, ctx->x_max());
    ASSERT_FALSE(prof.changes.empty());
    EXPECT_NEAR(prof.changes.back(), k, 1e-4 * k);
}

TEST(Transform, FundamentalsAreHarmonic) {
    const auto ctx = make_context(load_example("example1.cfg"));
    const auto prof = concavity_profile(*ctx, [&](double x) { return ctx->pair.psi(x); }, 64, 0.0, -5.0, 5.0);
    for (std::size_t i = 0; i < prof.x.size(); ++i)
        EXPECT_LE(std::fabs(prof.value[i]), 1e-5 * (1.0 + ctx->pair.psi(prof.x[i]))) << prof.x[i];
}

TEST(Transform, LinearHarvestHasOneSignChange) {
    auto text = impulse::test::read_file(impulse::test::config_path("example2.cfg"));
    text.replace(text.find("gamma = 0.75"), 12, "gamma = 1");
    const auto ctx = make_context(load_problem(text));
    const double a = 0.2;
    const auto prof = concavity_profile(*ctx, [&](double x) { return ctx->kbar(x, a); }, 256, 1e-9, a, ctx->x_max());
    EXPECT_EQ(prof.changes.size(), 1u);
}

TEST(Transform, Finiteness) {
    for (const char* name : {"example1.cfg", "example2.cfg"}) {
        const auto ctx = make_context(load_example(name));
        const auto rep = finiteness_check(*ctx, ctx->x_min() + 0.25 * (ctx->x_max() - ctx->x_min()));
        EXPECT_TRUE(rep.finite) << name;
        EXPECT_TRUE(std::isfinite(rep.q)) << name;
    }
    const auto ctx = make_context(load_problem(R"cfg(
[diffusion]
drift = "0"
vol = "1"
alpha = 0.2
[reward]
f = "0"
K = "exp(3*theta*x) - exp(3*theta*y) - 1"
[params]
theta = 0.6324555320336759
[solver]
x_min = -5
x_max = 5
)cfg"));
    const auto rep = finiteness_check(*ctx, 0.0);
    EXPECT_FALSE(rep.finite);
    EXPECT_TRUE(std::isinf(rep.q));
}
