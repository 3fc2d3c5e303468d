#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace impulse;
using impulse::test::load_example;

namespace {

// (sigma^2/2) u'' + mu u' - alpha u with u'' from central differences of u'.
double ode_residual(const ImpulseProblem& p, const FundamentalPair& fp, double x, bool psi) {
    const double h = fd_step(x);
    auto du = [&](double t) { return psi ? fp(t).dpsi : fp(t).dphi; };
    const auto v = fp(x);
    const double u = psi ? v.psi : v.phi;
    const double d2 = (du(x + h) - du(x - h)) / (2.0 * h);
    const double s = p.diffusion.sigma(x);
    return 0.5 * s * s * d2 + p.diffusion.mu(x) * du(x) - p.diffusion.alpha * u;
}

} // namespace

TEST(Fundamentals, BrownianClosedForm) {
    const auto p = load_example("example1.cfg");
    ASSERT_EQ(catalog_entry(p), CatalogEntry::brownian);
    const auto fp = analytic_fundamentals(p);
    EXPECT_EQ(fp.provenance(), Provenance::analytic_bm);
    EXPECT_DOUBLE_EQ(fp.psi(0.0), 1.0);
    EXPECT_DOUBLE_EQ(fp.phi(0.0), 1.0);
    const double r = std::sqrt(0.4);
    for (const double x : {-3.0, 1.0, 4.5}) {
        EXPECT_NEAR(fp.psi(x), std::exp(r * x), 1e-12 * std::exp(r * x));
        EXPECT_NEAR(fp.phi(x), std::exp(-r * x), 1e-12 * std::exp(-r * x));
    }
    EXPECT_NEAR(fp.F(1.0), 3.5427, 1e-4);
}

TEST(Fundamentals, OrnsteinUhlenbeckCatalog) {
    const auto p = load_example("example2.cfg");
    ASSERT_EQ(catalog_entry(p), CatalogEntry::ornstein_uhlenbeck);
    const auto fp = analytic_fundamentals(p);
    EXPECT_EQ(fp.provenance(), Provenance::analytic_ou);
    const double c = fp.norm_point();
    EXPECT_DOUBLE_EQ(c, 0.9);
    EXPECT_NEAR(fp.psi(c), fp.phi(c), 1e-12 * fp.psi(c));
    double prev_psi = 0.0, prev_phi = inf_v;
    for (const double x : linspace(0.0, 3.0, 61)) {
        const auto v = fp(x);
        EXPECT_GT(v.psi, prev_psi);
        EXPECT_LT(v.phi, prev_phi);
        prev_psi = v.psi;
        prev_phi = v.phi;
    }
}

TEST(Fundamentals, NumericMatchesBrownian) {
    const auto p = load_example("example1.cfg");
    const auto an = analytic_fundamentals(p);
    const auto nu = numeric_fundamentals(p, 0.0);
    EXPECT_EQ(nu.provenance(), Provenance::numeric);
    for (const double x : linspace(-5.0, 5.0, 41)) {
        EXPECT_LE(std::fabs(nu.psi(x) / an.psi(x) - 1.0), 1e-6) << x;
        EXPECT_LE(std::fabs(nu.phi(x) / an.phi(x) - 1.0), 1e-6) << x;
    }
}

TEST(Fundamentals, NumericMatchesOrnsteinUhlenbeck) {
    const auto p = load_example("example2.cfg");
    const auto an = analytic_fundamentals(p);
    const double c = 1.0;
    const auto nu = numeric_fundamentals(p, c);
    EXPECT_NEAR(nu.psi(c), 1.0, 1e-12);
    EXPECT_NEAR(nu.phi(c), 1.0, 1e-12);
    const auto ac = an(c);
    for (const double x : linspace(0.0, 2.0, 41)) {
        const auto v = an(x);
        EXPECT_LE(std::fabs(nu.psi(x) / (v.psi / ac.psi) - 1.0), 1e-5) << x;
        EXPECT_LE(std::fabs(nu.phi(x) / (v.phi / ac.phi) - 1.0), 1e-5) << x;
    }
}

TEST(Fundamentals, SolveTheOde) {
    for (const char* name : {"example1.cfg", "example2.cfg"}) {
        const auto p = load_example(name);
        for (const auto& fp : {analytic_fundamentals(p), numeric_fundamentals(p)}) {
            for (const double x : linspace(p.settings.x_min + 0.1, std::min(p.settings.x_max, 5.0) - 0.1, 25)) {
                for (const bool psi : {true, false}) {
                    const double u = psi ? fp.psi(x) : fp.phi(x);
                    EXPECT_LE(std::fabs(ode_residual(p, fp, x, psi)), 1e-6 * (1.0 + std::fabs(u)))
                        << name << " " << to_string(fp.provenance()) << " x=" << x << (psi ? " psi" : " phi");
                }
            }
        }
    }
}

TEST(Fundamentals, WronskianAndInverse) {
    impulse::test::Gen gen(3);
    for (const char* name : {"example1.cfg", "example2.cfg", "example3.cfg"}) {
        const auto p = load_example(name);
        const auto fp = make_fundamentals(p);
        const double lo = p.settings.x_min + 1e-3, hi = p.settings.x_max;
        for (int t = 0; t < 50; ++t) {
            const double x = gen.uniform(lo, hi);
            const auto v = fp(x);
            EXPECT_GT(v.dpsi * v.phi - v.psi * v.dphi, 0.0) << name << " " << x;
            EXPECT_GT(v.dF(), 0.0);
            EXPECT_NEAR(fp.F_inv(v.F()), x, 1e-9 * std::max(1.0, std::fabs(x))) << name;
        }
    }
}

TEST(Fundamentals, NumericInverseBracketed) {
    const auto p = load_example("example2.cfg");
    const auto fp = numeric_fundamentals(p);
    for (const double x : linspace(0.05, 2.95, 30)) EXPECT_NEAR(fp.F_inv(fp.F(x)), x, 1e-9);
    EXPECT_THROW(fp.F_inv(fp.F(fp.domain_hi()) * 2.0 + 1.0), std::domain_error);
}

TEST(Fundamentals, NonCatalogFallsBackToNumeric) {
    const auto p = load_problem(R"cfg(
[diffusion]
drift = "-x^3"
vol = "1 + 0.1*x^2"
alpha = 0.3
[reward]
f = "-x^2"
K = "-1 - abs(x - y)"
[solver]
x_min = -3
x_max = 3
)cfg");
    EXPECT_EQ(catalog_entry(p), CatalogEntry::none);
    EXPECT_THROW(analytic_fundamentals(p), SolverError);
    const auto fp = make_fundamentals(p);
    EXPECT_EQ(fp.provenance(), Provenance::numeric);
    for (const double x : linspace(-2.5, 2.5, 21))
        for (const bool psi : {true, false}) {
            const double u = psi ? fp.psi(x) : fp.phi(x);
            EXPECT_LE(std::fabs(ode_residual(p, fp, x, psi)), 1e-6 * (1.0 + std::fabs(u))) << x;
        }
}
