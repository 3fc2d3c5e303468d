#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace impulse;
using impulse::test::solved;

TEST(Simulate, NothingToEarn) {
    const auto& s = solved("no_intervention.cfg");
    SimConfig cfg;
    cfg.x0 = 1.0;
    cfg.n_paths = 200;
    cfg.dt = 1e-2;
    const auto e = simulate_policy(*s.ctx, BandPolicy{}, cfg);
    EXPECT_EQ(e.estimate, 0.0);
    EXPECT_EQ(e.std_error, 0.0);
    EXPECT_EQ(e.mean_interventions, 0.0);
}

TEST(Simulate, DeterministicForSeed) {
    const auto& s = solved("example1.cfg");
    SimConfig cfg;
    cfg.n_paths = 200;
    cfg.dt = 1e-2;
    cfg.seed = 9;
    const auto a = simulate_policy(*s.ctx, s.policy(), cfg);
    const auto b = simulate_policy(*s.ctx, s.policy(), cfg);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.std_error, b.std_error);
    cfg.seed = 10;
    EXPECT_NE(simulate_policy(*s.ctx, s.policy(), cfg).estimate, a.estimate);
}

TEST(Simulate, SamePolicyHasZeroDifference) {
    const auto& s = solved("example1.cfg");
    SimConfig cfg;
    cfg.n_paths = 100;
    cfg.dt = 1e-2;
    const auto r = policy_dominance(*s.ctx, s.policy(), s.policy(), cfg);
    EXPECT_EQ(r.diff, 0.0);
    EXPECT_EQ(r.diff_se, 0.0);
    EXPECT_TRUE(r.dominated);
    EXPECT_EQ(r.opt.estimate, r.alt.estimate);
}

TEST(Simulate, ImmediateInterventionAboveTrigger) {
    const auto& s = solved("example1.cfg");
    const auto [a, b] = s.policy().bands[0];
    SimConfig cfg;
    cfg.x0 = b + 3.0;
    cfg.n_paths = 50;
    cfg.dt = 1e-2;
    const auto e = simulate_policy(*s.ctx, s.policy(), cfg);
    EXPECT_GE(e.mean_interventions, 1.0);
}

TEST(Simulate, BrownianBandMatchesValue) {
    const auto& s = solved("example1.cfg");
    SimConfig cfg;
    cfg.x0 = 0.0;
    cfg.n_paths = 3000;
    cfg.seed = 17;
    const auto e = simulate_policy(*s.ctx, s.policy(), cfg);
    const double v0 = s.value()(0.0);
    EXPECT_LE(std::fabs(e.estimate - v0), 3.0 * e.std_error) << e.estimate << " +- " << e.std_error << " vs " << v0;
    EXPECT_EQ(e.censored, 0);
}

TEST(Simulate, HarvestBandMatchesValue) {
    const auto& s = solved("example2.cfg");
    const auto vf = s.value();
    SimConfig cfg;
    cfg.x0 = 0.5;
    cfg.dt = 1e-4;
    cfg.n_paths = 1000;
    cfg.seed = 18;
    const auto e = simulate_policy(*s.ctx, s.policy(), cfg);
    EXPECT_LE(std::fabs(e.estimate - vf(0.5)), 3.0 * e.std_error) << e.estimate << " +- " << e.std_error << " vs " << vf(0.5);
}

TEST(Simulate, AllBandsBeatOne) {
    const auto& s = solved("example3.cfg");
    BandPolicy single;
    single.bands = {s.policy().bands.front()};
    SimConfig cfg;
    cfg.x0 = 10.0;
    cfg.dt = 1e-2;
    cfg.n_paths = 200;
    cfg.seed = 19;
    const auto r = policy_dominance(*s.ctx, s.policy(), single, cfg);
    EXPECT_LT(r.diff + 3.0 * r.diff_se, 0.0) << r.diff << " +- " << r.diff_se;
    EXPECT_LE(std::fabs(r.opt.estimate - s.value()(10.0)), 3.0 * r.opt.std_error + 0.03 * s.value()(10.0));
}

TEST(SimulateProperty, PerturbedBandsDoNotWin) {
    const auto& s = solved("example1.cfg");
    const auto [a, b] = s.policy().bands[0];
    impulse::test::Gen gen(51);
    std::vector<BandPolicy> pols{s.policy()};
    while (pols.size() < 5) {
        BandPolicy p;
        const double na = a * (1.0 + (gen.coin() ? 1 : -1) * gen.uniform(0.05, 0.25));
        const double nb = b * (1.0 + (gen.coin() ? 1 : -1) * gen.uniform(0.05, 0.25));
        if (!(na < nb)) continue;
        p.bands = {{na, nb}};
        pols.push_back(p);
    }
    SimConfig cfg;
    cfg.n_paths = 1000;
    cfg.seed = 20;
    std::vector<std::vector<double>> pay;
    const auto est = simulate_policies(*s.ctx, pols, cfg, &pay);
    for (std::size_t q = 1; q < pols.size(); ++q) {
        const auto r = paired_dominance(pay[0], pay[q], est[0], est[q]);
        EXPECT_TRUE(r.dominated) << pols[q].bands[0].a << "," << pols[q].bands[0].b << " diff " << r.diff << " +- " << r.diff_se;
    }
}

TEST(SimulateProperty, StepHalvingConsistent) {
    const auto& s = solved("example1.cfg");
    SimConfig cfg;
    cfg.n_paths = 1500;
    cfg.seed = 22;
    cfg.dt = 2e-3;
    const auto coarse = simulate_policy(*s.ctx, s.policy(), cfg);
    cfg.dt = 1e-3;
    const auto fine = simulate_policy(*s.ctx, s.policy(), cfg);
    const double se = std::hypot(coarse.std_error, fine.std_error);
    EXPECT_LE(std::fabs(coarse.estimate - fine.estimate), 3.0 * se);
}

TEST(Simulate, InvalidSettings) {
    const auto& s = solved("example1.cfg");
    SimConfig cfg;
    cfg.dt = 0.0;
    EXPECT_THROW(simulate_policy(*s.ctx, s.policy(), cfg), ConfigError);
    cfg.dt = 10.0;
    EXPECT_THROW(simulate_policy(*s.ctx, s.policy(), cfg), ConfigError);
    cfg.dt = 1e-3;
    cfg.n_paths = 0;
    EXPECT_THROW(simulate_policy(*s.ctx, s.policy(), cfg), ConfigError);
    cfg.n_paths = 10;
    cfg.horizon = 1.0;
    EXPECT_THROW(simulate_policy(*s.ctx, s.policy(), cfg), ConfigError);
    const auto& s2 = solved("example2.cfg");
    SimConfig c2;
    c2.x0 = -1.0;
    EXPECT_THROW(simulate_policy(*s2.ctx, s2.policy(), c2), ConfigError);
}

TEST(Simulate, HorizonRule) {
    const auto& s = solved("example1.cfg");
    EXPECT_NEAR(simulation_horizon(*s.ctx, SimConfig{}), std::log(1e6) / 0.2, 1e-12);
    EXPECT_DOUBLE_EQ(simulation_horizon(*solved("example3.cfg").ctx, SimConfig{}), 2000.0);
}
