#include "test_support.hpp"

#include <gtest/gtest.h>

#include <boost/math/special_functions/erf.hpp>

#include <numbers>

using namespace impulse;

namespace {

double d_minus_one(double z) {
    return std::exp(z * z / 4.0) * std::sqrt(std::numbers::pi / 2.0) * boost::math::erfc(z / std::numbers::sqrt2);
}

} // namespace

TEST(Special, HermiteAtZero) {
    EXPECT_NEAR(hermite_fn(-1.0, 0.0), std::sqrt(std::numbers::pi) / 2.0, 1e-13);
    // H_{-2}(0) = Gamma(1)/(2 Gamma(2)) = 1/2.
    EXPECT_NEAR(hermite_fn(-2.0, 0.0), 0.5, 1e-13);
}

TEST(Special, ParabolicCylinderMinusOne) {
    EXPECT_NEAR(parabolic_cylinder(-1.0, 0.0), std::sqrt(std::numbers::pi / 2.0), 1e-13);
    EXPECT_NEAR(parabolic_cylinder(-1.0, 1.0), 0.510644, 1e-6);
    for (const double z : linspace(-3.0, 3.0, 61))
        EXPECT_LE(impulse::test::rel_err(parabolic_cylinder(-1.0, z), d_minus_one(z)), 1e-8) << z;
}

TEST(Special, DerivativeIdentity) {
    constexpr double h = 1e-4;
    const double nu = -1.05, z = 0.5;
    const double fd = (hermite_fn(nu, z + h) - hermite_fn(nu, z - h)) / (2.0 * h);
    EXPECT_NEAR(fd, 2.0 * nu * hermite_fn(nu - 1.0, z), 1e-5);
    EXPECT_DOUBLE_EQ(hermite_fn_derivative(nu, z), 2.0 * nu * hermite_fn(nu - 1.0, z));
}

TEST(Special, PositiveAndDecreasing) {
    for (const double nu : {-0.3, -1.0, -1.9, -4.5}) {
        double prev = inf_v;
        for (const double z : linspace(-4.0, 8.0, 49)) {
            const double h = hermite_fn(nu, z);
            EXPECT_GT(h, 0.0);
            EXPECT_LT(h, prev) << nu << " " << z;
            prev = h;
        }
    }
}

TEST(Special, ContinuousAcrossZero) {
    for (const double nu : {-0.5, -1.5}) {
        const double l = hermite_fn(nu, -1e-9), r = hermite_fn(nu, 1e-9);
        EXPECT_NEAR(l, r, 1e-8);
    }
}

TEST(Special, NonNegativeDegreeRejected) {
    EXPECT_THROW(hermite_fn(0.0, 1.0), std::domain_error);
    EXPECT_THROW(parabolic_cylinder(0.5, 1.0), std::domain_error);
}
