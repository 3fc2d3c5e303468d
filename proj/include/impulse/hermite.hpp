#pragma once

// Hermite functions of negative degree and parabolic cylinder functions,
// from the integral representation
//
//   H_nu(z) = 1/Gamma(-nu) * int_0^inf exp(-t^2 - 2 t z) t^(-nu-1) dt,  nu < 0,
//   D_nu(z) = 2^(-nu/2) exp(-z^2/4) H_nu(z / sqrt 2).

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace impulse {

namespace detail {

inline constexpr double hermite_rel_tol = 1e-12;

} // namespace detail

/// H_nu(z) for nu < 0. The integrand is split at its mode: tanh-sinh
/// handles the t^(-nu-1) endpoint singularity on the left piece, adaptive
/// Gauss-Kronrod the Gaussian tail on the right. The tail is cut where the
/// integrand falls below the double range relative to its peak.
inline double hermite_fn(double nu, double z) {
    if (!(nu < 0.0)) throw std::domain_error("hermite_fn requires nu < 0");
    using boost::math::quadrature::gauss_kronrod;
    const double p = -nu;
    const double ts = std::max(0.0, -z) + 1.0 / (1.0 + std::fabs(z));
    const double tmax = std::max(0.0, -z) + 30.0 + p;
    auto g = [=](double t) { return std::exp(-t * t - 2.0 * t * z + (p - 1.0) * std::log(t)); };

    // tanh_sinh::integrate is non-const in this Boost version.
    thread_local boost::math::quadrature::tanh_sinh<double> left_rule;
    const double left = left_rule.integrate(g, 0.0, ts, detail::hermite_rel_tol);
    const double right = gauss_kronrod<double, 31>::integrate(g, ts, tmax, 12, detail::hermite_rel_tol);
    const double value = (left + right) / boost::math::tgamma(p);
    if (!std::isfinite(value)) throw std::range_error("hermite_fn: quadrature did not converge");
    return value;
}

/// dH_nu/dz = 2 nu H_{nu-1}(z).
inline double hermite_fn_derivative(double nu, double z) { return 2.0 * nu * hermite_fn(nu - 1.0, z); }

/// Parabolic cylinder function D_nu(z) for nu < 0.
inline double parabolic_cylinder(double nu, double z) {
    if (!(nu < 0.0)) throw std::domain_error("parabolic_cylinder requires nu < 0");
    return std::pow(2.0, -nu / 2.0) * std::exp(-z * z / 4.0) * hermite_fn(nu, z / std::sqrt(2.0));
}

} // namespace impulse
