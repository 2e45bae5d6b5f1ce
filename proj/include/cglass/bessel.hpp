#pragma once

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cglass {

// log I_nu(x) for integer nu >= 0 and x >= 0. Direct evaluation up to x = 20, the large-argument
// asymptotic series above, where I_nu(x) itself overflows long before the log does.
inline double log_bessel_i(int nu, double x) {
    if (x < 0) throw std::domain_error("log_bessel_i: x must be >= 0");
    if (x == 0) return nu == 0 ? 0.0 : -INFINITY;
    if (x <= 20.0) {
        if (nu > 0 && x < 1e-150) return nu * std::log(0.5 * x) - std::lgamma(nu + 1.0);
        return std::log(boost::math::cyl_bessel_i(nu, x));
    }
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 30; ++k) {
        const double a = 2.0 * k - 1.0;
        term *= -(mu - a * a) / (k * 8.0 * x);
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

// log(e^{-x} I_0(x)), the exponentially scaled form
inline double log_bessel_i0e(double x) { return log_bessel_i(0, x) - x; }

struct BesselRatios {
    double r1 = 0.0;  // I1/I0
    double r2 = 0.0;  // I2/I0
};

inline BesselRatios bessel_ratios(double x) {
    if (x == 0) return {};
    const double l0 = log_bessel_i(0, x);
    return {std::exp(log_bessel_i(1, x) - l0), std::exp(log_bessel_i(2, x) - l0)};
}

}  // namespace cglass
