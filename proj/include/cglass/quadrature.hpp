#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <stdexcept>

namespace cglass {

// Composite Gauss-Legendre over [a, b] with `panels` equal panels of 20 nodes.
template <class F>
double gl_composite(F&& f, double a, double b, int panels) {
    using Q = boost::math::quadrature::gauss<double, 20>;
    const double h = (b - a) / panels;
    double s = 0.0;
    for (int p = 0; p < panels; ++p) s += Q::integrate(f, a + p * h, a + (p + 1) * h);
    return s;
}

// Doubles the panel count until two successive estimates agree to `tol` (absolute).
template <class F>
double gl_adaptive(F&& f, double a, double b, double tol = 1e-13, int start_panels = 2, int max_panels = 1024) {
    double prev = gl_composite(f, a, b, start_panels);
    for (int p = 2 * start_panels; p <= max_panels; p *= 2) {
        const double cur = gl_composite(f, a, b, p);
        if (std::abs(cur - prev) <= tol * std::max(1.0, std::abs(cur))) return cur;
        prev = cur;
    }
    throw std::runtime_error("gl_adaptive: quadrature did not converge");
}

}  // namespace cglass
