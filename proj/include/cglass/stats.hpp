#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cglass {

inline double mean(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("mean: empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
}

inline double variance(const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / double(x.size());
}

// Kolmogorov survival function Q_KS(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)
inline double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double t = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 ? 2.0 : -2.0) * t;
        if (t < 1e-17) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

struct KsResult {
    double D = 0.0;
    double p_value = 1.0;
};

// One-sample test against a continuous CDF, with the Stephens small-sample correction.
inline KsResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf) {
    if (x.empty()) throw std::invalid_argument("ks_test: empty sample");
    std::sort(x.begin(), x.end());
    const double n = double(x.size());
    double D = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double F = cdf(x[i]);
        D = std::max({D, (i + 1) / n - F, F - i / n});
    }
    const double sn = std::sqrt(n);
    return {D, kolmogorov_q((sn + 0.12 + 0.11 / sn) * D)};
}

inline KsResult ks_test_2(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_test_2: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double D = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        D = std::max(D, std::abs(i / na - j / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {D, kolmogorov_q((ne + 0.12 + 0.11 / ne) * D)};
}

}  // namespace cglass
