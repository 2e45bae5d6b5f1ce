#pragma once

#include <gsl/gsl_multimin.h>
#include <gsl/gsl_qrng.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cglass/bessel.hpp"
#include "cglass/quadrature.hpp"

// Replica theory of the isotropic vector spin glass with Gaussian couplings of variance J^2/n.
// betaJ is written b throughout. The action Phi = -beta F / (n s) is minimized over the
// order parameters in the s -> 0 limit, which corresponds to maximizing F.

namespace cglass {

namespace rsdetail {

constexpr double kEps = 1e-14;

// upper limit of the scaled Rayleigh variable rho = r / sigma
inline double rho_max() { return std::sqrt(2.0) * std::sqrt(2.0 * std::log(1.0 / kEps)); }

// E[f(r)] for r Rayleigh with scale sigma (so r^2 has mean 2 sigma^2)
template <class F>
double rayleigh_mean(double sigma, F&& f, double tol = 1e-13) {
    auto g = [&](double rho) { return rho * std::exp(-0.5 * rho * rho) * f(sigma * rho); };
    return gl_adaptive(g, 0.0, rho_max(), tol, 4);
}

}  // namespace rsdetail

// Phi_RS(q) = -b^2/2 + b^2 q^2/2 + b^2 (1-q) + E[log I0(r)], r Rayleigh with sigma^2 = 2 q b^2
inline double rs_action(double b, double q) {
    if (!(b > 0)) throw std::invalid_argument("rs_action: betaJ must be > 0");
    if (q < 0 || q > 1) throw std::invalid_argument("rs_action: q must lie in [0, 1]");
    const double b2 = b * b;
    const double base = -0.5 * b2 + 0.5 * b2 * q * q + b2 * (1.0 - q);
    if (q == 0) return base;
    const double sigma = b * std::sqrt(2.0 * q);
    return base + rsdetail::rayleigh_mean(sigma, [](double r) { return log_bessel_i(0, r); });
}

// Per-spin free energy in units of J.
inline double rs_free_energy(double b, double q) { return -rs_action(b, q) / b; }

// dPhi/dq divided by q. The q -> 0 limit is b^2 (1 - b^2).
inline double rs_stationarity(double b, double q) {
    const double b2 = b * b;
    if (q == 0) return b2 * (1.0 - b2);
    const double sigma = b * std::sqrt(2.0 * q);
    const double m = rsdetail::rayleigh_mean(sigma, [](double r) { return r == 0 ? 0.0 : bessel_ratios(r).r1 * r; });
    return (b2 * (q - 1.0) + m / (2.0 * q)) / q;
}

struct RsSolution {
    double betaJ = 0.0;
    double q_star = 0.0;
    double action = 0.0;       // -beta F / n
    double free_energy = 0.0;  // F / n in units of J
};

inline RsSolution solve_rs(double b, double tol = 1e-8) {
    if (!(b > 0)) throw std::invalid_argument("solve_rs: betaJ must be > 0");
    // Minima of Phi in (0, 1] sit where the reduced stationarity function goes from - to +.
    // Scan a geometric grid, refine each bracket by bisection, and keep the lowest action,
    // with q = 0 as the reference candidate.
    constexpr int kGrid = 160;
    std::vector<double> qs(kGrid + 2), hs(kGrid + 2);
    qs[0] = 0.0;
    for (int k = 0; k <= kGrid; ++k) qs[k + 1] = std::pow(10.0, -8.0 + 8.0 * k / kGrid);
    for (std::size_t k = 0; k < qs.size(); ++k) hs[k] = rs_stationarity(b, qs[k]);
    RsSolution best{b, 0.0, rs_action(b, 0.0), 0.0};
    for (std::size_t k = 0; k + 1 < qs.size(); ++k) {
        if (!(hs[k] < 0 && hs[k + 1] >= 0)) continue;
        double lo = qs[k], hi = qs[k + 1];
        while (hi - lo > 0.25 * tol * std::max(hi, 1e-6)) {
            const double mid = 0.5 * (lo + hi);
            if (rs_stationarity(b, mid) < 0)
                lo = mid;
            else
                hi = mid;
        }
        const double q = 0.5 * (lo + hi);
        const double a = rs_action(b, q);
        if (a < best.action - 1e-13) best = {b, q, a, 0.0};
    }
    best.free_energy = -best.action / b;
    return best;
}

struct RepliconSpectrum {
    double betaJ = 0.0;
    double q_star = 0.0;
    double C1 = 0.0, C2 = 0.0, C3 = 0.0;
    double M1 = 0.0, M2 = 0.0, M3 = 0.0;
    double lambda_L = 0.0;  // longitudinal
    double lambda_R = 0.0;  // replicon
};

inline double replicon_lambda_L(double M1, double M2, double M3) { return M1 - 4.0 * M2 + 3.0 * M3; }
inline double replicon_lambda_R(double M1, double M2, double M3) { return M1 - 2.0 * M2 + M3; }

inline RepliconSpectrum replicon_at(double b, double q) {
    RepliconSpectrum out;
    out.betaJ = b;
    out.q_star = q;
    if (q == 0) {
        // the Rayleigh weight collapses onto r = 0 where I1 = I2 = 0
        out.C1 = 0.5;
    } else {
        const double sigma = b * std::sqrt(2.0 * q);
        const double q2 = q * q;
        out.C1 = rsdetail::rayleigh_mean(sigma, [](double r) {
                     const auto br = bessel_ratios(r);
                     return 0.5 + 0.5 * br.r2 * br.r2;
                 }) - q2;
        out.C2 = rsdetail::rayleigh_mean(sigma, [](double r) {
                     const auto br = bessel_ratios(r);
                     return 0.5 * br.r2 * br.r1 * br.r1 + 0.5 * br.r1 * br.r1;
                 }) - q2;
        out.C3 = rsdetail::rayleigh_mean(sigma, [](double r) {
                     const auto br = bessel_ratios(r);
                     return br.r1 * br.r1 * br.r1 * br.r1;
                 }) - q2;
    }
    const double b2 = b * b, b4 = b2 * b2;
    out.M1 = -8.0 * b2 + 16.0 * b4 * out.C1;
    out.M2 = 16.0 * b4 * out.C2;
    out.M3 = 16.0 * b4 * out.C3;
    out.lambda_L = replicon_lambda_L(out.M1, out.M2, out.M3);
    out.lambda_R = replicon_lambda_R(out.M1, out.M2, out.M3);
    return out;
}

inline RepliconSpectrum replicon(double b) {
    if (!(b > 0)) throw std::invalid_argument("replicon: betaJ must be > 0");
    return replicon_at(b, solve_rs(b).q_star);
}

namespace rsdetail {

// log E[exp(m log I0(r'))] for r' Rice distributed around r0 with per-component variance v.
// Rice density (r'/v) exp(-(r0^2 + r'^2)/2v) I0(r0 r'/v), evaluated through the scaled Bessel.
template <class G>
double log_rice_mean_exp(double r0, double v, G&& log_g, int panels = 4) {
    const double sd = std::sqrt(v);
    const double c = std::sqrt(2.0 * std::log(1.0 / kEps)) + 1.5;
    // log_g grows no faster than r', which tilts the Gaussian bump by at most v
    const double lo = std::max(0.0, r0 - c * sd);
    const double hi = r0 + c * sd + v;
    const double shift = log_g(std::max(r0, sd));
    auto f = [&](double rp) {
        if (rp <= 0) return 0.0;
        const double x = r0 * rp / v;
        const double lp = std::log(rp / v) - (r0 - rp) * (r0 - rp) / (2.0 * v) + log_bessel_i0e(x);
        return std::exp(lp + log_g(rp) - shift);
    };
    return shift + std::log(gl_composite(f, lo, hi, panels));
}

}  // namespace rsdetail

// Action of the k-step Parisi ansatz for k = 1 or 2.
//   qs = (q_0, ..., q_k) non-decreasing, ms = (m_1, ..., m_k) non-decreasing in (0, 1].
// Innermost g_k(r) = exp(b^2 (1 - q_k)) I0(r); g_{l-1}(r) = E_{v_l}[g_l(r')^{m_l / m_{l+1}}]
// with m_{k+1} = 1 and v_l = 2 b^2 (q_l - q_{l-1}); the last average is over r0 Rayleigh with
// sigma^2 = 2 b^2 q_0 of (1/m_1) log g_0(r0).
inline double krsb_action(double b, const std::vector<double>& qs, const std::vector<double>& ms, int panels = 4) {
    const std::size_t k = ms.size();
    if (k < 1 || k > 2 || qs.size() != k + 1) throw std::invalid_argument("krsb_action: need k in {1, 2}");
    for (std::size_t l = 0; l < qs.size(); ++l) {
        if (qs[l] < 0 || qs[l] > 1) throw std::invalid_argument("krsb_action: q outside [0, 1]");
        if (l > 0 && qs[l] < qs[l - 1]) throw std::invalid_argument("krsb_action: q must be non-decreasing");
    }
    for (std::size_t l = 0; l < k; ++l) {
        if (!(ms[l] > 0 && ms[l] <= 1)) throw std::invalid_argument("krsb_action: m outside (0, 1]");
        if (l > 0 && ms[l] < ms[l - 1]) throw std::invalid_argument("krsb_action: m must be non-decreasing");
    }
    const double b2 = b * b;
    double quad = 1.0 - qs[k] * qs[k];
    for (std::size_t l = 1; l <= k; ++l) quad += ms[l - 1] * (qs[l] * qs[l] - qs[l - 1] * qs[l - 1]);
    const double head = -0.5 * b2 * quad;

    // level l of the recursion, as log g_l
    std::function<double(std::size_t, double)> log_g = [&](std::size_t l, double r) -> double {
        if (l == k) return b2 * (1.0 - qs[k]) + log_bessel_i(0, r);
        const double expo = ms[l] / (l + 1 < k ? ms[l + 1] : 1.0);
        const double v = 2.0 * b2 * (qs[l + 1] - qs[l]);
        auto inner = [&](double rp) { return expo * log_g(l + 1, rp); };
        if (v < 1e-14) return inner(r);
        return rsdetail::log_rice_mean_exp(r, v, inner, panels);
    };
    const double m1 = ms[0];
    if (qs[0] == 0) return head + log_g(0, 0.0) / m1;
    const double sigma0 = b * std::sqrt(2.0 * qs[0]);
    auto outer = [&](double rho) { return rho * std::exp(-0.5 * rho * rho) * log_g(0, sigma0 * rho); };
    return head + gl_composite(outer, 0.0, rsdetail::rho_max(), 2 * panels) / m1;
}

inline double one_rsb_action(double b, double m, double q0, double q1, int panels = 4) {
    return krsb_action(b, {q0, q1}, {m}, panels);
}

struct OneRsbSolution {
    double betaJ = 0.0;
    double q0 = 0.0, q1 = 0.0, m = 1.0;
    double action = 0.0;
    double free_energy = 0.0;
    bool replica_symmetric = true;  // the RS saddle was not improved upon
};

struct OneRsbOptions {
    int starts = 16;
    double m_min = 1e-3;
    int max_iter = 800;
    double simplex_tol = 1e-7;
    double rs_margin = 1e-10;  // required action gain over RS to report broken symmetry
};

namespace rsdetail {

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct OneRsbMap {
    double b, m_min;
    // u = (u_m, u_ratio, u_q1) -> (m, q0, q1) with q0 = q1 * sigmoid(u_ratio)
    void decode(const double* u, double& m, double& q0, double& q1) const {
        m = m_min + (1.0 - m_min) * sigmoid(u[0]);
        q1 = sigmoid(u[2]);
        q0 = q1 * sigmoid(u[1]);
    }
};

inline double one_rsb_objective(const gsl_vector* x, void* params) {
    const auto* map = static_cast<const OneRsbMap*>(params);
    const double u[3] = {gsl_vector_get(x, 0), gsl_vector_get(x, 1), gsl_vector_get(x, 2)};
    double m, q0, q1;
    map->decode(u, m, q0, q1);
    const double a = one_rsb_action(map->b, m, q0, q1);
    return std::isfinite(a) ? a : std::numeric_limits<double>::max();
}

}  // namespace rsdetail

inline OneRsbSolution solve_1rsb(double b, const OneRsbOptions& opt = {}) {
    if (!(b > 0)) throw std::invalid_argument("solve_1rsb: betaJ must be > 0");
    const RsSolution rs = solve_rs(b);
    OneRsbSolution best;
    best.betaJ = b;
    best.q0 = best.q1 = rs.q_star;
    best.m = 1.0;
    best.action = rs.action;

    rsdetail::OneRsbMap map{b, opt.m_min};
    gsl_multimin_function fn{&rsdetail::one_rsb_objective, 3, &map};
    std::unique_ptr<gsl_qrng, decltype(&gsl_qrng_free)> qr(gsl_qrng_alloc(gsl_qrng_sobol, 3), &gsl_qrng_free);
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> mm(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3), &gsl_multimin_fminimizer_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(3), &gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(3), &gsl_vector_free);
    gsl_vector_set_all(step.get(), 0.5);

    double best_1rsb = std::numeric_limits<double>::infinity();
    double bm = 1.0, bq0 = 0.0, bq1 = 0.0;
    for (int s = 0; s < opt.starts; ++s) {
        double p[3];
        gsl_qrng_get(qr.get(), p);
        // starts spread over m in [0.02, 0.9], q0/q1 in [0.02, 0.9], q1 in [0.1, 0.95]
        const double m0 = 0.02 + 0.88 * p[0], ratio0 = 0.02 + 0.88 * p[1], q10 = 0.1 + 0.85 * p[2];
        gsl_vector_set(x.get(), 0, rsdetail::logit((m0 - opt.m_min) / (1.0 - opt.m_min)));
        gsl_vector_set(x.get(), 1, rsdetail::logit(ratio0));
        gsl_vector_set(x.get(), 2, rsdetail::logit(q10));
        gsl_multimin_fminimizer_set(mm.get(), &fn, x.get(), step.get());
        for (int it = 0; it < opt.max_iter; ++it) {
            if (gsl_multimin_fminimizer_iterate(mm.get())) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(mm.get()), opt.simplex_tol) == GSL_SUCCESS) break;
        }
        const double val = mm->fval;
        if (val < best_1rsb) {
            best_1rsb = val;
            const double u[3] = {gsl_vector_get(mm->x, 0), gsl_vector_get(mm->x, 1), gsl_vector_get(mm->x, 2)};
            map.decode(u, bm, bq0, bq1);
        }
    }
    if (best_1rsb < rs.action - opt.rs_margin) {
        best.q0 = bq0;
        best.q1 = bq1;
        best.m = bm;
        best.action = best_1rsb;
        best.replica_symmetric = false;
    }
    best.free_energy = -best.action / b;
    return best;
}

}  // namespace cglass
