#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cglass/couplings.hpp"
#include "cglass/rng.hpp"

namespace cglass {

inline double wrap_angle(double t) {
    constexpr double tau = 2.0 * std::numbers::pi;
    t = std::fmod(t, tau);
    if (t < 0) t += tau;
    if (t >= tau) t -= tau;
    return t;
}

struct SpinConfiguration {
    std::vector<double> thetas;
    std::vector<double> radii;  // empty means all radii are 1

    SpinConfiguration() = default;
    explicit SpinConfiguration(std::vector<double> t) : thetas(std::move(t)) {}

    std::size_t size() const { return thetas.size(); }
    double radius(std::size_t i) const { return radii.empty() ? 1.0 : radii[i]; }
    bool unit_radii() const {
        for (double r : radii)
            if (r != 1.0) return false;
        return true;
    }
};

// theta -> theta + pi on every listed vertex
inline SpinConfiguration flip(const SpinConfiguration& s, const std::vector<int>& idx) {
    SpinConfiguration out = s;
    for (int i : idx) out.thetas.at(i) = wrap_angle(out.thetas[i] + std::numbers::pi);
    return out;
}

inline SpinConfiguration global_flip(const SpinConfiguration& s) {
    SpinConfiguration out = s;
    for (auto& t : out.thetas) t = wrap_angle(t + std::numbers::pi);
    return out;
}

inline SpinConfiguration negate(const SpinConfiguration& s) {
    SpinConfiguration out = s;
    for (auto& t : out.thetas) t = wrap_angle(-t);
    return out;
}

namespace detail {
inline void check_size(const CouplingSet& c, const SpinConfiguration& s) {
    if (static_cast<Eigen::Index>(s.size()) != c.size())
        throw std::invalid_argument("spin configuration has " + std::to_string(s.size()) +
                                    " angles, couplings have n = " + std::to_string(c.size()));
}
}  // namespace detail

inline double energy_angle_only(const CouplingSet& c, const SpinConfiguration& s) {
    detail::check_size(c, s);
    if (!s.unit_radii()) throw std::invalid_argument("energy_angle_only: radii must all be 1");
    const auto n = c.size();
    Vec cs(n), sn(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cs(i) = std::cos(s.thetas[i]);
        sn(i) = std::sin(s.thetas[i]);
    }
    // cos(a+b) = ca cb - sa sb, sin(a+b) = sa cb + ca sb
    return -(cs.dot(c.J_non * cs) - sn.dot(c.J_non * sn) + 2.0 * sn.dot(c.K * cs));
}

// Semiclassical energy with N normalized out; field is the transverse-field coefficient.
inline double energy_semiclassical(const CouplingSet& c, const SpinConfiguration& s, const std::vector<double>& sz,
                                   double field) {
    detail::check_size(c, s);
    const auto n = c.size();
    if (static_cast<Eigen::Index>(sz.size()) != n) throw std::invalid_argument("energy_semiclassical: sz length");
    Vec sx(n), sy(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = s.radius(i);
        sx(i) = r * std::cos(s.thetas[i]);
        sy(i) = r * std::sin(s.thetas[i]);
        const double norm2 = sx(i) * sx(i) + sy(i) * sy(i) + sz[i] * sz[i];
        if (std::sqrt(norm2) > 1.0 + 1e-9)
            throw std::invalid_argument("energy_semiclassical: spin " + std::to_string(i) + " outside the unit sphere");
    }
    double e = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) e += field * sz[i] - c.J_local(i, i) * (sx(i) * sx(i) + sy(i) * sy(i));
    e -= sx.dot(c.J_non * sx) - sy.dot(c.J_non * sy) + 2.0 * sx.dot(c.K * sy);
    return e;
}

// Energy of spin i as a function of its own angle, all other spins held fixed:
//   E_i(t) = -(u cos t + v sin t) - (p cos 2t + q sin 2t) + const
struct LocalField {
    double u = 0, v = 0, p = 0, q = 0;

    double operator()(double t) const {
        return -(u * std::cos(t) + v * std::sin(t)) - (p * std::cos(2 * t) + q * std::sin(2 * t));
    }

    double argmin() const {
        // closed-form optimum of each harmonic, then Newton on the full function
        double best_t = std::atan2(v, u), best_e = (*this)(best_t);
        const double cands[] = {best_t, 0.5 * std::atan2(q, p), 0.5 * std::atan2(q, p) + std::numbers::pi};
        for (double t0 : cands) {
            double t = t0;
            for (int it = 0; it < 30; ++it) {
                const double d1 = u * std::sin(t) - v * std::cos(t) + 2 * (p * std::sin(2 * t) - q * std::cos(2 * t));
                const double d2 = u * std::cos(t) + v * std::sin(t) + 4 * (p * std::cos(2 * t) + q * std::sin(2 * t));
                if (!(d2 > 0)) break;
                const double step = d1 / d2;
                t -= step;
                if (std::abs(step) < 1e-15) break;
            }
            const double e = (*this)(t);
            if (e < best_e) {
                best_e = e;
                best_t = t;
            }
        }
        return wrap_angle(best_t);
    }
};

inline LocalField local_field(const CouplingSet& c, const std::vector<double>& cs, const std::vector<double>& sn,
                              Eigen::Index i) {
    const auto n = c.size();
    double A = 0, B = 0, C = 0, D = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        A += c.J_non(i, j) * cs[j];
        B += c.J_non(i, j) * sn[j];
        C += c.K(i, j) * cs[j];
        D += c.K(i, j) * sn[j];
    }
    return {2.0 * (A + D), 2.0 * (C - B), c.J_non(i, i), c.K(i, i)};
}

struct GroundState {
    SpinConfiguration config;
    double E_gs = 0.0;
    std::vector<double> restart_energies;
};

struct AnnealParams {
    double T_start = 2.0;
    double T_end = 1e-3;
    long long proposals_per_spin = 20000;
    double proposal_std = std::numbers::pi / 8;
    int polish_iterations = 200;
};

// Per-spin exact minimization sweeps. Never increases the energy.
inline void polish(const CouplingSet& c, SpinConfiguration& s, int iterations) {
    const auto n = c.size();
    std::vector<double> cs(n), sn(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cs[i] = std::cos(s.thetas[i]);
        sn[i] = std::sin(s.thetas[i]);
    }
    for (int it = 0; it < iterations; ++it) {
        double moved = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const LocalField f = local_field(c, cs, sn, i);
            const double t = f.argmin();
            if (f(t) < f(s.thetas[i])) {
                moved = std::max(moved, std::abs(std::remainder(t - s.thetas[i], 2 * std::numbers::pi)));
                s.thetas[i] = t;
                cs[i] = std::cos(t);
                sn[i] = std::sin(t);
            }
        }
        if (moved < 1e-15) break;
    }
}

inline GroundState ground_state(const CouplingSet& c, std::uint64_t seed, int restarts,
                                const AnnealParams& ap = {}) {
    if (restarts < 1) throw std::invalid_argument("ground_state: restarts must be >= 1");
    const auto n = c.size();
    GroundState best;
    best.E_gs = std::numeric_limits<double>::infinity();
    const long long total = ap.proposals_per_spin * n;
    const double ratio = std::pow(ap.T_end / ap.T_start, 1.0 / double(std::max<long long>(total - 1, 1)));
    for (int r = 0; r < restarts; ++r) {
        Rng rng = make_stream(seed, {kAnneal, std::uint64_t(r)});
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        std::normal_distribution<double> prop(0.0, ap.proposal_std);
        SpinConfiguration s;
        s.thetas.resize(n);
        for (auto& t : s.thetas) t = 2 * std::numbers::pi * uni(rng);
        std::vector<double> cs(n), sn(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            cs[i] = std::cos(s.thetas[i]);
            sn[i] = std::sin(s.thetas[i]);
        }
        double T = ap.T_start;
        for (long long k = 0; k < total; ++k, T *= ratio) {
            const Eigen::Index i = pick(rng);
            const LocalField f = local_field(c, cs, sn, i);
            const double t_new = wrap_angle(s.thetas[i] + prop(rng));
            const double dE = f(t_new) - f(s.thetas[i]);
            if (dE <= 0 || uni(rng) < std::exp(-dE / T)) {
                s.thetas[i] = t_new;
                cs[i] = std::cos(t_new);
                sn[i] = std::sin(t_new);
            }
        }
        polish(c, s, ap.polish_iterations);
        const double e = energy_angle_only(c, s);
        best.restart_energies.push_back(e);
        if (e < best.E_gs) {
            best.E_gs = e;
            best.config = s;
        }
    }
    return best;
}

struct EnergyReport {
    double E = 0.0;
    double E_gs = 0.0;
    double normalized = 0.0;
};

inline EnergyReport energy_report(const CouplingSet& c, const SpinConfiguration& s, double E_gs) {
    const double e = energy_angle_only(c, s);
    return {e, E_gs, e / std::abs(E_gs)};
}

struct TemperatureFit {
    double T_hat = 0.0;
    double std_error = 0.0;
};

// Maximum-likelihood scale of a Gamma(n/2, T) law for E - E_gs.
inline TemperatureFit fit_effective_temperature(const std::vector<double>& energies, double E_gs, int n) {
    if (energies.size() < 10) throw std::invalid_argument("fit_effective_temperature: need at least 10 samples");
    if (n < 1) throw std::invalid_argument("fit_effective_temperature: n must be >= 1");
    double sum = 0.0;
    for (double e : energies) {
        if (e < E_gs - 1e-9) throw std::invalid_argument("fit_effective_temperature: energy below E_gs");
        sum += std::max(e - E_gs, 0.0);
    }
    const double m = double(energies.size());
    TemperatureFit f;
    f.T_hat = (2.0 / n) * sum / m;
    f.std_error = f.T_hat / std::sqrt(m * n / 2.0);
    return f;
}

}  // namespace cglass
