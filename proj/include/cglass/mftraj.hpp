#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/parallel.hpp"
#include "cglass/rng.hpp"

// Stochastic mean-field dynamics of the three-level (BEC, cos DW, sin DW) vertices in the
// Gell-Mann basis. Components are stored per atom, lambda_k = <Lambda^(k)> / N, so the
// normal state is lambda_3 = 1, lambda_8 = 1/sqrt(3). Times are in ms, rates in rad/ms.

namespace cglass {

namespace phys {
constexpr double hbar = 1.054571817e-34;
constexpr double amu = 1.66053906660e-27;
constexpr double m_rb87 = 86.909180527 * amu;
constexpr double lambda_d2 = 780.241e-9;

// recoil energy hbar k^2 / 2m as an angular frequency in rad/ms
inline double recoil_rate() {
    const double k = 2.0 * std::numbers::pi / lambda_d2;
    return hbar * k * k / (2.0 * m_rb87) * 1e-3;
}
inline double two_pi_khz(double khz) { return 2.0 * std::numbers::pi * khz; }  // rad/ms
}  // namespace phys

constexpr int kGm = 8;
using GmVec = std::array<double, kGm>;

struct TrajectoryState {
    std::vector<GmVec> lam;  // per vertex, index k-1 holds lambda_k
    std::vector<double> atoms;

    std::size_t size() const { return lam.size(); }
};

inline TrajectoryState normal_state(std::size_t n, double atoms) {
    TrajectoryState s;
    s.lam.assign(n, GmVec{});
    for (auto& v : s.lam) {
        v[2] = 1.0;
        v[7] = 1.0 / std::sqrt(3.0);
    }
    s.atoms.assign(n, atoms);
    return s;
}

inline double casimir(const GmVec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

// Pump power relative to threshold, piecewise linear in time.
struct PumpSegment {
    double t0 = 0.0, t1 = 0.0;
    double p0 = 0.0, p1 = 0.0;
};

struct PumpSchedule {
    std::vector<PumpSegment> segments;
    double readout_start = 0.0;
    double readout_duration = 0.0;

    double t_begin() const { return segments.front().t0; }
    double t_end() const { return segments.back().t1; }

    void validate() const {
        if (segments.empty()) throw std::invalid_argument("PumpSchedule: no segments");
        for (std::size_t k = 0; k < segments.size(); ++k) {
            const auto& s = segments[k];
            if (!(s.t1 > s.t0)) throw std::invalid_argument("PumpSchedule: segment with t1 <= t0");
            if (s.p0 < 0 || s.p1 < 0) throw std::invalid_argument("PumpSchedule: negative pump power");
            if (k > 0 && std::abs(s.t0 - segments[k - 1].t1) > 1e-12)
                throw std::invalid_argument("PumpSchedule: segments are not contiguous");
        }
        if (readout_duration <= 0 || readout_start < t_begin() - 1e-12 ||
            readout_start + readout_duration > t_end() + 1e-12)
            throw std::invalid_argument("PumpSchedule: readout window outside the simulated span");
    }

    double power(double t) const {
        for (const auto& s : segments)
            if (t < s.t1 || &s == &segments.back()) {
                const double f = std::clamp((t - s.t0) / (s.t1 - s.t0), 0.0, 1.0);
                return s.p0 + f * (s.p1 - s.p0);
            }
        return segments.back().p1;
    }

    double max_power() const {
        double m = 0.0;
        for (const auto& s : segments) m = std::max({m, s.p0, s.p1});
        return m;
    }

    // Linear ramp to 1.25 over 1.25 ms, then 2.5 for a 0.5 ms readout.
    static PumpSchedule experiment() {
        PumpSchedule s;
        s.segments = {{0.0, 1.25, 0.0, 1.25}, {1.25, 1.75, 2.5, 2.5}};
        s.readout_start = 1.25;
        s.readout_duration = 0.5;
        return s;
    }

    // Ramp at unit slope per ms up to `cap`, hold there for `hold` ms, read out over the last `readout` ms.
    static PumpSchedule capped(double cap, double hold = 1.0, double readout = 0.5) {
        PumpSchedule s;
        s.segments = {{0.0, cap, 0.0, cap}, {cap, cap + hold, cap, cap}};
        s.readout_start = cap + hold - readout;
        s.readout_duration = readout;
        return s;
    }

    static PumpSchedule constant(double p, double duration, double readout) {
        PumpSchedule s;
        s.segments = {{0.0, duration, p, p}};
        s.readout_start = duration - readout;
        s.readout_duration = readout;
        return s;
    }
};

// Drift scheme; the noise increment is Ito (left point) in both.
enum class Integrator { rk4, euler };

struct TrajectoryParams {
    double dt = 5e-4;                             // ms
    double recoil = phys::recoil_rate();          // E_r, rad/ms
    double delta_a = -phys::two_pi_khz(97.3e6);  // Delta_A, rad/ms
    // Omega_c^2 in (rad/ms)^2; the default puts the light shift at threshold at E_r / 8
    double omega_c2 = phys::two_pi_khz(97.3e6) * phys::recoil_rate();
    double kappa_over_deltaC = 137.0 / 60e3;     // kappa = 2pi 137 kHz, Delta_C = -2pi 60 MHz
    double atoms = 2.3e5;
    double perturbation_std = 0.01;
    bool noise = true;
    Integrator integrator = Integrator::rk4;
    double superradiant_threshold = 0.05;  // per-atom readout amplitude
    double max_rate_dt = 0.05;             // bound on dt times the fastest linear rate
    std::uint64_t seed = 0;

    void validate() const {
        if (!(dt > 0)) throw std::invalid_argument("TrajectoryParams: dt must be > 0");
        if (kappa_over_deltaC < 0) throw std::invalid_argument("TrajectoryParams: kappa/|Delta_C| must be >= 0");
        if (perturbation_std < 0) throw std::invalid_argument("TrajectoryParams: perturbation_std must be >= 0");
        if (!(atoms > 0)) throw std::invalid_argument("TrajectoryParams: atoms must be > 0");
        if (!(recoil > 0)) throw std::invalid_argument("TrajectoryParams: recoil must be > 0");
        if (delta_a == 0) throw std::invalid_argument("TrajectoryParams: Delta_A must be nonzero");
    }

    // E_r + p Omega_c^2 / (8 Delta_A); twice this is the transverse-field coefficient.
    double field(double p) const { return recoil + p * omega_c2 / (8.0 * delta_a); }
};

struct LindbladChannels {
    Vec eig_c, eig_s;
    Mat vec_c, vec_s;  // columns are eigenvectors
};

inline LindbladChannels lindblad_decompose(const CouplingSet& c, double tol = 1e-10) {
    LindbladChannels L;
    auto decompose = [&](const Mat& A, Vec& e, Mat& v, const char* name) {
        Eigen::SelfAdjointEigenSolver<Mat> es(A);
        if (es.info() != Eigen::Success) throw std::runtime_error("lindblad_decompose: eigensolver failed");
        e = es.eigenvalues();
        v = es.eigenvectors();
        const double lmax = std::max(e.cwiseAbs().maxCoeff(), 1e-300);
        for (Eigen::Index k = 0; k < e.size(); ++k) {
            if (e(k) < -tol * lmax)
                throw std::invalid_argument(std::string("lindblad_decompose: ") + name +
                                            " has a negative eigenvalue " + std::to_string(e(k)));
            if (e(k) < 0) e(k) = 0.0;
        }
    };
    decompose(c.J_c(), L.eig_c, L.vec_c, "J^c");
    decompose(c.J_s(), L.eig_s, L.vec_s, "J^s");
    return L;
}

// Coupling matrices in rad/ms as seen by the equations of motion at unit pump power. The global
// scale is fixed by requiring the linearized normal-state dynamics to be marginal at p = 1,
// i.e. 2 N g mu_max = field(1) with mu_max the top eigenvalue of the threshold matrix.
struct ScaledCouplings {
    Mat Jc, Js, K;
    Vec jc_diag, js_diag;
    LindbladChannels channels;  // of the scaled matrices
    double g = 0.0;             // physical couplings = p * g * CouplingSet
    double mu_max = 0.0;
};

inline ScaledCouplings scale_couplings(const CouplingSet& c, const TrajectoryParams& tp) {
    const Threshold th = threshold(c);
    if (!(th.lambda_max > 0)) throw std::invalid_argument("mftraj: threshold matrix has no positive eigenvalue");
    const double f1 = tp.field(1.0);
    if (!(f1 > 0)) throw std::invalid_argument("mftraj: transverse field at threshold must be positive");
    ScaledCouplings s;
    s.mu_max = th.lambda_max;
    s.g = f1 / (2.0 * tp.atoms * th.lambda_max);
    s.Jc = s.g * c.J_c();
    s.Js = s.g * c.J_s();
    s.K = s.g * c.K;
    s.jc_diag = s.Jc.diagonal();
    s.js_diag = s.Js.diagonal();
    CouplingSet sc;
    sc.J_local = s.g * c.J_local;
    sc.J_non = s.g * c.J_non;
    sc.K = s.K;
    s.channels = lindblad_decompose(sc);
    return s;
}

// Fastest normal-state oscillation or growth rate at pump power p.
inline double max_linear_rate(const ScaledCouplings& sc, const TrajectoryParams& tp, double p, double atoms) {
    CouplingSet tmp;
    tmp.J_non = 0.5 * (sc.Jc - sc.Js);
    tmp.J_local = 0.5 * (sc.Jc + sc.Js);
    tmp.K = sc.K;
    const Threshold th = threshold(tmp);
    const double F = 2.0 * tp.field(p);
    double r = std::abs(F);
    for (Eigen::Index k = 0; k < th.eigvals.size(); ++k)
        r = std::max(r, std::sqrt(std::abs(F * (F - 4.0 * atoms * p * th.eigvals(k)))));
    return r;
}

struct Drift {
    std::vector<GmVec> d;
};

// Deterministic right-hand side at pump p. Coherent terms follow the mean-field Hamiltonian flow;
// dissipative terms carry kappa/|Delta_C| and the diagonal Lindblad weights.
inline void mf_drift(const TrajectoryState& s, const ScaledCouplings& sc, const TrajectoryParams& tp, double p,
                     std::vector<GmVec>& out) {
    const std::size_t n = s.size();
    out.resize(n);
    const double F = 2.0 * tp.field(p);
    const double kd = tp.kappa_over_deltaC * p;
    const double r3 = std::sqrt(3.0);
    Vec l1(n), l4(n);
    for (std::size_t k = 0; k < n; ++k) {
        l1(k) = s.lam[k][0] * s.atoms[k];
        l4(k) = s.lam[k][3] * s.atoms[k];
    }
    const Vec tc = p * (sc.Jc * l1 + sc.K * l4);
    const Vec ts = p * (sc.Js * l4 + sc.K * l1);
    for (std::size_t i = 0; i < n; ++i) {
        const GmVec& L = s.lam[i];
        GmVec& D = out[i];
        const double c = tc(i), t = ts(i);
        const double jc = sc.jc_diag(i) * kd, js = sc.js_diag(i) * kd;
        // each {T <Lambda>} + c.c. is twice the real product
        D[0] = F * L[1] - 2.0 * t * L[6] - js * L[0];
        D[1] = -F * L[0] + 2.0 * (2.0 * c * L[2] - t * L[5]) - (4.0 * jc + js) * L[1];
        D[2] = -2.0 * (2.0 * c * L[1] + t * L[4]) - (4.0 * jc + js) * L[2] - r3 * js * L[7];
        D[3] = F * L[4] + 2.0 * c * L[6] - jc * L[3];
        D[4] = -F * L[3] - 2.0 * (c * L[5] - t * (L[2] + r3 * L[7])) - (jc + 4.0 * js) * L[4];
        D[5] = 2.0 * (c * L[4] + t * L[1]) - (jc + js) * L[5];
        D[6] = -2.0 * (c * L[3] - t * L[0]) - (jc + js) * L[6];
        D[7] = -2.0 * r3 * t * L[4] - js * (r3 * L[2] + 3.0 * L[7]);
    }
}

// Noise coefficients: d lambda_i = B_c(i) dS_ci + B_s(i) dS_si.
inline void mf_noise_coeffs(const GmVec& L, GmVec& bc, GmVec& bs) {
    const double r3 = std::sqrt(3.0);
    bc = {0.0, -2.0 * L[2], 2.0 * L[1], -L[6], L[5], -L[4], L[3], 0.0};
    bs = {L[6], L[5], L[4], 0.0, -(L[2] + r3 * L[7]), -L[1], -L[0], r3 * L[4]};
}

// dS_ai = sqrt(2 kappa/|Delta_C|) sum_k sqrt(lambda_k^a) Im(dW_ak) (v_k^a)_i with unit-variance complex dW.
inline void sample_dS(const ScaledCouplings& sc, const TrajectoryParams& tp, double p, double dt, Rng& rng, Vec& dSc,
                      Vec& dSs) {
    const auto n = sc.Jc.rows();
    std::normal_distribution<double> g(0.0, std::sqrt(0.5 * dt));
    const double amp = std::sqrt(2.0 * tp.kappa_over_deltaC * p);
    Vec wc(n), ws(n);
    for (Eigen::Index k = 0; k < n; ++k) wc(k) = std::sqrt(sc.channels.eig_c(k)) * g(rng);
    for (Eigen::Index k = 0; k < n; ++k) ws(k) = std::sqrt(sc.channels.eig_s(k)) * g(rng);
    dSc = amp * (sc.channels.vec_c * wc);
    dSs = amp * (sc.channels.vec_s * ws);
}

inline TrajectoryState init_state(const CouplingSet& c, const TrajectoryParams& tp, Rng& rng) {
    const auto n = std::size_t(c.size());
    TrajectoryState s = normal_state(n, tp.atoms);
    std::normal_distribution<double> g(0.0, tp.perturbation_std / std::sqrt(2.0));
    using C = std::complex<double>;
    for (std::size_t i = 0; i < n; ++i) {
        const C x(g(rng), g(rng)), y(g(rng), g(rng)), z(g(rng), g(rng));
        C psi[3] = {1.0 - x, y, z};
        const double nrm = std::sqrt(std::norm(psi[0]) + std::norm(psi[1]) + std::norm(psi[2]));
        for (auto& a : psi) a /= nrm;
        // <lambda_k> = psi^dagger lambda_k psi
        const C a01 = std::conj(psi[0]) * psi[1], a02 = std::conj(psi[0]) * psi[2], a12 = std::conj(psi[1]) * psi[2];
        const double n0 = std::norm(psi[0]), n1 = std::norm(psi[1]), n2 = std::norm(psi[2]);
        GmVec& v = s.lam[i];
        v[0] = 2.0 * a01.real();
        v[1] = 2.0 * a01.imag();
        v[2] = n0 - n1;
        v[3] = 2.0 * a02.real();
        v[4] = 2.0 * a02.imag();
        v[5] = 2.0 * a12.real();
        v[6] = 2.0 * a12.imag();
        v[7] = (n0 + n1 - 2.0 * n2) / std::sqrt(3.0);
    }
    return s;
}

// Semiclassical spin components of a state: S^x = lambda_1, S^y = lambda_4,
// S^z = 1/3 - (lambda_3 + lambda_8/sqrt 3).
inline void spin_components(const TrajectoryState& s, SpinConfiguration& cfg, std::vector<double>& sz) {
    const std::size_t n = s.size();
    cfg.thetas.resize(n);
    cfg.radii.resize(n);
    sz.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = s.lam[i][0], y = s.lam[i][3];
        cfg.thetas[i] = wrap_angle(std::atan2(y, x));
        cfg.radii[i] = std::hypot(x, y);
        sz[i] = 1.0 / 3.0 - (s.lam[i][2] + s.lam[i][7] / std::sqrt(3.0));
    }
}

// Mean-field energy per atom at pump p, which the coherent flow conserves:
// eps sum S^z - N p (S^x J^c S^x + S^y J^s S^y + 2 S^x K S^y), with J scaled as in the EOM.
inline double mf_energy(const TrajectoryState& s, const ScaledCouplings& sc, const TrajectoryParams& tp, double p) {
    const auto n = Eigen::Index(s.size());
    Vec sx(n), sy(n);
    double sz = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const GmVec& L = s.lam[std::size_t(i)];
        sx(i) = L[0];
        sy(i) = L[3];
        sz += 1.0 / 3.0 - (L[2] + L[7] / std::sqrt(3.0));
    }
    const double N = s.atoms.empty() ? tp.atoms : s.atoms[0];
    return tp.field(p) * sz - N * p * (sx.dot(sc.Jc * sx) + sy.dot(sc.Js * sy) + 2.0 * sx.dot(sc.K * sy));
}

struct StepWorkspace {
    std::vector<GmVec> k1, k2, k3, k4;
    TrajectoryState tmp;
    Vec dSc, dSs;
};

// One step: classical RK4 (or forward Euler) for the drift, plus the Ito noise increment
// evaluated at the left point.
inline void step(TrajectoryState& s, const ScaledCouplings& sc, const PumpSchedule& sched, const TrajectoryParams& tp,
                 double t, Rng& rng, StepWorkspace& w) {
    const double dt = tp.dt;
    const std::size_t n = s.size();
    const double p0 = sched.power(t), ph = sched.power(t + 0.5 * dt), p1 = sched.power(t + dt);
    auto axpy = [&](const TrajectoryState& base, const std::vector<GmVec>& k, double h) {
        w.tmp.atoms = base.atoms;
        w.tmp.lam.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < kGm; ++a) w.tmp.lam[i][a] = base.lam[i][a] + h * k[i][a];
    };
    const bool rk4 = tp.integrator == Integrator::rk4;
    mf_drift(s, sc, tp, p0, w.k1);
    if (rk4) {
        axpy(s, w.k1, 0.5 * dt);
        mf_drift(w.tmp, sc, tp, ph, w.k2);
        axpy(s, w.k2, 0.5 * dt);
        mf_drift(w.tmp, sc, tp, ph, w.k3);
        axpy(s, w.k3, dt);
        mf_drift(w.tmp, sc, tp, p1, w.k4);
    }
    const bool noisy = tp.noise && tp.kappa_over_deltaC > 0 && p0 > 0;
    if (noisy) sample_dS(sc, tp, p0, dt, rng, w.dSc, w.dSs);
    for (std::size_t i = 0; i < n; ++i) {
        GmVec bc{}, bs{};
        if (noisy) mf_noise_coeffs(s.lam[i], bc, bs);
        for (int a = 0; a < kGm; ++a) {
            double v = s.lam[i][a];
            if (rk4)
                v += dt / 6.0 * (w.k1[i][a] + 2.0 * w.k2[i][a] + 2.0 * w.k3[i][a] + w.k4[i][a]);
            else
                v += dt * w.k1[i][a];
            if (noisy) v += bc[a] * w.dSc(i) + bs[a] * w.dSs(i);
            if (!std::isfinite(v))
                throw std::runtime_error("mftraj step: non-finite state at t = " + std::to_string(t) +
                                         " ms; reduce dt");
            s.lam[i][a] = v;
        }
    }
}

struct TrajectoryResult {
    SpinConfiguration config;
    std::vector<double> amplitude;  // per-vertex |time average of lambda_1 + i lambda_4|
    double mean_amplitude = 0.0;
    bool superradiant = false;
};

inline TrajectoryResult run_trajectory_scaled(const CouplingSet& c, const ScaledCouplings& sc,
                                              const PumpSchedule& sched, const TrajectoryParams& tp, Rng& rng) {
    TrajectoryState s = init_state(c, tp, rng);
    const std::size_t n = s.size();
    const double t0 = sched.t_begin(), t1 = sched.t_end();
    const long long steps = (long long)std::llround((t1 - t0) / tp.dt);
    std::vector<std::complex<double>> acc(n);
    long long samples = 0;
    StepWorkspace w;
    const double r0 = sched.readout_start, r1 = sched.readout_start + sched.readout_duration;
    for (long long k = 0; k < steps; ++k) {
        const double t = t0 + k * tp.dt;
        step(s, sc, sched, tp, t, rng, w);
        const double tn = t + tp.dt;
        if (tn > r0 + 1e-12 && tn <= r1 + 1e-12) {
            for (std::size_t i = 0; i < n; ++i) acc[i] += std::complex<double>(s.lam[i][0], s.lam[i][3]);
            ++samples;
        }
    }
    TrajectoryResult r;
    r.config.thetas.resize(n);
    r.amplitude.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = samples ? acc[i] / double(samples) : std::complex<double>{};
        r.config.thetas[i] = wrap_angle(std::arg(z));
        r.amplitude[i] = std::abs(z);
        r.mean_amplitude += r.amplitude[i] / double(n);
    }
    r.superradiant = r.mean_amplitude >= tp.superradiant_threshold;
    return r;
}

inline void check_step_size(const ScaledCouplings& sc, const PumpSchedule& sched, const TrajectoryParams& tp) {
    double rate = 0.0;
    for (const auto& seg : sched.segments)
        for (double p : {seg.p0, seg.p1}) rate = std::max(rate, max_linear_rate(sc, tp, p, tp.atoms));
    if (tp.dt * rate >= tp.max_rate_dt)
        throw std::invalid_argument("mftraj: dt * max rate = " + std::to_string(tp.dt * rate) + " exceeds " +
                                    std::to_string(tp.max_rate_dt));
}

inline TrajectoryResult run_trajectory(const CouplingSet& c, const PumpSchedule& sched, const TrajectoryParams& tp,
                                       std::uint64_t index = 0) {
    tp.validate();
    sched.validate();
    const ScaledCouplings sc = scale_couplings(c, tp);
    check_step_size(sc, sched, tp);
    Rng rng = make_stream(tp.seed, {kTrajectory, index});
    return run_trajectory_scaled(c, sc, sched, tp, rng);
}

struct EnsembleResult {
    std::vector<TrajectoryResult> trajectories;
    std::size_t non_superradiant = 0;

    std::vector<SpinConfiguration> superradiant_configs() const {
        std::vector<SpinConfiguration> out;
        for (const auto& t : trajectories)
            if (t.superradiant) out.push_back(t.config);
        return out;
    }
    double mean_amplitude() const {
        double s = 0.0;
        for (const auto& t : trajectories) s += t.mean_amplitude;
        return trajectories.empty() ? 0.0 : s / double(trajectories.size());
    }
};

inline EnsembleResult run_ensemble(const CouplingSet& c, const PumpSchedule& sched, const TrajectoryParams& tp,
                                   std::size_t n_traj, int threads = 1) {
    tp.validate();
    sched.validate();
    const ScaledCouplings sc = scale_couplings(c, tp);
    check_step_size(sc, sched, tp);
    EnsembleResult out;
    out.trajectories.resize(n_traj);
    parallel_for(n_traj, threads, [&](std::size_t k) {
        Rng rng = make_stream(tp.seed, {kTrajectory, std::uint64_t(k)});
        out.trajectories[k] = run_trajectory_scaled(c, sc, sched, tp, rng);
    });
    for (const auto& t : out.trajectories)
        if (!t.superradiant) ++out.non_superradiant;
    return out;
}

}  // namespace cglass
