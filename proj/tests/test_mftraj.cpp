#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/mftraj.hpp"
#include "cglass/replica.hpp"
#include "cglass/stats.hpp"

using namespace cglass;
using C = std::complex<double>;
using M3 = Eigen::Matrix3cd;
constexpr double pi = std::numbers::pi;

namespace {

// Gell-Mann matrices built entry by entry, independent of the structure constants used in the EOM.
std::array<M3, 8> gell_mann() {
    std::array<M3, 8> L;
    for (auto& m : L) m.setZero();
    const C I(0, 1);
    L[0](0, 1) = L[0](1, 0) = 1;
    L[1](0, 1) = -I;
    L[1](1, 0) = I;
    L[2](0, 0) = 1;
    L[2](1, 1) = -1;
    L[3](0, 2) = L[3](2, 0) = 1;
    L[4](0, 2) = -I;
    L[4](2, 0) = I;
    L[5](1, 2) = L[5](2, 1) = 1;
    L[6](1, 2) = -I;
    L[6](2, 1) = I;
    L[7](0, 0) = L[7](1, 1) = 1 / std::sqrt(3.0);
    L[7](2, 2) = -2 / std::sqrt(3.0);
    return L;
}

const std::array<M3, 8>& GM() {
    static const auto L = gell_mann();
    return L;
}

M3 rho_of(const GmVec& v) {
    M3 r = M3::Identity() / 3.0;
    for (int k = 0; k < 8; ++k) r += 0.5 * v[k] * GM()[k];
    return r;
}

GmVec gm_of(const M3& rho) {
    GmVec v;
    for (int k = 0; k < 8; ++k) v[k] = (rho * GM()[k]).trace().real();
    return v;
}

M3 comm(const M3& a, const M3& b) { return a * b - b * a; }

// Reference drift: coherent part i Tr(rho [h, l_a]), dissipator -sum_X w_X Tr(rho [X, [X, l_a]]).
std::vector<GmVec> oracle_drift(const TrajectoryState& s, const ScaledCouplings& sc, const TrajectoryParams& tp,
                                double p) {
    const auto n = Eigen::Index(s.size());
    Vec l1(n), l4(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        l1(i) = s.lam[i][0] * s.atoms[i];
        l4(i) = s.lam[i][3] * s.atoms[i];
    }
    const Vec tc = p * (sc.Jc * l1 + sc.K * l4), ts = p * (sc.Js * l4 + sc.K * l1);
    const double eps = tp.field(p);
    std::vector<GmVec> out(n);
    const C I(0, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const M3 rho = rho_of(s.lam[i]);
        const M3 h = -eps * (GM()[2] + GM()[7] / std::sqrt(3.0)) - 2.0 * tc(i) * GM()[0] - 2.0 * ts(i) * GM()[3];
        const double wc = tp.kappa_over_deltaC * p * sc.jc_diag(i), ws = tp.kappa_over_deltaC * p * sc.js_diag(i);
        for (int a = 0; a < 8; ++a) {
            const M3& La = GM()[a];
            C d = I * (rho * comm(h, La)).trace();
            d -= wc * (rho * comm(GM()[0], comm(GM()[0], La))).trace();
            d -= ws * (rho * comm(GM()[3], comm(GM()[3], La))).trace();
            out[i][a] = d.real();
            EXPECT_NEAR(d.imag(), 0.0, 1e-9);
        }
    }
    return out;
}

GmVec random_pure(Rng& rng) {
    std::normal_distribution<double> g;
    Eigen::Vector3cd psi;
    for (int k = 0; k < 3; ++k) psi(k) = C(g(rng), g(rng));
    psi.normalize();
    return gm_of(psi * psi.adjoint());
}

CouplingSet sk(int n, std::uint64_t seed, double mean_J = 0.0, double local_ratio = 100.0) {
    EnsembleSpec spec;
    spec.n = n;
    spec.seed = seed;
    spec.mean_J = mean_J;
    spec.local_ratio = local_ratio;
    return sample_sk(spec);
}

TrajectoryParams quiet() {
    TrajectoryParams tp;
    tp.kappa_over_deltaC = 0.0;
    tp.noise = false;
    return tp;
}

// Swap levels 1 and 2 of every vertex.
TrajectoryState swap_levels(const TrajectoryState& s) {
    M3 P = M3::Zero();
    P(0, 0) = P(1, 2) = P(2, 1) = 1;
    TrajectoryState out = s;
    for (auto& v : out.lam) v = gm_of(P * rho_of(v) * P);
    return out;
}

}  // namespace

TEST(Lindblad, IdentityCase) {
    CouplingSet c;
    c.J_local = Mat::Identity(4, 4);
    c.J_non = Mat::Zero(4, 4);
    c.K = Mat::Zero(4, 4);
    const auto L = lindblad_decompose(c);
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(L.eig_c(k), 1.0, 1e-15);
        EXPECT_NEAR(L.eig_s(k), 1.0, 1e-15);
    }
    EXPECT_LT((L.vec_c * L.vec_c.transpose() - Mat::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Lindblad, ReconstructionAndGeometryPositivity) {
    Rng rng(1);
    std::uniform_real_distribution<double> u(-25, 25);
    VertexConfig cfg;
    while (cfg.positions.size() < 8) {
        Vec2 p(u(rng), u(rng));
        bool ok = p.norm() > 4;
        for (auto& q : cfg.positions) ok = ok && (p - q).norm() > 8 && (p + q).norm() > 8;
        if (ok) cfg.positions.push_back(p);
    }
    cfg.atom_numbers.assign(8, 1e4);
    const auto c = from_geometry(cfg);
    const auto L = lindblad_decompose(c);
    const double lmax = std::max(L.eig_c.maxCoeff(), L.eig_s.maxCoeff());
    EXPECT_GE(L.eig_c.minCoeff(), -1e-10 * lmax);
    EXPECT_GE(L.eig_s.minCoeff(), -1e-10 * lmax);
    const Mat rc = L.vec_c * L.eig_c.asDiagonal() * L.vec_c.transpose();
    const Mat rs = L.vec_s * L.eig_s.asDiagonal() * L.vec_s.transpose();
    EXPECT_LT((rc - c.J_c()).cwiseAbs().maxCoeff(), 1e-10 * lmax);
    EXPECT_LT((rs - c.J_s()).cwiseAbs().maxCoeff(), 1e-10 * lmax);
}

TEST(Lindblad, RejectsNegativeSpectrum) {
    CouplingSet c;
    c.J_local = Mat::Identity(2, 2);
    c.J_non = (Mat(2, 2) << 0.0, 2.0, 2.0, 0.0).finished();
    c.K = Mat::Zero(2, 2);
    EXPECT_THROW(lindblad_decompose(c), std::invalid_argument);
}

TEST(InitState, ExactNormalStateWithoutPerturbation) {
    const auto c = sk(5, 1);
    TrajectoryParams tp;
    tp.perturbation_std = 0;
    Rng rng(2);
    const auto s = init_state(c, tp, rng);
    for (const auto& v : s.lam) {
        EXPECT_NEAR(v[2] + v[7] / std::sqrt(3.0), 4.0 / 3.0, 1e-15);
        for (int k : {0, 1, 3, 4, 5, 6}) EXPECT_EQ(v[k], 0.0);
    }
    EXPECT_EQ(s.atoms, std::vector<double>(5, tp.atoms));
}

TEST(InitState, PureStateCasimirAndSeeding) {
    const auto c = sk(6, 1);
    TrajectoryParams tp;
    tp.perturbation_std = 0.2;
    Rng a(3), b(3), d(4);
    const auto s1 = init_state(c, tp, a), s2 = init_state(c, tp, b), s3 = init_state(c, tp, d);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(casimir(s1.lam[i]), 4.0 / 3.0, 1e-14);
        EXPECT_EQ(s1.lam[i], s2.lam[i]);
        EXPECT_NE(s1.lam[i], s3.lam[i]);
        // rank-one density matrix
        const M3 rho = rho_of(s1.lam[i]);
        EXPECT_NEAR((rho * rho - rho).norm(), 0.0, 1e-13);
    }
}

TEST(Drift, MatchesGellMannAlgebra) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto c = sk(5, seed, 0.0, 3.0);
        TrajectoryParams tp;
        tp.kappa_over_deltaC = 0.3;  // large, so the dissipator is well above rounding
        const auto sc = scale_couplings(c, tp);
        Rng rng(seed + 10);
        TrajectoryState s = normal_state(5, tp.atoms);
        for (auto& v : s.lam) v = random_pure(rng);
        for (double p : {0.0, 0.7, 1.8}) {
            std::vector<GmVec> d;
            mf_drift(s, sc, tp, p, d);
            const auto ref = oracle_drift(s, sc, tp, p);
            double scale = 0;
            for (auto& v : ref)
                for (double x : v) scale = std::max(scale, std::abs(x));
            for (std::size_t i = 0; i < 5; ++i)
                for (int a = 0; a < 8; ++a) EXPECT_NEAR(d[i][a], ref[i][a], 1e-12 * scale) << i << " " << a;
        }
    }
}

TEST(Drift, NoiseCoefficientsMatchCommutators) {
    Rng rng(5);
    const C I(0, 1);
    for (int k = 0; k < 10; ++k) {
        const GmVec v = random_pure(rng);
        const M3 rho = rho_of(v);
        GmVec bc, bs;
        mf_noise_coeffs(v, bc, bs);
        for (int a = 0; a < 8; ++a) {
            EXPECT_NEAR(bc[a], (I * (rho * comm(GM()[0], GM()[a])).trace()).real(), 1e-14);
            EXPECT_NEAR(bs[a], (I * (rho * comm(GM()[3], GM()[a])).trace()).real(), 1e-14);
        }
    }
}

TEST(Step, NormalStateIsStationary) {
    const auto c = sk(6, 2);
    TrajectoryParams tp = quiet();
    const auto sc = scale_couplings(c, tp);
    TrajectoryState s = normal_state(6, tp.atoms);
    const TrajectoryState s0 = s;
    Rng rng(1);
    StepWorkspace w;
    for (auto sched : {PumpSchedule::constant(0.0, 1.0, 0.5), PumpSchedule::constant(1.5, 1.0, 0.5)})
        for (int k = 0; k < 100; ++k) {
            step(s, sc, sched, tp, k * tp.dt, rng, w);
            for (std::size_t i = 0; i < 6; ++i)
                for (int a = 0; a < 8; ++a) EXPECT_NEAR(s.lam[i][a], s0.lam[i][a], 1e-14);
        }
}

TEST(Step, CoherentFlowConservesEnergyAndCasimir) {
    const auto c = sk(8, 3);
    TrajectoryParams tp = quiet();
    tp.perturbation_std = 0.05;
    const auto sc = scale_couplings(c, tp);
    const double p = 1.25;
    const auto sched = PumpSchedule::constant(p, 1.0, 0.5);
    Rng rng(7);
    const TrajectoryState init = init_state(c, tp, rng);

    auto evolve = [&](double dt) {
        TrajectoryParams t2 = tp;
        t2.dt = dt;
        TrajectoryState s = init;
        StepWorkspace w;
        const long long steps = std::llround(1.0 / dt);
        for (long long k = 0; k < steps; ++k) step(s, sc, sched, t2, k * dt, rng, w);
        return s;
    };
    const auto coarse = evolve(5e-4), fine = evolve(5e-5);
    const double e0 = mf_energy(init, sc, tp, p);
    EXPECT_LT(std::abs(mf_energy(coarse, sc, tp, p) - e0), 1e-6 * std::abs(e0));
    EXPECT_LT(std::abs(mf_energy(fine, sc, tp, p) - e0), 1e-6 * std::abs(e0));
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_NEAR(casimir(coarse.lam[i]), 4.0 / 3.0, 1e-8);
        EXPECT_NEAR(casimir(fine.lam[i]), 4.0 / 3.0, 1e-8);
        for (int a = 0; a < 8; ++a) EXPECT_NEAR(coarse.lam[i][a], fine.lam[i][a], 1e-6);
    }
    // the flow actually moved the state
    double moved = 0;
    for (std::size_t i = 0; i < 8; ++i) moved = std::max(moved, std::abs(coarse.lam[i][0] - init.lam[i][0]));
    EXPECT_GT(moved, 1e-3);
}

TEST(Energy, MatchesSemiclassicalEnergyModule) {
    const auto c = sk(6, 4);
    TrajectoryParams tp;
    tp.perturbation_std = 0.3;
    const auto sc = scale_couplings(c, tp);
    Rng rng(8);
    const auto s = init_state(c, tp, rng);
    SpinConfiguration cfg;
    std::vector<double> sz;
    spin_components(s, cfg, sz);
    const double p = 1.1, N = tp.atoms, unit = N * p * sc.g;
    const double ref = unit * energy_semiclassical(c, cfg, sz, tp.field(p) / unit);
    EXPECT_NEAR(mf_energy(s, sc, tp, p), ref, 1e-9 * std::abs(ref));
}

TEST(Noise, IncrementVarianceScalesWithDissipation) {
    const auto c = sk(4, 5);
    TrajectoryParams tp;
    const auto sc = scale_couplings(c, tp);
    TrajectoryParams tp2 = tp;
    tp2.kappa_over_deltaC = 2 * tp.kappa_over_deltaC;
    Rng a(1), b(1);
    Vec c1, s1, c2, s2;
    sample_dS(sc, tp, 1.3, tp.dt, a, c1, s1);
    sample_dS(sc, tp2, 1.3, tp.dt, b, c2, s2);
    EXPECT_LT((c2 - std::sqrt(2.0) * c1).cwiseAbs().maxCoeff(), 1e-15 * c1.cwiseAbs().maxCoeff() + 1e-300);
    EXPECT_LT((s2 - std::sqrt(2.0) * s1).cwiseAbs().maxCoeff(), 1e-15 * s1.cwiseAbs().maxCoeff() + 1e-300);

    // Var(dS_ci) = kappa' p dt (J^c)_ii for the scaled matrix
    Rng r(2);
    const int M = 100000;
    Vec acc = Vec::Zero(4);
    for (int k = 0; k < M; ++k) {
        sample_dS(sc, tp, 1.3, tp.dt, r, c1, s1);
        acc += c1.cwiseAbs2();
    }
    for (int i = 0; i < 4; ++i) {
        const double expect = tp.kappa_over_deltaC * 1.3 * tp.dt * sc.Jc(i, i);
        EXPECT_NEAR(acc(i) / M, expect, 0.02 * expect);
    }
}

TEST(Trajectory, ValidatesScheduleAndStepSize) {
    const auto c = sk(4, 6);
    TrajectoryParams tp;
    PumpSchedule bad;
    EXPECT_THROW(run_trajectory(c, bad, tp), std::invalid_argument);
    bad.segments = {{0, 1, 0, 1}, {1.1, 2, 1, 1}};
    bad.readout_start = 1.5;
    bad.readout_duration = 0.5;
    EXPECT_THROW(run_trajectory(c, bad, tp), std::invalid_argument);
    auto late = PumpSchedule::experiment();
    late.readout_duration = 1.0;
    EXPECT_THROW(run_trajectory(c, late, tp), std::invalid_argument);
    tp.dt = 5e-3;
    EXPECT_THROW(run_trajectory(c, PumpSchedule::experiment(), tp), std::invalid_argument);
}

TEST(Trajectory, ScheduleShape) {
    const auto s = PumpSchedule::experiment();
    EXPECT_NO_THROW(s.validate());
    EXPECT_DOUBLE_EQ(s.power(0.0), 0.0);
    EXPECT_DOUBLE_EQ(s.power(0.625), 0.625);
    EXPECT_DOUBLE_EQ(s.power(1.5), 2.5);
    EXPECT_DOUBLE_EQ(s.max_power(), 2.5);
    const auto cap = PumpSchedule::capped(0.8);
    EXPECT_DOUBLE_EQ(cap.power(1.5), 0.8);
    EXPECT_DOUBLE_EQ(cap.t_end(), 1.8);
}

TEST(Trajectory, BelowThresholdIsFlagged) {
    const auto c = sk(6, 7);
    TrajectoryParams tp;
    tp.seed = 3;
    const auto ens = run_ensemble(c, PumpSchedule::constant(0.5, 2.0, 0.5), tp, 10);
    EXPECT_EQ(ens.non_superradiant, 10u);
    for (const auto& t : ens.trajectories) EXPECT_LT(t.mean_amplitude, 0.05);
    EXPECT_TRUE(ens.superradiant_configs().empty());
}

TEST(Trajectory, AmplitudeRisesAcrossLinearThreshold) {
    const auto c = sk(6, 8);
    TrajectoryParams tp;
    tp.seed = 4;
    const double below = run_ensemble(c, PumpSchedule::capped(0.9), tp, 6).mean_amplitude();
    const double above = run_ensemble(c, PumpSchedule::capped(1.1), tp, 6).mean_amplitude();
    EXPECT_LT(below, 0.1);
    EXPECT_GT(above, 0.1);
}

TEST(Ensemble, SingleTrajectoryAndThreadInvariance) {
    const auto c = sk(6, 9);
    TrajectoryParams tp;
    tp.seed = 11;
    const auto sched = PumpSchedule::experiment();
    const auto one = run_ensemble(c, sched, tp, 1);
    const auto direct = run_trajectory(c, sched, tp, 0);
    EXPECT_EQ(one.trajectories[0].config.thetas, direct.config.thetas);
    const auto a = run_ensemble(c, sched, tp, 6, 1), b = run_ensemble(c, sched, tp, 6, 3);
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_EQ(a.trajectories[k].config.thetas, b.trajectories[k].config.thetas);
        EXPECT_EQ(a.trajectories[k].amplitude, b.trajectories[k].amplitude);
    }
    EXPECT_EQ(a.non_superradiant, b.non_superradiant);
}

TEST(Duality, LevelSwapMapsAnglesExactly) {
    // J_non -> -J_non exchanges J^c and J^s; swapping the two density-wave levels maps one flow onto the other
    auto c = sk(5, 10, 3.0);
    auto d = c;
    d.J_non = -c.J_non;
    TrajectoryParams tp;
    tp.noise = false;
    tp.perturbation_std = 0.05;
    const auto sc = scale_couplings(c, tp), sd = scale_couplings(d, tp);
    EXPECT_NEAR(sc.g, sd.g, 1e-12 * sc.g);
    Rng rng(12);
    TrajectoryState s = init_state(c, tp, rng);
    TrajectoryState t = swap_levels(s);
    const auto sched = PumpSchedule::experiment();
    StepWorkspace w1, w2;
    for (long long k = 0; k < 3500; ++k) {
        step(s, sc, sched, tp, k * tp.dt, rng, w1);
        step(t, sd, sched, tp, k * tp.dt, rng, w2);
    }
    SpinConfiguration a, b;
    std::vector<double> za, zb;
    spin_components(s, a, za);
    spin_components(t, b, zb);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_GT(a.radii[i], 0.1);
        EXPECT_NEAR(std::remainder(b.thetas[i] - (pi / 2 - a.thetas[i]), 2 * pi), 0.0, 1e-8);
        EXPECT_NEAR(zb[i], za[i], 1e-9);
    }
}

TEST(Duality, NoisyEnsemblesAreMirrorImages) {
    auto c = sk(4, 13, 5.0);
    c.K.setZero();
    auto d = c;
    d.J_non = -c.J_non;
    TrajectoryParams tp;
    tp.seed = 21;
    const auto sched = PumpSchedule::experiment();
    const auto A = run_ensemble(c, sched, tp, 120);
    tp.seed = 22;
    const auto B = run_ensemble(d, sched, tp, 120);
    // compare axis angles 2 theta, which are free of the global Z2 ambiguity
    std::vector<double> xa, xb;
    for (const auto& t : A.trajectories)
        for (double th : t.config.thetas) xa.push_back(std::remainder(2 * (pi / 2 - th), 2 * pi));
    for (const auto& t : B.trajectories)
        for (double th : t.config.thetas) xb.push_back(std::remainder(2 * th, 2 * pi));
    EXPECT_GT(ks_test_2(xa, xb).p_value, 0.01);
}
