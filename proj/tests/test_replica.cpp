#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/replica.hpp"
#include "cglass/stats.hpp"

using namespace cglass;
constexpr double pi = std::numbers::pi;

namespace {

Ensemble uniform_ensemble(int count, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0, 2 * pi);
    Ensemble e(count);
    for (auto& s : e)
        for (int i = 0; i < n; ++i) s.thetas.push_back(u(rng));
    return e;
}

// Replicas scattered around a few fixed prototypes.
Ensemble mixture(int per_state, int states, int n, double noise, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0, 2 * pi);
    std::normal_distribution<double> g(0, noise);
    Ensemble protos = uniform_ensemble(states, n, seed + 1000);
    Ensemble e;
    for (int k = 0; k < states; ++k)
        for (int r = 0; r < per_state; ++r) {
            SpinConfiguration s = protos[k];
            for (auto& t : s.thetas) t = wrap_angle(t + g(rng));
            e.push_back(s);
        }
    return e;
}

}  // namespace

TEST(Overlap, SelfOverlapIsOne) {
    const auto e = uniform_ensemble(10, 8, 1);
    for (const auto& s : e) EXPECT_NEAR(overlap(s, s).Q(), 1.0, 1e-15);
}

TEST(Overlap, GlobalFlipNegatesQAndR) {
    const auto e = uniform_ensemble(20, 8, 2);
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
        const auto o = overlap(e[k], e[k + 1]), f = overlap(e[k], global_flip(e[k + 1]));
        EXPECT_NEAR(f.Q(), -o.Q(), 1e-12);
        EXPECT_NEAR(f.R(), -o.R(), 1e-12);
        const auto self = overlap(e[k], e[k]), selff = overlap(e[k], global_flip(e[k]));
        EXPECT_NEAR(selff.Q(), -1.0, 1e-12);
        EXPECT_NEAR(selff.R(), -self.R(), 1e-12);
    }
}

TEST(Overlap, NegationSwapsQAndR) {
    // negating one replica sends (Q, R) to (-R, -Q); after a global flip of the partner it is (R, Q)
    const auto e = uniform_ensemble(20, 8, 3);
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
        const auto o = overlap(e[k], e[k + 1]), m = overlap(negate(e[k]), e[k + 1]);
        EXPECT_NEAR(m.Q(), -o.R(), 1e-12);
        EXPECT_NEAR(m.R(), -o.Q(), 1e-12);
        const auto mm = overlap(negate(e[k]), global_flip(e[k + 1]));
        EXPECT_NEAR(mm.Q(), o.R(), 1e-12);
        EXPECT_NEAR(mm.R(), o.Q(), 1e-12);
    }
}

TEST(Overlap, OrthogonalSpins) {
    const auto o = overlap(SpinConfiguration({0.0, 0.0}), SpinConfiguration({pi / 2, pi / 2}));
    EXPECT_NEAR(o.qxx, 0.0, 1e-15);
    EXPECT_NEAR(o.qyy, 0.0, 1e-15);
    EXPECT_NEAR(o.qxy, 1.0, 1e-15);
    EXPECT_NEAR(o.qyx, 0.0, 1e-15);
    EXPECT_NEAR(o.Q(), 0.0, 1e-15);
    EXPECT_NEAR(o.R(), 0.0, 1e-15);
    EXPECT_NEAR(o.D(), 1.0, 1e-15);
    EXPECT_THROW(overlap(SpinConfiguration({0.0}), SpinConfiguration({0.0, 1.0})), std::invalid_argument);
}

TEST(Histogram, TwoIdenticalReplicasSymmetrized) {
    SpinConfiguration s({0.3, 1.0, 2.0});
    const auto h = build_histogram({s, s}, true);
    const double R = overlap(s, s).R();
    EXPECT_NEAR(h.at(h.index(1.0), h.index(R)), 0.5, 1e-15);
    EXPECT_NEAR(h.at(h.index(-1.0), h.index(-R)), 0.5, 1e-15);
    EXPECT_EQ(h.pairs, 1);
    EXPECT_EQ(h.self_Q.size(), 2u);
    EXPECT_EQ(h.index(1.0), h.bins - 1);
    EXPECT_EQ(h.index(-1.0), 0);
}

TEST(Histogram, MassConservationAndSymmetry) {
    const auto e = uniform_ensemble(60, 6, 4);
    const auto h = build_histogram(e, true);
    EXPECT_NEAR(h.total(), 1.0, 1e-12);
    for (int i = 0; i < h.bins; ++i)
        for (int j = 0; j < h.bins; ++j) EXPECT_NEAR(h.at(i, j), h.at(h.bins - 1 - i, h.bins - 1 - j), 1e-15);
    const auto raw = build_histogram(e, false);
    EXPECT_NEAR(raw.total(), 1.0, 1e-12);
    EXPECT_EQ(raw.pairs, 60 * 59 / 2);
    const auto s = symmetrize(raw);
    for (std::size_t k = 0; k < s.counts.size(); ++k) EXPECT_NEAR(s.counts[k], h.counts[k], 1e-15);
}

TEST(Histogram, GlobalFlipOfRecordsLeavesSymmetrizedHistogramInvariant) {
    auto e = uniform_ensemble(40, 8, 5);
    const auto h = build_histogram(e, true);
    for (auto& s : e) s = global_flip(s);
    const auto g = build_histogram(e, true);
    EXPECT_LT(hellinger(h, g), 1e-12);
}

TEST(Histogram, ParamagnetVarianceOfQ) {
    // Q = (1/n) sum cos(a_i - b_i) with var(cos) = 1/2, so var(Q) = 1/(2n)
    const int n = 8;
    const auto e = uniform_ensemble(100, n, 6);
    std::vector<double> q;
    for (std::size_t a = 0; a < e.size(); ++a)
        for (std::size_t b = a + 1; b < e.size(); ++b) q.push_back(overlap(e[a], e[b]).Q());
    // independent Monte Carlo oracle with fresh pairs
    Rng rng(7);
    std::uniform_real_distribution<double> u(0, 2 * pi);
    std::vector<double> mc;
    for (int k = 0; k < 200000; ++k) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += std::cos(u(rng) - u(rng));
        mc.push_back(s / n);
    }
    EXPECT_NEAR(variance(mc), 1.0 / (2 * n), 0.01 / n);
    EXPECT_NEAR(variance(q), variance(mc), 0.15 * variance(mc));
}

TEST(Parisi, IdentityAndDisjointPeaks) {
    SpinConfiguration a({0.0, 0.0}), b({pi / 2, pi / 2});
    const auto h1 = build_histogram({a, a}, false);
    const auto h2 = build_histogram({a, b}, false);
    const auto one = parisi_aggregate({h1});
    for (std::size_t k = 0; k < h1.counts.size(); ++k) EXPECT_EQ(one.counts[k], h1.counts[k]);
    const auto two = parisi_aggregate({h1, h2});
    // a with itself sits at (Q, R) = (1, -1)
    EXPECT_NEAR(two.at(two.index(1.0), two.index(-1.0)), 0.5, 1e-15);
    const auto o = overlap(a, b);
    EXPECT_NEAR(two.at(two.index(o.Q()), two.index(o.R())), 0.5, 1e-15);
    EXPECT_NEAR(two.total(), 1.0, 1e-15);
}

TEST(Parisi, CommutesWithSymmetrization) {
    std::vector<OverlapHistogram> raw;
    for (std::uint64_t s = 0; s < 5; ++s) raw.push_back(build_histogram(uniform_ensemble(20 + int(s), 6, s + 10), false));
    std::vector<OverlapHistogram> sym;
    for (const auto& h : raw) sym.push_back(symmetrize(h));
    const auto a = symmetrize(parisi_aggregate(raw)), b = parisi_aggregate(sym);
    for (std::size_t k = 0; k < a.counts.size(); ++k) EXPECT_NEAR(a.counts[k], b.counts[k], 1e-15);
}

TEST(Parisi, RejectsBinningMismatch) {
    auto h = build_histogram(uniform_ensemble(5, 4, 1), false);
    auto g = h;
    g.bins = 40;
    g.counts.assign(40 * 40, 0.0);
    EXPECT_THROW(parisi_aggregate({h, g}), std::invalid_argument);
    EXPECT_THROW(hellinger(h, g), std::invalid_argument);
}

TEST(Binder, CoinFlipGaussianAndHeavyTails) {
    EXPECT_EQ(binder_ratio({-1, 1, 1, -1, 1}), 1.0);
    Rng rng(8);
    std::normal_distribution<double> g;
    std::vector<double> x(1000000);
    for (auto& v : x) v = g(rng);
    EXPECT_NEAR(binder_ratio(x), 0.0, 0.01);
    std::exponential_distribution<double> ex;
    for (auto& v : x) v = (rng() & 1 ? 1 : -1) * ex(rng);
    EXPECT_LT(binder_ratio(x), 0.0);
    EXPECT_THROW(binder_ratio({0.0, 0.0}), std::invalid_argument);
}

TEST(Plateau, UniformDensityAndGoalposts) {
    Histogram2D u;
    std::fill(u.counts.begin(), u.counts.end(), 1.0);
    for (double q0 : {0.1, 0.26, 0.5, 1.0}) EXPECT_NEAR(plateau(u, q0), 0.5, 1e-12);
    Histogram2D g;
    g.add(1.0, 0.0);
    g.add(-1.0, 0.0);
    EXPECT_EQ(plateau(g, 0.26), 0.0);
    EXPECT_THROW(plateau(u, 0.0), std::invalid_argument);
}

TEST(Plateau, TruncatedGaussianFormula) {
    // bin a 2-D isotropic Gaussian finely and compare X(q0) with the closed form
    for (double var : {0.05, 0.125, 0.5}) {
        Histogram2D h;
        const int M = 400;
        for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) {
                const double x = -1 + (a + 0.5) * 2.0 / M, y = -1 + (b + 0.5) * 2.0 / M;
                h.add(x, y, std::exp(-(x * x + y * y) / (2 * var)));
            }
        EXPECT_NEAR(plateau(h, 0.26), plateau_gaussian(var, 0.26), 0.01 * plateau_gaussian(var, 0.26)) << var;
    }
    // paramagnetic Q marginal sampled from uniform spins, variance 1/(2n)
    const int n = 8;
    const auto e = uniform_ensemble(400, n, 9);
    const double X = plateau(build_histogram(e, true), 0.26);
    EXPECT_NEAR(X, plateau_gaussian(1.0 / (2 * n), 0.26), 0.05 * X);
}

TEST(Cluster, ZeroDistanceChain) {
    SpinConfiguration s({0.1, 0.5, 0.9});
    const auto d = cluster({s, s, s});
    ASSERT_EQ(d.nodes.size(), 5u);
    for (int k = 3; k < 5; ++k) EXPECT_NEAR(d.nodes[k].height, 0.0, 1e-15);
    EXPECT_EQ(d.nodes.back().size, 3);
    EXPECT_EQ(d.leaf_order.size(), 3u);
}

TEST(Cluster, TwoExactPairs) {
    Eigen::MatrixXd D(4, 4);
    D << 0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0;
    const auto d = cluster_distances(D);
    ASSERT_EQ(d.nodes.size(), 7u);
    EXPECT_EQ(d.nodes[4].height, 0.0);
    EXPECT_EQ(d.nodes[5].height, 0.0);
    EXPECT_EQ(d.nodes[6].height, 1.0);
    EXPECT_EQ(d.nodes[6].size, 4);
    const auto& root = d.nodes[6];
    EXPECT_EQ(d.nodes[root.left].size, 2);
    EXPECT_EQ(d.nodes[root.right].size, 2);
}

TEST(Cluster, MonotoneHeightsAndLeafOrder) {
    const auto e = mixture(10, 4, 12, 0.4, 10);
    const auto d = cluster(e);
    for (std::size_t k = std::size_t(d.leaves); k < d.nodes.size(); ++k) {
        const auto& nd = d.nodes[k];
        EXPECT_GE(nd.height + 1e-12, d.nodes[nd.left].height);
        EXPECT_GE(nd.height + 1e-12, d.nodes[nd.right].height);
    }
    auto order = d.leaf_order;
    std::sort(order.begin(), order.end());
    for (int k = 0; k < d.leaves; ++k) EXPECT_EQ(order[k], k);
}

TEST(Cluster, TopSplitSeparatesMixture) {
    const auto e = mixture(15, 3, 16, 0.3, 11);
    const auto d = cluster(e);
    const auto& root = d.nodes[d.root()];
    // collect leaves of each limb
    std::function<void(int, std::vector<int>&)> leaves = [&](int k, std::vector<int>& out) {
        if (d.nodes[k].left < 0) {
            out.push_back(k);
            return;
        }
        leaves(d.nodes[k].left, out);
        leaves(d.nodes[k].right, out);
    };
    std::vector<int> A, B;
    leaves(root.left, A);
    leaves(root.right, B);
    double intra = 0, inter = 0;
    int ni = 0, nx = 0;
    for (auto* side : {&A, &B})
        for (std::size_t i = 0; i < side->size(); ++i)
            for (std::size_t j = i + 1; j < side->size(); ++j) {
                intra += std::abs(overlap(e[(*side)[i]], e[(*side)[j]]).Q());
                ++ni;
            }
    for (int a : A)
        for (int b : B) {
            inter += std::abs(overlap(e[a], e[b]).Q());
            ++nx;
        }
    EXPECT_GE(intra / ni - inter / nx, 0.3);
}

TEST(Ktri, EquilateralAndArithmetic) {
    EXPECT_EQ(ktri(0.4, 0.4, 0.4, 0.1), 0.0);
    EXPECT_NEAR(ktri(0.1, 0.2, 0.5, 0.2), 1.5, 1e-14);
    Eigen::MatrixXd D = Eigen::MatrixXd::Constant(5, 5, 0.3);
    D.diagonal().setZero();
    const auto r = ktri_from_distances(D);
    EXPECT_EQ(r.sigma_D, 0.0);
    for (double v : r.values) EXPECT_EQ(v, 0.0);
}

TEST(Ktri, PermutationInvariance) {
    Rng rng(12);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 50; ++k) {
        const double a = u(rng), b = u(rng), c = u(rng);
        const double ref = ktri(a, b, c, 0.3);
        EXPECT_EQ(ktri(b, a, c, 0.3), ref);
        EXPECT_EQ(ktri(c, b, a, 0.3), ref);
        EXPECT_EQ(ktri(a, c, b, 0.3), ref);
    }
}

TEST(Ktri, ExactEnumerationAndSampling) {
    const auto e = uniform_ensemble(30, 8, 13);
    const auto r = ktri_distribution(e);
    EXPECT_FALSE(r.sampled);
    EXPECT_EQ(r.values.size(), 30u * 29 * 28 / 6);
    double h = 0;
    for (double v : r.hist) h += v;
    EXPECT_NEAR(h, 1.0, 1e-12);
    const auto big = uniform_ensemble(220, 8, 14);
    const auto s = ktri_distribution(big, 3);
    EXPECT_TRUE(s.sampled);
    EXPECT_EQ(s.values.size(), 100000u);
    EXPECT_THROW(ktri_distribution(uniform_ensemble(2, 8, 1)), std::invalid_argument);
}

TEST(Ktri, UltrametricEnsembleConcentratesAtZero) {
    const auto glass = ktri_distribution(mixture(10, 5, 16, 0.15, 15));
    const auto para = ktri_distribution(uniform_ensemble(50, 16, 16));
    EXPECT_LT(glass.mean, para.mean);
    EXPECT_GT(glass.mass_below(0.5), para.mass_below(0.5));
}

TEST(Hellinger, IdentityAndDisjoint) {
    Histogram2D p, q;
    p.add(0.5, 0.5);
    q.add(-0.5, -0.5);
    EXPECT_EQ(hellinger(p, p), 0.0);
    EXPECT_NEAR(hellinger(p, q), 1.0, 1e-15);
}

TEST(Bootstrap, DegeneratePairAndMixtureConvergence) {
    SpinConfiguration s({0.1, 0.7});
    const auto d = bootstrap(Ensemble{s, s}, 10, 1);
    for (double x : d.distances) EXPECT_NEAR(x, 0.0, 1e-12);
    const auto m = bootstrap(mixture(25, 4, 10, 0.3, 17), 20, 2);
    EXPECT_GT(m.mean_distance, 0.0);
    EXPECT_LT(m.mean_distance, 0.2);
    EXPECT_EQ(m.distances.size(), 20u);
    std::vector<OverlapHistogram> hs;
    for (std::uint64_t k = 0; k < 6; ++k) hs.push_back(build_histogram(mixture(8, 3, 10, 0.3, 30 + k), true));
    const auto agg = bootstrap(hs, 10, 3);
    EXPECT_EQ(agg.distances.size(), 10u);
    EXPECT_THROW(bootstrap(Ensemble{s, s}, 1, 1), std::invalid_argument);
}

TEST(Tc, ExactPiecewiseLinear) {
    std::vector<double> T, m;
    for (int k = 0; k <= 40; ++k) {
        const double t = 0.1 * k;
        T.push_back(t);
        m.push_back(t < 1.0 ? 1.0 - 0.2 * t : 0.8 - 0.5 * (t - 1.0));
    }
    const auto tc = estimate_tc(T, m, {0.2, 0.9}, {1.2, 3.0});
    EXPECT_NEAR(tc.Tc, 1.0, 1e-12);
}

TEST(Tc, FlatPlusSloped) {
    std::vector<double> T, m;
    for (int k = 0; k <= 30; ++k) {
        T.push_back(0.1 * k);
        m.push_back(k < 15 ? 0.9 : 0.9 - 0.3 * (0.1 * k - 1.4));
    }
    const auto tc = estimate_tc(T, m, {0.0, 1.0}, {1.6, 3.0});
    // lines m = 0.9 and m = 0.9 - 0.3 (T - 1.4) meet at T = 1.4
    EXPECT_NEAR(tc.Tc, 1.4, 1e-12);
}

TEST(Tc, ParallelLinesAndTooFewPoints) {
    std::vector<double> T{0, 1, 2, 3, 4, 5}, m{0, 1, 2, 3, 4, 5};
    EXPECT_THROW(estimate_tc(T, m, {0, 2}, {3, 5}), std::runtime_error);
    EXPECT_THROW(estimate_tc(T, m, {0, 1}, {3, 5}), std::invalid_argument);
}

TEST(Diagnostics, GoeInputsMatchReference) {
    Rng rng(18);
    std::normal_distribution<double> g;
    std::vector<CouplingSet> cs;
    for (int k = 0; k < 400; ++k) {
        CouplingSet c;
        c.J_non = Mat(8, 8);
        for (int i = 0; i < 8; ++i)
            for (int j = i; j < 8; ++j) c.J_non(i, j) = c.J_non(j, i) = (i == j ? std::sqrt(2.0) : 1.0) * g(rng);
        c.K = Mat::Zero(8, 8);
        c.J_local = Mat::Identity(8, 8);
        cs.push_back(c);
    }
    const auto d = ensemble_diagnostics(cs, 1);
    EXPECT_GT(ks_test_2(d.spacings, d.goe_spacings).p_value, 0.01);
    EXPECT_EQ(d.eigenvalues.size(), 400u * 8);
}

TEST(Diagnostics, DiagonalMatricesArePoissonian) {
    Rng rng(19);
    std::normal_distribution<double> g;
    std::vector<CouplingSet> cs;
    for (int k = 0; k < 400; ++k) {
        CouplingSet c;
        c.J_non = Mat::Zero(8, 8);
        for (int i = 0; i < 8; ++i) c.J_non(i, i) = g(rng);
        c.J_non(0, 1) = c.J_non(1, 0) = 1e-9;
        c.K = Mat::Zero(8, 8);
        c.J_local = Mat::Identity(8, 8);
        cs.push_back(c);
    }
    const auto d = ensemble_diagnostics(cs, 1);
    EXPECT_LT(ks_test_2(d.spacings, d.goe_spacings).p_value, 1e-6);
    // level repulsion is absent: small spacings are common
    const double small = double(std::count_if(d.spacings.begin(), d.spacings.end(), [](double s) { return s < 0.2; }));
    EXPECT_GT(small / d.spacings.size(), 0.1);
    EXPECT_THROW(ensemble_diagnostics(std::vector<CouplingSet>(cs.begin(), cs.begin() + 5)), std::invalid_argument);
}

TEST(Magnetization, AlignedAndUniform) {
    const auto m = magnetization(SpinConfiguration(std::vector<double>(8, 0.0)));
    EXPECT_NEAR(m.mx, 1.0, 1e-15);
    EXPECT_NEAR(m.my, 0.0, 1e-15);
    const int n = 8;
    const auto e = uniform_ensemble(20000, n, 20);
    std::vector<double> mx, my;
    for (const auto& s : e) {
        const auto v = magnetization(s);
        mx.push_back(v.mx);
        my.push_back(v.my);
    }
    EXPECT_NEAR(mean(mx), 0.0, 0.01);
    EXPECT_NEAR(variance(mx), 1.0 / (2 * n), 0.05 / (2 * n));
    EXPECT_NEAR(variance(my), 1.0 / (2 * n), 0.05 / (2 * n));
    const auto h = magnetization_histogram(e);
    EXPECT_NEAR(h.total(), 1.0, 1e-12);
}
