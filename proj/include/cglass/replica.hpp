#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/rng.hpp"
#include "cglass/stats.hpp"

namespace cglass {

using Ensemble = std::vector<SpinConfiguration>;

struct OverlapPair {
    double qxx = 0, qxy = 0, qyx = 0, qyy = 0;
    double Q() const { return qxx + qyy; }
    double R() const { return qyy - qxx; }
    double D() const { return 1.0 - std::abs(Q()); }
};

inline OverlapPair overlap(const SpinConfiguration& a, const SpinConfiguration& b) {
    if (a.size() != b.size()) throw std::invalid_argument("overlap: replicas have different lengths");
    if (a.size() == 0) throw std::invalid_argument("overlap: empty replicas");
    OverlapPair o;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ra = a.radius(i), rb = b.radius(i);
        const double ax = ra * std::cos(a.thetas[i]), ay = ra * std::sin(a.thetas[i]);
        const double bx = rb * std::cos(b.thetas[i]), by = rb * std::sin(b.thetas[i]);
        o.qxx += ax * bx;
        o.qxy += ax * by;
        o.qyx += ay * bx;
        o.qyy += ay * by;
    }
    const double n = double(a.size());
    o.qxx /= n;
    o.qxy /= n;
    o.qyx /= n;
    o.qyy /= n;
    return o;
}

// Fixed 2-D binning over [-1, 1]^2. Bins are left-inclusive; the value 1 lands in the last bin.
struct Histogram2D {
    static constexpr int kBins = 80;
    static constexpr double kLo = -1.0, kHi = 1.0;

    int bins = kBins;
    double lo = kLo, hi = kHi;
    std::vector<double> counts = std::vector<double>(kBins * kBins, 0.0);  // row-major [x][y]
    bool normalized = false;
    bool symmetrized = false;

    double width() const { return (hi - lo) / bins; }
    int index(double v) const {
        const int k = int(std::floor((v - lo) / width()));
        return std::clamp(k, 0, bins - 1);
    }
    double& at(int ix, int iy) { return counts[std::size_t(ix) * bins + iy]; }
    double at(int ix, int iy) const { return counts[std::size_t(ix) * bins + iy]; }
    void add(double x, double y, double w = 1.0) { at(index(x), index(y)) += w; }
    double total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }
    double edge(int k) const { return lo + k * width(); }
    double center(int k) const { return lo + (k + 0.5) * width(); }

    bool same_binning(const Histogram2D& o) const { return bins == o.bins && lo == o.lo && hi == o.hi; }

    Histogram2D as_normalized() const {
        Histogram2D h = *this;
        const double t = total();
        if (t > 0)
            for (auto& c : h.counts) c /= t;
        h.normalized = true;
        return h;
    }
    std::vector<double> marginal_x() const {
        std::vector<double> m(bins, 0.0);
        for (int i = 0; i < bins; ++i)
            for (int j = 0; j < bins; ++j) m[i] += at(i, j);
        return m;
    }
    std::vector<double> marginal_y() const {
        std::vector<double> m(bins, 0.0);
        for (int i = 0; i < bins; ++i)
            for (int j = 0; j < bins; ++j) m[j] += at(i, j);
        return m;
    }
};

struct OverlapHistogram : Histogram2D {
    long long pairs = 0;
    std::vector<double> self_Q;  // Q_aa per replica, kept out of the pair histogram

    std::vector<double> marginal_Q() const { return marginal_x(); }
    std::vector<double> marginal_R() const { return marginal_y(); }
};

inline OverlapHistogram build_histogram(const Ensemble& ens, bool symmetrize) {
    if (ens.size() < 2) throw std::invalid_argument("build_histogram: need at least two replicas");
    OverlapHistogram h;
    h.symmetrized = symmetrize;
    for (const auto& a : ens) h.self_Q.push_back(overlap(a, a).Q());
    for (std::size_t a = 0; a < ens.size(); ++a)
        for (std::size_t b = a + 1; b < ens.size(); ++b) {
            const OverlapPair o = overlap(ens[a], ens[b]);
            if (symmetrize) {
                h.add(o.Q(), o.R(), 0.5);
                h.add(-o.Q(), -o.R(), 0.5);
            } else {
                h.add(o.Q(), o.R());
            }
            ++h.pairs;
        }
    const double t = h.total();
    for (auto& c : h.counts) c /= t;
    h.normalized = true;
    return h;
}

inline OverlapHistogram symmetrize(const OverlapHistogram& h) {
    OverlapHistogram s = h;
    const int B = h.bins;
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < B; ++j) s.at(i, j) = 0.5 * (h.at(i, j) + h.at(B - 1 - i, B - 1 - j));
    s.symmetrized = true;
    return s;
}

inline OverlapHistogram parisi_aggregate(const std::vector<OverlapHistogram>& hs) {
    if (hs.empty()) throw std::invalid_argument("parisi_aggregate: no histograms");
    OverlapHistogram out;
    out.bins = hs[0].bins;
    out.lo = hs[0].lo;
    out.hi = hs[0].hi;
    out.counts.assign(hs[0].counts.size(), 0.0);
    out.symmetrized = true;
    for (const auto& h : hs) {
        if (!h.same_binning(hs[0]) || h.counts.size() != out.counts.size())
            throw std::invalid_argument("parisi_aggregate: binning mismatch");
        const Histogram2D n = h.as_normalized();
        for (std::size_t k = 0; k < n.counts.size(); ++k) out.counts[k] += n.counts[k];
        out.pairs += h.pairs;
        out.symmetrized = out.symmetrized && h.symmetrized;
    }
    for (auto& c : out.counts) c /= double(hs.size());
    out.normalized = true;
    return out;
}

inline double binder_ratio(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("binder_ratio: empty sample");
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double v2 = v * v;
        m2 += v2;
        m4 += v2 * v2;
    }
    m2 /= double(x.size());
    m4 /= double(x.size());
    if (!(m2 > 0)) throw std::invalid_argument("binder_ratio: degenerate sample with <X^2> = 0");
    return 0.5 * (3.0 - m4 / (m2 * m2));
}

// X(q0) = mass with |Q| <= q0 divided by 2 q0. Bins straddling +-q0 contribute the covered fraction.
inline double plateau(const Histogram2D& h, double q0 = 0.26) {
    if (!(q0 > 0 && q0 <= 1)) throw std::invalid_argument("plateau: q0 must be in (0, 1]");
    const Histogram2D n = h.as_normalized();
    const std::vector<double> mq = n.marginal_x();
    double mass = 0.0;
    for (int k = 0; k < n.bins; ++k) {
        const double a = std::max(n.edge(k), -q0), b = std::min(n.edge(k + 1), q0);
        if (b > a) mass += mq[k] * (b - a) / n.width();
    }
    return mass / (2.0 * q0);
}

// X(q0) for the isotropic Gaussian of variance `var` truncated to [-1, 1]^2.
inline double plateau_gaussian(double var, double q0 = 0.26) {
    const double s = std::sqrt(2.0 * var);
    return std::erf(q0 / s) / (std::erf(1.0 / s) * 2.0 * q0);
}

struct DendrogramNode {
    int left = -1, right = -1;  // children; -1 for leaves
    double height = 0.0;        // average-linkage distance at the merge
    double intra = 0.0;         // mean D over all replica pairs inside the node
    int size = 1;
};

struct Dendrogram {
    int leaves = 0;
    std::vector<DendrogramNode> nodes;  // leaves first, then merges in order; root is last
    std::vector<int> leaf_order;

    int root() const { return int(nodes.size()) - 1; }
};

namespace detail {
inline void order_leaves(const Dendrogram& d, int node, std::vector<int>& out) {
    const auto& nd = d.nodes[node];
    if (nd.left < 0) {
        out.push_back(node);
        return;
    }
    int a = nd.left, b = nd.right;
    const auto& na = d.nodes[a];
    const auto& nb = d.nodes[b];
    // heavier limb first; equal sizes put the tighter limb first
    if (nb.size > na.size || (nb.size == na.size && nb.intra < na.intra)) std::swap(a, b);
    order_leaves(d, a, out);
    order_leaves(d, b, out);
}
}  // namespace detail

inline Eigen::MatrixXd distance_matrix(const Ensemble& ens) {
    const auto N = Eigen::Index(ens.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index a = 0; a < N; ++a)
        for (Eigen::Index b = a + 1; b < N; ++b) D(a, b) = D(b, a) = overlap(ens[a], ens[b]).D();
    return D;
}

inline Dendrogram cluster_distances(const Eigen::MatrixXd& D) {
    const int N = int(D.rows());
    if (N < 2) throw std::invalid_argument("cluster: need at least two replicas");
    Dendrogram d;
    d.leaves = N;
    d.nodes.resize(N);
    // active cluster ids and their members; linkage via Lance-Williams for average linkage
    std::vector<int> id(N);
    std::iota(id.begin(), id.end(), 0);
    std::vector<std::vector<int>> members(N);
    for (int i = 0; i < N; ++i) members[i] = {i};
    Eigen::MatrixXd L = D;
    std::vector<bool> alive(N, true);
    for (int step = 0; step < N - 1; ++step) {
        int bi = -1, bj = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < N; ++i) {
            if (!alive[i]) continue;
            for (int j = i + 1; j < N; ++j)
                if (alive[j] && L(i, j) < best) {
                    best = L(i, j);
                    bi = i;
                    bj = j;
                }
        }
        DendrogramNode nd;
        nd.left = id[bi];
        nd.right = id[bj];
        nd.height = best;
        const int si = int(members[bi].size()), sj = int(members[bj].size());
        nd.size = si + sj;
        members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
        double s = 0.0;
        const auto& m = members[bi];
        for (std::size_t a = 0; a < m.size(); ++a)
            for (std::size_t b = a + 1; b < m.size(); ++b) s += D(m[a], m[b]);
        nd.intra = s / (0.5 * double(m.size()) * double(m.size() - 1));
        for (int k = 0; k < N; ++k) {
            if (!alive[k] || k == bi || k == bj) continue;
            const double v = (si * L(bi, k) + sj * L(bj, k)) / double(si + sj);
            L(bi, k) = L(k, bi) = v;
        }
        alive[bj] = false;
        members[bj].clear();
        id[bi] = int(d.nodes.size());
        d.nodes.push_back(nd);
    }
    detail::order_leaves(d, d.root(), d.leaf_order);
    return d;
}

inline Dendrogram cluster(const Ensemble& ens) { return cluster_distances(distance_matrix(ens)); }

struct KtriResult {
    std::vector<double> values;
    double mean = 0.0;
    double variance = 0.0;
    double sigma_D = 0.0;
    bool sampled = false;
    // histogram of K over [0, kMax) with kBins bins
    static constexpr int kBins = 60;
    static constexpr double kMax = 3.0;
    std::vector<double> hist;

    double mass_below(double x) const {
        if (values.empty()) return 0.0;
        return double(std::count_if(values.begin(), values.end(), [&](double v) { return v < x; })) / values.size();
    }
};

inline double ktri(double d1, double d2, double d3, double sigma) {
    double d[3] = {d1, d2, d3};
    std::sort(d, d + 3);
    if (!(sigma > 0)) return 0.0;
    return (d[2] - d[1]) / sigma;
}

inline KtriResult ktri_from_distances(const Eigen::MatrixXd& D, std::uint64_t seed = 0,
                                      std::size_t exact_limit = 200, std::size_t samples = 100000) {
    const std::size_t N = std::size_t(D.rows());
    if (N < 3) throw std::invalid_argument("ktri_distribution: need at least three replicas");
    std::vector<double> all;
    all.reserve(N * (N - 1) / 2);
    for (std::size_t a = 0; a < N; ++a)
        for (std::size_t b = a + 1; b < N; ++b) all.push_back(D(a, b));
    KtriResult r;
    const auto [lo, hi] = std::minmax_element(all.begin(), all.end());
    // exactly equal distances give sigma = 0 rather than a rounding residue
    r.sigma_D = *lo == *hi ? 0.0 : std::sqrt(variance(all));
    if (N <= exact_limit) {
        r.values.reserve(N * (N - 1) * (N - 2) / 6);
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = a + 1; b < N; ++b)
                for (std::size_t c = b + 1; c < N; ++c) r.values.push_back(ktri(D(a, b), D(b, c), D(a, c), r.sigma_D));
    } else {
        r.sampled = true;
        Rng rng = make_stream(seed, {kTriplet});
        std::uniform_int_distribution<std::size_t> pick(0, N - 1);
        r.values.reserve(samples);
        while (r.values.size() < samples) {
            const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
            if (a == b || b == c || a == c) continue;
            r.values.push_back(ktri(D(a, b), D(b, c), D(a, c), r.sigma_D));
        }
    }
    r.mean = mean(r.values);
    r.variance = variance(r.values);
    r.hist.assign(KtriResult::kBins, 0.0);
    for (double v : r.values) {
        const int k = int(v / KtriResult::kMax * KtriResult::kBins);
        r.hist[std::clamp(k, 0, KtriResult::kBins - 1)] += 1.0 / r.values.size();
    }
    return r;
}

inline KtriResult ktri_distribution(const Ensemble& ens, std::uint64_t seed = 0) {
    return ktri_from_distances(distance_matrix(ens), seed);
}

// 1 - sum sqrt(p q) over normalized histograms
inline double hellinger(const Histogram2D& p, const Histogram2D& q) {
    if (!p.same_binning(q)) throw std::invalid_argument("hellinger: binning mismatch");
    const Histogram2D a = p.as_normalized(), b = q.as_normalized();
    double s = 0.0;
    for (std::size_t k = 0; k < a.counts.size(); ++k) s += std::sqrt(a.counts[k] * b.counts[k]);
    return std::max(0.0, 1.0 - s);
}

struct BootstrapResult {
    double mean_distance = 0.0;
    std::vector<double> distances;
};

// Replica-level bootstrap of one disorder instance.
inline BootstrapResult bootstrap(const Ensemble& ens, int n_boot, std::uint64_t seed, bool symmetrize = true) {
    if (n_boot < 2) throw std::invalid_argument("bootstrap: n_boot must be >= 2");
    const OverlapHistogram ref = build_histogram(ens, symmetrize);
    BootstrapResult r;
    std::uniform_int_distribution<std::size_t> pick(0, ens.size() - 1);
    for (int k = 0; k < n_boot; ++k) {
        Rng rng = make_stream(seed, {kBootstrap, std::uint64_t(k)});
        Ensemble res(ens.size());
        for (auto& s : res) s = ens[pick(rng)];
        r.distances.push_back(hellinger(ref, build_histogram(res, symmetrize)));
    }
    r.mean_distance = mean(r.distances);
    return r;
}

// Disorder-level bootstrap of an aggregate.
inline BootstrapResult bootstrap(const std::vector<OverlapHistogram>& hs, int n_boot, std::uint64_t seed) {
    if (n_boot < 2) throw std::invalid_argument("bootstrap: n_boot must be >= 2");
    const OverlapHistogram ref = parisi_aggregate(hs);
    BootstrapResult r;
    std::uniform_int_distribution<std::size_t> pick(0, hs.size() - 1);
    for (int k = 0; k < n_boot; ++k) {
        Rng rng = make_stream(seed, {kBootstrap, std::uint64_t(k), 1});
        std::vector<OverlapHistogram> res(hs.size());
        for (auto& h : res) h = hs[pick(rng)];
        r.distances.push_back(hellinger(ref, parisi_aggregate(res)));
    }
    r.mean_distance = mean(r.distances);
    return r;
}

struct LineFit {
    double slope = 0.0, intercept = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need matching samples, n >= 2");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

struct TcEstimate {
    double Tc = 0.0;
    LineFit low, high;
};

// Intersection of least-squares lines fitted inside [low.first, low.second] and [high.first, high.second].
inline TcEstimate estimate_tc(const std::vector<double>& temps, const std::vector<double>& mags,
                              std::pair<double, double> low_range, std::pair<double, double> high_range) {
    if (temps.size() != mags.size()) throw std::invalid_argument("estimate_tc: length mismatch");
    std::vector<double> xl, yl, xh, yh;
    for (std::size_t i = 0; i < temps.size(); ++i) {
        if (temps[i] >= low_range.first && temps[i] <= low_range.second) {
            xl.push_back(temps[i]);
            yl.push_back(mags[i]);
        }
        if (temps[i] >= high_range.first && temps[i] <= high_range.second) {
            xh.push_back(temps[i]);
            yh.push_back(mags[i]);
        }
    }
    if (xl.size() < 3 || xh.size() < 3) throw std::invalid_argument("estimate_tc: need >= 3 points per range");
    TcEstimate t;
    t.low = fit_line(xl, yl);
    t.high = fit_line(xh, yh);
    const double ds = t.low.slope - t.high.slope;
    if (std::abs(ds) < 1e-14 * std::max({1.0, std::abs(t.low.slope), std::abs(t.high.slope)}))
        throw std::runtime_error("estimate_tc: fitted lines are parallel");
    t.Tc = (t.high.intercept - t.low.intercept) / ds;
    return t;
}

struct Histogram1D {
    double lo = 0.0, hi = 1.0;
    std::vector<double> density;  // normalized to unit area
};

inline Histogram1D histogram_1d(const std::vector<double>& x, double lo, double hi, int bins) {
    Histogram1D h{lo, hi, std::vector<double>(bins, 0.0)};
    const double w = (hi - lo) / bins;
    for (double v : x) {
        const int k = int(std::floor((v - lo) / w));
        if (k >= 0 && k < bins) h.density[k] += 1.0;
    }
    for (auto& d : h.density) d /= (double(x.size()) * w);
    return h;
}

struct EnsembleDiagnostics {
    std::vector<double> eigenvalues;  // pooled J_non eigenvalues
    std::vector<double> spacings;     // nearest-neighbour spacings, unit mean per instance
    std::vector<double> goe_eigenvalues;
    std::vector<double> goe_spacings;
    Histogram1D eig_hist, spacing_hist, goe_eig_hist, goe_spacing_hist;
};

namespace detail {
inline void spectrum_stats(const Mat& A, std::vector<double>& eig, std::vector<double>& sp) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("ensemble_diagnostics: eigensolver failed");
    const Vec& e = es.eigenvalues();
    for (Eigen::Index k = 0; k < e.size(); ++k) eig.push_back(e(k));
    if (e.size() < 2) return;
    const double mean_sp = (e(e.size() - 1) - e(0)) / double(e.size() - 1);
    if (!(mean_sp > 0)) return;
    for (Eigen::Index k = 0; k + 1 < e.size(); ++k) sp.push_back((e(k + 1) - e(k)) / mean_sp);
}
}  // namespace detail

// Pooled spectra plus a Gaussian orthogonal ensemble reference of the same size sampled directly.
// Eigenvalues are scaled by sqrt(n) / (2 sigma_offdiag) per instance for comparison with the semicircle
// on [-1, 1]; spacings are scale free.
inline EnsembleDiagnostics ensemble_diagnostics(const std::vector<CouplingSet>& cs, std::uint64_t seed = 0,
                                                int goe_samples = 2000) {
    if (cs.size() < 10) throw std::invalid_argument("ensemble_diagnostics: need at least 10 instances");
    const auto n = cs[0].size();
    EnsembleDiagnostics d;
    for (const auto& c : cs) {
        if (c.size() != n) throw std::invalid_argument("ensemble_diagnostics: instances differ in size");
        std::vector<double> off;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) off.push_back(c.J_non(i, j));
        double s = std::sqrt(variance(off) + std::pow(mean(off), 2));
        if (!(s > 0)) s = std::max(c.J_non.cwiseAbs().maxCoeff(), 1e-300);
        std::vector<double> eig;
        detail::spectrum_stats(c.J_non, eig, d.spacings);
        for (double e : eig) d.eigenvalues.push_back(e / (2.0 * s * std::sqrt(double(n))));
    }
    Rng rng = make_stream(seed, {kGoe});
    std::normal_distribution<double> g(0.0, 1.0);
    for (int k = 0; k < goe_samples; ++k) {
        Mat A(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) {
                const double v = (i == j ? std::sqrt(2.0) : 1.0) * g(rng);
                A(i, j) = A(j, i) = v;
            }
        std::vector<double> eig;
        detail::spectrum_stats(A, eig, d.goe_spacings);
        for (double e : eig) d.goe_eigenvalues.push_back(e / (2.0 * std::sqrt(double(n))));
    }
    d.eig_hist = histogram_1d(d.eigenvalues, -1.5, 1.5, 30);
    d.goe_eig_hist = histogram_1d(d.goe_eigenvalues, -1.5, 1.5, 30);
    d.spacing_hist = histogram_1d(d.spacings, 0.0, 4.0, 20);
    d.goe_spacing_hist = histogram_1d(d.goe_spacings, 0.0, 4.0, 20);
    return d;
}

struct Magnetization {
    double mx = 0.0, my = 0.0;
};

inline Magnetization magnetization(const SpinConfiguration& s) {
    Magnetization m;
    for (std::size_t i = 0; i < s.size(); ++i) {
        m.mx += s.radius(i) * std::cos(s.thetas[i]);
        m.my += s.radius(i) * std::sin(s.thetas[i]);
    }
    m.mx /= double(s.size());
    m.my /= double(s.size());
    return m;
}

inline Histogram2D magnetization_histogram(const Ensemble& ens) {
    if (ens.empty()) throw std::invalid_argument("magnetization: need at least one replica");
    Histogram2D h;
    for (const auto& s : ens) {
        const Magnetization m = magnetization(s);
        h.add(m.mx, m.my);
    }
    return h.as_normalized();
}

}  // namespace cglass
