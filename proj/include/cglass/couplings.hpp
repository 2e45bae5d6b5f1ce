#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cglass/rng.hpp"

namespace cglass {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

struct VertexConfig {
    std::vector<Vec2> positions;  // um, cavity midplane
    double sigma_A = 4.0;         // um
    std::vector<double> atom_numbers;
    double w0 = 35.0;             // um
    double coupling_scale = 1.0;

    std::size_t size() const { return positions.size(); }

    // Minimum allowed distance between a vertex and another vertex or its mirror image.
    double min_separation() const { return 0.1 * sigma_A; }

    void validate() const {
        const std::size_t n = positions.size();
        if (n < 1) throw std::invalid_argument("VertexConfig: need at least one vertex");
        if (!(sigma_A > 0)) throw std::invalid_argument("VertexConfig: sigma_A must be > 0");
        if (!(w0 > 0)) throw std::invalid_argument("VertexConfig: w0 must be > 0");
        if (atom_numbers.size() != n)
            throw std::invalid_argument("VertexConfig: atom_numbers length != positions length");
        for (double a : atom_numbers)
            if (!(a > 0)) throw std::invalid_argument("VertexConfig: atom numbers must be > 0");
        const double tol = min_separation();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if ((positions[i] - positions[j]).norm() < tol)
                    throw std::invalid_argument("VertexConfig: vertices " + std::to_string(i) + " and " +
                                                std::to_string(j) + " coincide");
                if ((positions[i] + positions[j]).norm() < tol)
                    throw std::invalid_argument("VertexConfig: vertex " + std::to_string(i) +
                                                " coincides with the mirror image of " + std::to_string(j));
            }
    }

    double w_eff() const {
        const double s2 = sigma_A * sigma_A, w2 = w0 * w0;
        return w0 * std::sqrt(1.0 + 4.0 * s2 * s2 / (w2 * w2));
    }
};

struct CouplingSet {
    Mat J_local;
    Mat J_non;
    Mat K;
    double scale = 1.0;
    std::string provenance;

    Eigen::Index size() const { return J_non.rows(); }

    void validate(double rel_tol = 1e-12) const {
        const auto n = J_non.rows();
        if (n < 1 || J_non.cols() != n || K.rows() != n || K.cols() != n || J_local.rows() != n ||
            J_local.cols() != n)
            throw std::invalid_argument("CouplingSet: matrices must be square and of equal size");
        auto check = [&](const Mat& A, const char* name) {
            const double ref = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
            if ((A - A.transpose()).cwiseAbs().maxCoeff() > rel_tol * ref)
                throw std::invalid_argument(std::string("CouplingSet: ") + name + " is not symmetric");
        };
        check(J_local, "J_local");
        check(J_non, "J_non");
        check(K, "K");
    }

    Mat J_c() const { return J_local + J_non; }
    Mat J_s() const { return J_local - J_non; }
};

struct EnsembleSpec {
    int n = 8;
    double mean_J = 0.0;
    double std_J = 1.0;
    double std_K = 0.5;
    double local_ratio = 100.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 2) throw std::invalid_argument("EnsembleSpec: n must be >= 2");
        if (!(std_J > 0)) throw std::invalid_argument("EnsembleSpec: std_J must be > 0");
        if (!(std_K >= 0)) throw std::invalid_argument("EnsembleSpec: std_K must be >= 0");
    }
};

// G^+(r, r', phi) for the harmonic-oscillator propagator, symmetrized over r' -> -r'.
inline std::complex<double> greens_plus(const Vec2& r, const Vec2& rp, std::complex<double> phi, double w0) {
    using C = std::complex<double>;
    const C sh = std::sinh(phi);
    if (std::abs(sh) < 1e-12) throw std::invalid_argument("greens_plus: degenerate kernel, |sinh(phi)| < 1e-12");
    const C pre = std::exp(phi) / (2.0 * sh);
    const C th = std::tanh(phi / 2.0);
    const double w2 = w0 * w0;
    auto G = [&](const Vec2& b) {
        const double dm = (r - b).squaredNorm(), dp = (r + b).squaredNorm();
        // coth = 1/tanh, so the second term is dp*tanh/(2 w0^2)
        return pre * std::exp(-dm / (2.0 * w2 * th) - dp * th / (2.0 * w2));
    };
    return 0.5 * (G(rp) + G(-rp));
}

// Closed-form couplings for Gaussian vertices of width sigma_A. Entries are in units of the
// coupling scale; K is the gradient-free form with g_i = -2 r_i / w_eff^2.
inline CouplingSet from_geometry(const VertexConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(cfg.size());
    const double J0 = cfg.coupling_scale, s2 = cfg.sigma_A * cfg.sigma_A, w2 = cfg.w0 * cfg.w0;
    const double we = cfg.w_eff(), we2 = we * we, we4 = we2 * we2;
    CouplingSet c;
    c.J_local = Mat::Zero(n, n);
    c.J_non = Mat::Zero(n, n);
    c.K = Mat::Zero(n, n);
    c.scale = J0;
    c.provenance = "geometry";
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            const Vec2& ri = cfg.positions[i];
            const Vec2& rj = cfg.positions[j];
            const double dm = (ri - rj).squaredNorm(), dp = (ri + rj).squaredNorm();
            const double jl = J0 * w2 / (8.0 * s2) * (std::exp(-dm / (4.0 * s2)) + std::exp(-dp / (4.0 * s2)));
            const double rr = ri.squaredNorm() + rj.squaredNorm();
            const double dot = ri.dot(rj);
            const double env = std::exp(-(2.0 * s2 / we2) * rr / w2);
            const double arg = 2.0 * dot / we2;
            const double jn = J0 * (w2 / we2) * env * std::cos(arg);
            const double k = (2.0 * J0 * s2 / we2) * env *
                             (4.0 * w2 * dot / we4 * std::sin(arg) + 4.0 * s2 * rr / we4 * std::cos(arg));
            c.J_local(i, j) = c.J_local(j, i) = jl;
            c.J_non(i, j) = c.J_non(j, i) = jn;
            c.K(i, j) = c.K(j, i) = k;
        }
    return c;
}

inline CouplingSet sample_sk(const EnsembleSpec& spec) {
    spec.validate();
    const int n = spec.n;
    Rng rng = make_stream(spec.seed, {kSample});
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sd_j = spec.std_J / std::sqrt(double(n));
    const double sd_k = spec.std_K / std::sqrt(double(n));
    const double mu_j = spec.mean_J / n;
    CouplingSet c;
    c.J_non = Mat::Zero(n, n);
    c.K = Mat::Zero(n, n);
    // Draw order is fixed (J then K per upper-triangle entry) to keep the stream reproducible.
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double a = mu_j + sd_j * gauss(rng);
            const double b = sd_k * gauss(rng);
            c.J_non(i, j) = c.J_non(j, i) = a;
            c.K(i, j) = c.K(j, i) = b;
        }
    c.J_local = Mat::Identity(n, n) * (spec.local_ratio * spec.std_J);
    c.scale = spec.std_J;
    c.provenance = "sk";
    return c;
}

inline CouplingSet gauge_transform(const CouplingSet& c, const std::vector<int>& flips) {
    const auto n = c.size();
    Vec sign = Vec::Ones(n);
    for (int i : flips) {
        if (i < 0 || i >= n) throw std::out_of_range("gauge_transform: flip index out of range");
        sign(i) = -1.0;
    }
    CouplingSet out = c;
    out.J_non = sign.asDiagonal() * c.J_non * sign.asDiagonal();
    out.K = sign.asDiagonal() * c.K * sign.asDiagonal();
    return out;
}

inline Mat threshold_matrix(const CouplingSet& c) {
    const auto n = c.size();
    Mat M(2 * n, 2 * n);
    M.topLeftCorner(n, n) = c.J_local + c.J_non;
    M.topRightCorner(n, n) = c.K;
    M.bottomLeftCorner(n, n) = c.K;
    M.bottomRightCorner(n, n) = c.J_local - c.J_non;
    return M;
}

struct Threshold {
    double lambda_max = 0.0;
    Vec eigvals;  // ascending
};

inline Threshold threshold(const CouplingSet& c) {
    Eigen::SelfAdjointEigenSolver<Mat> es(threshold_matrix(c), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("threshold: eigensolver did not converge");
    Threshold t;
    t.eigvals = es.eigenvalues();
    t.lambda_max = t.eigvals.maxCoeff();
    return t;
}

// Largest |eigenvalue| of J_non, the energy scale used for Tc.
inline double jnon_spectral_radius(const CouplingSet& c) {
    Eigen::SelfAdjointEigenSolver<Mat> es(c.J_non, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("jnon_spectral_radius: eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace cglass
