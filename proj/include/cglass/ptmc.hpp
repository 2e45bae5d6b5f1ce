#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/rng.hpp"

namespace cglass {

inline std::vector<double> geometric_ladder(double t_min, double t_max, int count) {
    if (count < 2 || !(t_min > 0) || !(t_max > t_min)) throw std::invalid_argument("geometric_ladder: bad range");
    std::vector<double> t(count);
    for (int k = 0; k < count; ++k) t[k] = t_min * std::pow(t_max / t_min, double(k) / (count - 1));
    return t;
}

struct PtmcParams {
    std::vector<double> temperatures = geometric_ladder(0.1, 2.0, 20);
    long long steps = 0;          // single-spin update steps per chain, including burn-in
    long long swap_interval = 0;  // 0 means n
    double proposal_std = std::numbers::pi / 8;
    long long record_interval = 0;
    long long burn_in = 0;
    std::uint64_t seed = 0;

    // A sweep is n single-spin steps.
    static PtmcParams from_sweeps(int n, long long burn_in_sweeps, long long record_sweeps, long long records,
                                  std::uint64_t seed) {
        PtmcParams p;
        p.burn_in = burn_in_sweeps * n;
        p.record_interval = record_sweeps * n;
        p.steps = p.burn_in + records * p.record_interval;
        p.swap_interval = n;
        p.seed = seed;
        return p;
    }

    void validate() const {
        if (temperatures.empty()) throw std::invalid_argument("PtmcParams: empty temperature ladder");
        for (std::size_t k = 0; k < temperatures.size(); ++k) {
            if (!(temperatures[k] > 0)) throw std::invalid_argument("PtmcParams: temperatures must be > 0");
            if (k > 0 && !(temperatures[k] > temperatures[k - 1]))
                throw std::invalid_argument("PtmcParams: temperatures must be strictly increasing");
        }
        if (!(proposal_std > 0)) throw std::invalid_argument("PtmcParams: proposal_std must be > 0");
        if (swap_interval < 0) throw std::invalid_argument("PtmcParams: swap_interval must be >= 1");
        if (record_interval < 1) throw std::invalid_argument("PtmcParams: record_interval must be >= 1");
        if (burn_in < 0 || steps < burn_in) throw std::invalid_argument("PtmcParams: need 0 <= burn_in <= steps");
    }
};

struct PtmcRun {
    std::vector<double> temperatures;
    std::vector<std::vector<SpinConfiguration>> chains;  // [temperature][record]
    std::vector<std::vector<double>> energies;           // [temperature][record]
    std::vector<std::vector<long long>> record_steps;    // [temperature][record]
    std::vector<long long> swap_attempts;                // [pair k, k+1]
    std::vector<long long> swap_accepts;

    double acceptance(std::size_t k) const {
        return swap_attempts[k] ? double(swap_accepts[k]) / double(swap_attempts[k]) : 0.0;
    }
};

// One replica with cached trig values and energy.
struct Chain {
    SpinConfiguration s;
    std::vector<double> cs, sn;
    double E = 0.0;
    Rng rng;

    Chain(const CouplingSet& c, SpinConfiguration init, Rng r) : s(std::move(init)), rng(r) { refresh(c); }

    void refresh(const CouplingSet& c) {
        const auto n = s.size();
        cs.resize(n);
        sn.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            cs[i] = std::cos(s.thetas[i]);
            sn[i] = std::sin(s.thetas[i]);
        }
        E = energy_angle_only(c, s);
    }

    // Returns true if the move was accepted.
    bool step(const CouplingSet& c, double T, double proposal_std) {
        const auto n = c.size();
        const Eigen::Index i = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
        const double dt = std::normal_distribution<double>(0.0, proposal_std)(rng);
        const double t_new = wrap_angle(s.thetas[i] + dt);
        const LocalField f = local_field(c, cs, sn, i);
        const double dE = f(t_new) - f(s.thetas[i]);
        // draw the uniform unconditionally so the stream layout does not depend on dE
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        if (dE <= 0 || u < std::exp(-dE / T)) {
            s.thetas[i] = t_new;
            cs[i] = std::cos(t_new);
            sn[i] = std::sin(t_new);
            E += dE;
            return true;
        }
        return false;
    }
};

inline SpinConfiguration metropolis_step(const CouplingSet& c, const SpinConfiguration& s, double T, Rng& rng,
                                         double proposal_std = std::numbers::pi / 8) {
    if (!(T > 0)) throw std::invalid_argument("metropolis_step: T must be > 0");
    Chain ch(c, s, rng);
    ch.step(c, T, proposal_std);
    rng = ch.rng;
    return ch.s;
}

inline double swap_probability(double beta_k, double beta_k1, double E_k, double E_k1) {
    const double x = (beta_k - beta_k1) * (E_k - E_k1);
    return x >= 0 ? 1.0 : std::exp(x);
}

// Exchange configurations between slots k, k+1 for every k of the given parity (0 even, 1 odd).
// Returns one flag per attempted pair, in increasing k.
inline std::vector<bool> swap_pass(std::vector<Chain>& chains, const std::vector<double>& betas, int parity, Rng& rng,
                                   std::vector<long long>* attempts = nullptr,
                                   std::vector<long long>* accepts = nullptr) {
    if (chains.size() < 2) throw std::invalid_argument("swap_pass: need at least two temperatures");
    std::vector<bool> flags;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t k = std::size_t(parity & 1); k + 1 < chains.size(); k += 2) {
        const double p = swap_probability(betas[k], betas[k + 1], chains[k].E, chains[k + 1].E);
        const bool ok = uni(rng) < p;
        if (attempts) ++(*attempts)[k];
        if (ok) {
            // configurations move, each slot keeps its own RNG stream
            std::swap(chains[k].s, chains[k + 1].s);
            std::swap(chains[k].cs, chains[k + 1].cs);
            std::swap(chains[k].sn, chains[k + 1].sn);
            std::swap(chains[k].E, chains[k + 1].E);
            if (accepts) ++(*accepts)[k];
        }
        flags.push_back(ok);
    }
    return flags;
}

inline PtmcRun run(const CouplingSet& c, const PtmcParams& p) {
    p.validate();
    const auto n = c.size();
    const std::size_t K = p.temperatures.size();
    const long long swap_every = p.swap_interval > 0 ? p.swap_interval : n;
    std::vector<double> betas(K);
    for (std::size_t k = 0; k < K; ++k) betas[k] = 1.0 / p.temperatures[k];

    std::vector<Chain> chains;
    chains.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        Rng init = make_stream(p.seed, {kChain, k, 0});
        std::uniform_real_distribution<double> uni(0.0, 2 * std::numbers::pi);
        SpinConfiguration s;
        s.thetas.resize(n);
        for (auto& t : s.thetas) t = uni(init);
        chains.emplace_back(c, std::move(s), make_stream(p.seed, {kChain, k, 1}));
    }
    Rng swap_rng = make_stream(p.seed, {kSwap});

    PtmcRun out;
    out.temperatures = p.temperatures;
    out.chains.resize(K);
    out.energies.resize(K);
    out.record_steps.resize(K);
    out.swap_attempts.assign(K > 0 ? K - 1 : 0, 0);
    out.swap_accepts.assign(K > 0 ? K - 1 : 0, 0);
    const long long expected = (p.steps - p.burn_in) / p.record_interval;
    for (std::size_t k = 0; k < K; ++k) {
        out.chains[k].reserve(expected);
        out.energies[k].reserve(expected);
    }

    long long done = 0;
    int parity = 0;
    while (done < p.steps) {
        const long long block = std::min(swap_every, p.steps - done);
        for (std::size_t k = 0; k < K; ++k) {
            Chain& ch = chains[k];
            for (long long s = 1; s <= block; ++s) {
                ch.step(c, p.temperatures[k], p.proposal_std);
                const long long t = done + s;
                if (t > p.burn_in && (t - p.burn_in) % p.record_interval == 0) {
                    out.chains[k].push_back(ch.s);
                    out.energies[k].push_back(ch.E);
                    out.record_steps[k].push_back(t);
                }
            }
        }
        done += block;
        if (K >= 2 && done < p.steps && done % swap_every == 0) {
            swap_pass(chains, betas, parity, swap_rng, &out.swap_attempts, &out.swap_accepts);
            parity ^= 1;
        }
    }
    // the running energy accumulates rounding, so recorded values are recomputed exactly
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t r = 0; r < out.chains[k].size(); ++r) out.energies[k][r] = energy_angle_only(c, out.chains[k][r]);
    return out;
}

}  // namespace cglass
