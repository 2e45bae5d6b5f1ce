#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/io.hpp"
#include "cglass/mftraj.hpp"
#include "cglass/parallel.hpp"
#include "cglass/ptmc.hpp"
#include "cglass/replica.hpp"
#include "cglass/rsb.hpp"

// Config-driven stages binding the modules together. Each stage reads one JSON document and
// writes its data files plus manifest.json into the output directory.

namespace cglass::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numerical failure inside a module, tagged with the stage that raised it.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

// Typed access into a JSON object that reports the offending field path and rejects unknown keys.
class Section {
  public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    std::string where(const std::string& key = {}) const {
        if (key.empty()) return path_.empty() ? std::string("config") : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    T get(const std::string& key, const T& fallback) const {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        return convert<T>(key);
    }

    template <class T>
    T require(const std::string& key) const {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(where(key) + ": required field missing");
        return convert<T>(key);
    }

    Section sub(const std::string& key) const {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(where(key) + ": required section missing");
        return Section(j_.at(key), where(key));
    }

    const json& raw(const std::string& key) const {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }

  private:
    template <class T>
    T convert(const std::string& key) const {
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    const json& j_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

struct RunOptions {
    fs::path config_path;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    int threads = 1;
};

struct Context {
    json config;
    fs::path base;  // directory of the config file, for relative inputs
    fs::path out;
    std::uint64_t seed = 0;
    bool has_seed = false;
    int threads = 1;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
    std::vector<std::pair<std::string, std::string>> outputs;  // relative path, hash

    fs::path input(const std::string& p) {
        fs::path q(p);
        if (q.is_relative()) q = base / q;
        if (!fs::exists(q)) throw ConfigError("input file does not exist: " + q.string());
        inputs.emplace_back(q.string(), sha256_hex(io::read_file(q)));
        return q;
    }

    void write(const std::string& rel, const std::string& data) {
        io::write_file(out / rel, data);
        outputs.emplace_back(rel, sha256_hex(data));
    }

    void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

    std::uint64_t need_seed(const char* mode) const {
        if (!has_seed) throw ConfigError(std::string("seed: required for stochastic mode '") + mode + "'");
        return seed;
    }
};

// ---- shared config readers ----

inline EnsembleSpec read_sk(const Section& s, std::uint64_t seed) {
    EnsembleSpec e;
    e.n = s.get<int>("n", e.n);
    e.mean_J = s.get<double>("mean_J", e.mean_J);
    e.std_J = s.get<double>("std_J", e.std_J);
    e.std_K = s.get<double>("std_K", e.std_K);
    e.local_ratio = s.get<double>("local_ratio", e.local_ratio);
    e.seed = seed;
    s.finish();
    try {
        e.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(s.where() + ": " + ex.what());
    }
    return e;
}

inline std::vector<double> read_temperatures(const Section& s) {
    if (s.has("temperatures")) {
        const json& t = s.raw("temperatures");
        if (!t.is_array()) throw ConfigError(s.where("temperatures") + ": expected an array");
        std::vector<double> out;
        for (const auto& v : t) {
            if (!v.is_number()) throw ConfigError(s.where("temperatures") + ": expected numbers");
            out.push_back(v.get<double>());
        }
        return out;
    }
    if (s.has("ladder")) {
        Section l = s.sub("ladder");
        const double lo = l.get<double>("t_min", 0.1), hi = l.get<double>("t_max", 2.0);
        const int k = l.get<int>("count", 20);
        l.finish();
        try {
            return geometric_ladder(lo, hi, k);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(l.where() + ": " + e.what());
        }
    }
    return geometric_ladder(0.1, 2.0, 20);
}

inline PumpSchedule read_schedule(const Section& s) {
    PumpSchedule sch;
    const json& segs = s.raw("segments");
    if (!segs.is_array() || segs.empty()) throw ConfigError(s.where("segments") + ": expected a non-empty array");
    for (std::size_t k = 0; k < segs.size(); ++k) {
        Section g(segs[k], s.where("segments") + "[" + std::to_string(k) + "]");
        PumpSegment seg;
        seg.t0 = g.require<double>("t0_ms");
        seg.t1 = g.require<double>("t1_ms");
        const json& p = g.raw("power_rel");
        if (p.is_number()) {
            seg.p0 = seg.p1 = p.get<double>();
        } else if (p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number()) {
            seg.p0 = p[0].get<double>();
            seg.p1 = p[1].get<double>();
        } else {
            throw ConfigError(g.where("power_rel") + ": expected a number or [start, end]");
        }
        g.finish();
        sch.segments.push_back(seg);
    }
    Section r = s.sub("readout");
    sch.readout_start = r.require<double>("start_ms");
    sch.readout_duration = r.require<double>("dur_ms");
    r.finish();
    s.finish();
    try {
        sch.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(s.where() + ": " + e.what());
    }
    return sch;
}

inline Ensemble select_replicas(const std::vector<io::ReplicaRow>& rows, long long temperature_index) {
    Ensemble e;
    for (const auto& r : rows)
        if (temperature_index < 0 || r.temperature_index == temperature_index) e.push_back(r.config);
    return e;
}

// ---- stages ----

inline void stage_couplings(Context& ctx, const Section& s) {
    CouplingSet c;
    if (s.has("positions")) {
        const fs::path p = ctx.input(s.require<std::string>("positions"));
        VertexConfig cfg = io::read_positions(p, s.get<double>("sigma_A", 4.0), s.get<double>("w0", 35.0));
        cfg.coupling_scale = s.get<double>("coupling_scale", 1.0);
        s.finish();
        try {
            c = from_geometry(cfg);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("couplings: ") + e.what());
        }
    } else if (s.has("sk")) {
        const EnsembleSpec e = read_sk(s.sub("sk"), ctx.need_seed("couplings"));
        s.finish();
        c = sample_sk(e);
    } else {
        throw ConfigError(s.where() + ": need either 'positions' or 'sk'");
    }
    const Threshold th = threshold(c);
    ctx.write_json("couplings.json", io::couplings_json(c));
    ctx.write_json("threshold.json", json{{"lambda_max", th.lambda_max},
                                          {"eigvals", std::vector<double>(th.eigvals.data(), th.eigvals.data() + th.eigvals.size())},
                                          {"jnon_spectral_radius", jnon_spectral_radius(c)}});
}

inline void stage_ensemble(Context& ctx, const Section& s) {
    const std::uint64_t seed = ctx.need_seed("ensemble");
    const int count = s.require<int>("count");
    if (count < 1) throw ConfigError(s.where("count") + ": must be >= 1");
    const std::string kind = s.get<std::string>("kind", "sk");
    const bool diagnostics = s.get<bool>("diagnostics", count >= 10);
    std::vector<CouplingSet> sets;
    json files = json::array();
    auto name = [](int k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "instance_%04d", k);
        return std::string(buf);
    };
    if (kind == "sk") {
        const EnsembleSpec base = read_sk(s.sub("sk"), 0);
        s.finish();
        for (int k = 0; k < count; ++k) {
            EnsembleSpec e = base;
            e.seed = stream_seed(seed, {kEnsemble, std::uint64_t(k)});
            sets.push_back(sample_sk(e));
        }
    } else if (kind == "geometry") {
        Section g = s.sub("geometry");
        const int n = g.require<int>("n");
        const double w0 = g.get<double>("w0", 35.0), sigma = g.get<double>("sigma_A", 4.0);
        const double radius = g.get<double>("radius_um", 0.75 * w0);
        const double min_sep = g.get<double>("min_separation_um", 2.0 * sigma);
        const double atoms = g.get<double>("atoms", 2.3e5);
        const long long attempts = g.get<long long>("max_attempts", 100000);
        g.finish();
        s.finish();
        if (n < 1) throw ConfigError(g.where("n") + ": must be >= 1");
        for (int k = 0; k < count; ++k) {
            Rng rng = make_stream(seed, {kEnsemble, std::uint64_t(k), 1});
            std::uniform_real_distribution<double> u(0.0, 1.0);
            VertexConfig cfg;
            cfg.w0 = w0;
            cfg.sigma_A = sigma;
            long long tries = 0;
            while (int(cfg.positions.size()) < n) {
                if (++tries > attempts)
                    throw NumericalError("ensemble: position sampling failed after " + std::to_string(attempts) +
                                         " attempts (packing too dense)");
                // uniform in the disc
                const double r = radius * std::sqrt(u(rng)), a = 2.0 * std::numbers::pi * u(rng);
                const Vec2 p(r * std::cos(a), r * std::sin(a));
                bool ok = p.norm() >= 0.5 * min_sep;  // distance to its own mirror image is 2|p|
                for (const auto& q : cfg.positions)
                    if ((p - q).norm() < min_sep || (p + q).norm() < min_sep) ok = false;
                if (ok) cfg.positions.push_back(p);
            }
            cfg.atom_numbers.assign(std::size_t(n), atoms);
            ctx.write("positions/" + name(k) + ".csv", io::positions_csv(cfg));
            sets.push_back(from_geometry(cfg));
        }
    } else {
        throw ConfigError(s.where("kind") + ": expected 'sk' or 'geometry'");
    }
    for (int k = 0; k < count; ++k) {
        const std::string f = "couplings/" + name(k) + ".json";
        ctx.write_json(f, io::couplings_json(sets[std::size_t(k)]));
        files.push_back(f);
    }
    json summary{{"count", count}, {"kind", kind}, {"files", files}};
    if (diagnostics) {
        if (count < 10) throw ConfigError(s.where("diagnostics") + ": needs at least 10 instances");
        const EnsembleDiagnostics d = ensemble_diagnostics(sets, stream_seed(seed, {kGoe}));
        auto hist = [](const Histogram1D& h) { return json{{"lo", h.lo}, {"hi", h.hi}, {"density", h.density}}; };
        ctx.write_json("diagnostics.json", json{{"eigenvalues", hist(d.eig_hist)},
                                                {"spacings", hist(d.spacing_hist)},
                                                {"goe_eigenvalues", hist(d.goe_eig_hist)},
                                                {"goe_spacings", hist(d.goe_spacing_hist)}});
    }
    ctx.write_json("ensemble.json", summary);
}

inline void stage_ptmc(Context& ctx, const Section& s) {
    const std::uint64_t seed = ctx.need_seed("ptmc");
    std::vector<std::string> files;
    const json& cj = s.raw("couplings");
    if (cj.is_string()) {
        files.push_back(cj.get<std::string>());
    } else if (cj.is_array()) {
        for (const auto& v : cj) {
            if (!v.is_string()) throw ConfigError(s.where("couplings") + ": expected file names");
            files.push_back(v.get<std::string>());
        }
    } else {
        throw ConfigError(s.where("couplings") + ": expected a file name or a list of them");
    }
    std::vector<CouplingSet> cs;
    for (const auto& f : files) cs.push_back(io::read_couplings(ctx.input(f)));
    PtmcParams base;
    base.temperatures = read_temperatures(s);
    const long long burn = s.get<long long>("burn_in_sweeps", 10000);
    const long long every = s.get<long long>("record_sweeps", 100);
    const long long records = s.get<long long>("records", 100);
    const double prop = s.get<double>("proposal_std", base.proposal_std);
    const long long swap = s.get<long long>("swap_interval", 0);
    const bool ground = s.get<bool>("energies", false);
    s.finish();
    std::vector<PtmcRun> runs(cs.size());
    parallel_for(cs.size(), ctx.threads, [&](std::size_t k) {
        const int n = int(cs[k].size());
        PtmcParams p = PtmcParams::from_sweeps(n, burn, every, records, stream_seed(seed, {kChain, k}));
        p.temperatures = base.temperatures;
        p.proposal_std = prop;
        p.swap_interval = swap;
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("ptmc: ") + e.what());
        }
        runs[k] = run(cs[k], p);
    });
    json acc = json::array();
    std::string csv;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const std::string body = io::ptmc_csv(runs[k], (long long)k);
        csv += k == 0 ? body : body.substr(body.find('\n') + 1);
        acc.push_back(io::acceptance_json(runs[k]));
    }
    ctx.write("replicas.csv", csv);
    ctx.write_json("acceptance.json", acc);
    if (ground) {
        std::string e = "run_id,temperature_index,replica_id,E,E_over_abs_Egs\n";
        for (std::size_t k = 0; k < runs.size(); ++k) {
            const GroundState gs = ground_state(cs[k], stream_seed(seed, {kAnneal, k}), 8);
            for (std::size_t t = 0; t < runs[k].chains.size(); ++t)
                for (std::size_t r = 0; r < runs[k].chains[t].size(); ++r) {
                    const EnergyReport rep = energy_report(cs[k], runs[k].chains[t][r], gs.E_gs);
                    e += std::to_string(k) + "," + std::to_string(t) + "," + std::to_string(r) + "," + io::fmt17(rep.E) +
                         "," + io::fmt17(rep.normalized) + "\n";
                }
        }
        ctx.write("energies.csv", e);
    }
}

inline void stage_mftraj(Context& ctx, const Section& s) {
    TrajectoryParams tp;
    tp.seed = ctx.need_seed("mftraj");
    const CouplingSet c = io::read_couplings(ctx.input(s.require<std::string>("couplings")));
    const auto n_traj = s.get<long long>("trajectories", 200);
    if (n_traj < 1) throw ConfigError(s.where("trajectories") + ": must be >= 1");
    const PumpSchedule sched = s.has("schedule") ? read_schedule(s.sub("schedule")) : PumpSchedule::experiment();
    tp.dt = s.get<double>("dt_ms", tp.dt);
    tp.kappa_over_deltaC = s.get<double>("kappa_over_deltaC", tp.kappa_over_deltaC);
    tp.recoil = s.get<double>("recoil_rad_per_ms", tp.recoil);
    tp.delta_a = s.get<double>("delta_a_rad_per_ms", tp.delta_a);
    tp.omega_c2 = s.get<double>("omega_c2", tp.omega_c2);
    tp.atoms = s.get<double>("atoms", tp.atoms);
    tp.perturbation_std = s.get<double>("perturbation_std", tp.perturbation_std);
    tp.noise = s.get<bool>("noise", tp.noise);
    tp.superradiant_threshold = s.get<double>("superradiant_threshold", tp.superradiant_threshold);
    const std::string integ = s.get<std::string>("integrator", "rk4");
    if (integ == "rk4") tp.integrator = Integrator::rk4;
    else if (integ == "euler") tp.integrator = Integrator::euler;
    else throw ConfigError(s.where("integrator") + ": expected 'rk4' or 'euler'");
    s.finish();
    try {
        tp.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("mftraj: ") + e.what());
    }
    const EnsembleResult r = run_ensemble(c, sched, tp, std::size_t(n_traj), ctx.threads);
    std::vector<io::ReplicaRow> rows;
    std::string traj = "trajectory,superradiant,mean_amplitude\n";
    for (std::size_t k = 0; k < r.trajectories.size(); ++k) {
        const auto& t = r.trajectories[k];
        traj += std::to_string(k) + "," + (t.superradiant ? "1" : "0") + "," + io::fmt17(t.mean_amplitude) + "\n";
        if (t.superradiant) rows.push_back({(long long)k, 0, 0, t.config});
    }
    ctx.write("replicas.csv", rows.empty() ? io::replica_header(std::size_t(c.size())) : io::replicas_csv(rows));
    ctx.write("trajectories.csv", traj);
    ctx.write_json("mftraj.json", json{{"trajectories", n_traj},
                                       {"superradiant", n_traj - (long long)r.non_superradiant},
                                       {"non_superradiant", r.non_superradiant},
                                       {"mean_amplitude", r.mean_amplitude()}});
}

inline void stage_analyze(Context& ctx, const Section& s) {
    const auto rows = io::read_replicas(ctx.input(s.require<std::string>("replicas")));
    const long long tidx = s.get<long long>("temperature_index", -1);
    const bool sym = s.get<bool>("symmetrize", true);
    const int n_boot = s.get<int>("bootstrap", 100);
    const double q0 = s.get<double>("q0", 0.26);
    const bool do_cluster = s.get<bool>("cluster", true);
    const std::string cpath = s.get<std::string>("couplings", "");
    s.finish();
    const Ensemble ens = select_replicas(rows, tidx);
    if (ens.size() < 3) throw ConfigError("analyze: need at least three replicas, found " + std::to_string(ens.size()));
    const std::uint64_t seed = ctx.has_seed ? ctx.seed : 0;
    const OverlapHistogram h = build_histogram(ens, sym);
    io::write_histogram(ctx.out / "overlap.csv", h, "analyze");
    ctx.outputs.emplace_back("overlap.csv", sha256_hex(io::read_file(ctx.out / "overlap.csv")));
    ctx.outputs.emplace_back("overlap.json", sha256_hex(io::read_file(ctx.out / "overlap.json")));
    ctx.write("marginal_Q.csv", io::marginal_csv(h.marginal_Q(), h, "Q"));
    ctx.write("marginal_R.csv", io::marginal_csv(h.marginal_R(), h, "R"));
    const Histogram2D mh = magnetization_histogram(ens);
    io::write_histogram(ctx.out / "magnetization.csv", mh, "analyze");
    ctx.outputs.emplace_back("magnetization.csv", sha256_hex(io::read_file(ctx.out / "magnetization.csv")));
    ctx.outputs.emplace_back("magnetization.json", sha256_hex(io::read_file(ctx.out / "magnetization.json")));
    std::vector<double> qs;
    for (std::size_t a = 0; a < ens.size(); ++a)
        for (std::size_t b = a + 1; b < ens.size(); ++b) qs.push_back(overlap(ens[a], ens[b]).Q());
    const KtriResult kt = ktri_distribution(ens, seed);
    json summary{{"replicas", ens.size()},
                 {"pairs", qs.size()},
                 {"plateau", plateau(h, q0)},
                 {"q0", q0},
                 {"ktri", {{"mean", kt.mean}, {"variance", kt.variance}, {"sigma_D", kt.sigma_D},
                           {"sampled", kt.sampled}, {"hist", kt.hist}, {"hist_max", KtriResult::kMax}}}};
    bool all_zero = true;
    for (double q : qs) all_zero = all_zero && q == 0.0;
    if (!all_zero) summary["binder_Q"] = binder_ratio(qs);
    if (n_boot >= 2) {
        const BootstrapResult b = bootstrap(ens, n_boot, seed, sym);
        summary["bootstrap"] = {{"n_boot", n_boot}, {"mean_hellinger", b.mean_distance}, {"distances", b.distances}};
    }
    if (do_cluster) ctx.write_json("dendrogram.json", io::dendrogram_json(cluster(ens)));
    if (!cpath.empty()) {
        const CouplingSet c = io::read_couplings(ctx.input(cpath));
        const GroundState gs = ground_state(c, stream_seed(seed, {kAnneal}), 8);
        std::vector<EnergyReport> reps;
        for (const auto& r : ens) reps.push_back(energy_report(c, r, gs.E_gs));
        ctx.write("energies.csv", io::energy_csv(reps));
        summary["E_gs"] = gs.E_gs;
    }
    ctx.write_json("summary.json", summary);
}

inline void stage_rsb(Context& ctx, const Section& s) {
    std::vector<double> grid;
    if (s.has("betaJ")) {
        const json& g = s.raw("betaJ");
        if (!g.is_array()) throw ConfigError(s.where("betaJ") + ": expected an array");
        for (const auto& v : g) {
            if (!v.is_number() || !(v.get<double>() > 0)) throw ConfigError(s.where("betaJ") + ": expected positive numbers");
            grid.push_back(v.get<double>());
        }
    } else {
        for (int k = 0; k <= 50; ++k) grid.push_back(0.5 + 0.05 * k);
    }
    const bool one = s.get<bool>("one_rsb", true);
    s.finish();
    std::vector<io::RsbRow> rows(grid.size());
    parallel_for(grid.size(), ctx.threads, [&](std::size_t k) {
        const double b = grid[k];
        const RsSolution rs = solve_rs(b);
        const RepliconSpectrum sp = replicon_at(b, rs.q_star);
        io::RsbRow r{b, rs.q_star, sp.lambda_R, sp.lambda_L, rs.q_star, rs.q_star, 1.0, rs.free_energy};
        if (one) {
            const OneRsbSolution o = solve_1rsb(b);
            r.q0 = o.q0;
            r.q1 = o.q1;
            r.m = o.m;
            r.F = o.free_energy;
        }
        rows[k] = r;
    });
    ctx.write("rsb_sweep.csv", io::rsb_csv(rows));
}

inline void stage_aggregate(Context& ctx, const Section& s) {
    const json& list = s.raw("histograms");
    if (!list.is_array() || list.empty()) throw ConfigError(s.where("histograms") + ": expected a non-empty array");
    const int n_boot = s.get<int>("bootstrap", 0);
    s.finish();
    std::vector<OverlapHistogram> hs;
    for (const auto& v : list) {
        if (!v.is_string()) throw ConfigError(s.where("histograms") + ": expected file names");
        const fs::path p = ctx.input(v.get<std::string>());
        fs::path side = p;
        side.replace_extension(".json");
        if (fs::exists(side)) ctx.inputs.emplace_back(side.string(), sha256_hex(io::read_file(side)));
        hs.push_back(io::read_histogram(p));
    }
    OverlapHistogram agg;
    try {
        agg = parisi_aggregate(hs);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("aggregate: ") + e.what());
    }
    io::write_histogram(ctx.out / "parisi.csv", agg, "aggregate");
    ctx.outputs.emplace_back("parisi.csv", sha256_hex(io::read_file(ctx.out / "parisi.csv")));
    ctx.outputs.emplace_back("parisi.json", sha256_hex(io::read_file(ctx.out / "parisi.json")));
    json summary{{"instances", hs.size()}, {"plateau", plateau(agg)}};
    if (n_boot >= 2) {
        const BootstrapResult b = bootstrap(hs, n_boot, ctx.has_seed ? ctx.seed : 0);
        summary["bootstrap"] = {{"n_boot", n_boot}, {"mean_hellinger", b.mean_distance}};
    }
    ctx.write_json("aggregate.json", summary);
}

inline const std::vector<std::string>& modes() {
    static const std::vector<std::string> m = {"couplings", "ptmc", "mftraj", "analyze", "rsb", "aggregate", "ensemble"};
    return m;
}

// Parses the config, runs the stage and writes manifest.json. Returns the manifest.
inline json run_pipeline(const std::string& mode, const RunOptions& opt) {
    if (std::find(modes().begin(), modes().end(), mode) == modes().end()) throw ConfigError("unknown mode '" + mode + "'");
    const auto t_start = std::chrono::steady_clock::now();
    Context ctx;
    std::string text;
    try {
        text = io::read_file(opt.config_path);
    } catch (const io::IoError& e) {
        throw ConfigError(e.what());
    }
    try {
        ctx.config = json::parse(text);
    } catch (const json::parse_error& e) {
        // translate the byte offset into a line number
        std::size_t line = 1;
        for (std::size_t k = 0; k < std::min(e.byte, text.size()); ++k) line += text[k] == '\n';
        throw ConfigError(opt.config_path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
    Section root(ctx.config, "");
    const std::string cmode = root.get<std::string>("mode", mode);
    if (cmode != mode) throw ConfigError("mode: config says '" + cmode + "' but subcommand is '" + mode + "'");
    ctx.base = opt.config_path.has_parent_path() ? opt.config_path.parent_path() : fs::path(".");
    if (root.has("seed")) {
        ctx.seed = root.require<std::uint64_t>("seed");
        ctx.has_seed = true;
    }
    if (opt.seed) {
        ctx.seed = *opt.seed;
        ctx.has_seed = true;
    }
    fs::path out = root.get<std::string>("output", "");
    if (opt.out) out = *opt.out;
    if (out.empty()) throw ConfigError("output: no output directory (set 'output' or pass --out)");
    if (const char* rootdir = std::getenv("CGLASS_OUTPUT_ROOT"); rootdir && out.is_relative()) out = fs::path(rootdir) / out;
    ctx.out = out;
    ctx.threads = opt.threads;
    const Section stage = root.sub(mode);
    root.finish();
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw io::IoError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
    ctx.inputs.emplace_back(opt.config_path.string(), sha256_hex(text));

    try {
        if (mode == "couplings") stage_couplings(ctx, stage);
        else if (mode == "ensemble") stage_ensemble(ctx, stage);
        else if (mode == "ptmc") stage_ptmc(ctx, stage);
        else if (mode == "mftraj") stage_mftraj(ctx, stage);
        else if (mode == "analyze") stage_analyze(ctx, stage);
        else if (mode == "rsb") stage_rsb(ctx, stage);
        else if (mode == "aggregate") stage_aggregate(ctx, stage);
    } catch (const ConfigError&) {
        throw;
    } catch (const io::IoError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(mode + ": " + e.what());
    } catch (const std::exception& e) {
        throw NumericalError(mode + ": " + e.what());
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    json in = json::array(), outs = json::array();
    for (const auto& [p, h] : ctx.inputs) in.push_back({{"path", p}, {"sha256", h}});
    for (const auto& [p, h] : ctx.outputs) outs.push_back({{"path", p}, {"sha256", h}});
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json manifest{{"mode", mode},
                  {"version", kVersion},
                  {"seed", ctx.has_seed ? json(ctx.seed) : json(nullptr)},
                  {"threads", ctx.threads},
                  {"inputs", in},
                  {"outputs", outs},
                  {"wall_time_s", wall},
                  {"timestamp", stamp}};
    io::write_file(ctx.out / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace cglass::pipeline
