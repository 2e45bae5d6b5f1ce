#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cglass/couplings.hpp"
#include "cglass/energy.hpp"
#include "cglass/ptmc.hpp"
#include "cglass/replica.hpp"
#include "cglass/rsb.hpp"

namespace cglass::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// I/O failures are reported separately from bad input so the CLI can map them to exit codes.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& data) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << data;
    if (!out) throw IoError("write failed for " + p.string());
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep)) {
        while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
        out.push_back(cur);
    }
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument(where + ": not a number '" + s + "'");
    }
    if (pos != s.size() && s.find_first_not_of(' ', pos) != std::string::npos)
        throw std::invalid_argument(where + ": trailing characters in '" + s + "'");
    return v;
}

// ---- positions ----

// CSV with header x_um,y_um,atoms.
inline VertexConfig read_positions(const fs::path& p, double sigma_A = 4.0, double w0 = 35.0) {
    std::istringstream in(read_file(p));
    std::string line;
    VertexConfig cfg;
    cfg.sigma_A = sigma_A;
    cfg.w0 = w0;
    int row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line);
        if (!header) {
            header = true;
            if (f.size() >= 2 && f[0] == "x_um") {
                if (f.size() != 3 || f[1] != "y_um" || f[2] != "atoms")
                    throw std::invalid_argument(p.string() + ": header must be x_um,y_um,atoms");
                continue;
            }
        }
        if (f.size() != 3)
            throw std::invalid_argument(p.string() + ":" + std::to_string(row) + ": expected 3 columns");
        const std::string where = p.string() + ":" + std::to_string(row);
        cfg.positions.emplace_back(parse_double(f[0], where), parse_double(f[1], where));
        cfg.atom_numbers.push_back(parse_double(f[2], where));
    }
    return cfg;
}

inline std::string positions_csv(const VertexConfig& cfg) {
    std::string s = "x_um,y_um,atoms\n";
    for (std::size_t i = 0; i < cfg.positions.size(); ++i)
        s += fmt17(cfg.positions[i].x()) + "," + fmt17(cfg.positions[i].y()) + "," +
             fmt17(i < cfg.atom_numbers.size() ? cfg.atom_numbers[i] : 1.0) + "\n";
    return s;
}

// ---- couplings ----

inline json matrix_json(const Mat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

inline Mat matrix_from_json(const json& a, Eigen::Index n, const std::string& name) {
    if (!a.is_array() || Eigen::Index(a.size()) != n) throw std::invalid_argument(name + ": expected " + std::to_string(n) + " rows");
    Mat m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = a[std::size_t(i)];
        if (!row.is_array() || Eigen::Index(row.size()) != n)
            throw std::invalid_argument(name + ": row " + std::to_string(i) + " has wrong length");
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = row[std::size_t(j)].get<double>();
    }
    return m;
}

inline json couplings_json(const CouplingSet& c) {
    return json{{"n", c.size()},
                {"J_local", matrix_json(c.J_local)},
                {"J_non", matrix_json(c.J_non)},
                {"K", matrix_json(c.K)},
                {"scale", c.scale},
                {"provenance", c.provenance}};
}

inline CouplingSet couplings_from_json(const json& j) {
    for (const char* k : {"n", "J_local", "J_non", "K"})
        if (!j.contains(k)) throw std::invalid_argument(std::string("couplings: missing field '") + k + "'");
    const auto n = j.at("n").get<Eigen::Index>();
    if (n < 1) throw std::invalid_argument("couplings: n must be >= 1");
    CouplingSet c;
    c.J_local = matrix_from_json(j.at("J_local"), n, "J_local");
    c.J_non = matrix_from_json(j.at("J_non"), n, "J_non");
    c.K = matrix_from_json(j.at("K"), n, "K");
    c.scale = j.value("scale", 1.0);
    c.provenance = j.value("provenance", std::string{});
    c.validate();
    return c;
}

inline CouplingSet read_couplings(const fs::path& p) {
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(p.string() + ": " + e.what());
    }
    return couplings_from_json(j);
}

// ---- replicas ----

struct ReplicaRow {
    long long run_id = 0;
    long long temperature_index = 0;
    long long step = 0;
    SpinConfiguration config;
};

inline std::string replica_header(std::size_t n) {
    std::string s = "run_id,temperature_index,step";
    for (std::size_t i = 1; i <= n; ++i) s += ",theta_" + std::to_string(i);
    return s + "\n";
}

inline std::string replica_line(const ReplicaRow& r) {
    std::string s = std::to_string(r.run_id) + "," + std::to_string(r.temperature_index) + "," + std::to_string(r.step);
    for (double t : r.config.thetas) s += "," + fmt17(t);
    return s + "\n";
}

inline std::string replicas_csv(const std::vector<ReplicaRow>& rows) {
    if (rows.empty()) return replica_header(0);
    std::string s = replica_header(rows.front().config.size());
    for (const auto& r : rows) s += replica_line(r);
    return s;
}

inline std::string ptmc_csv(const PtmcRun& run, long long run_id = 0) {
    std::string s = replica_header(run.chains.empty() || run.chains[0].empty() ? 0 : run.chains[0][0].size());
    for (std::size_t k = 0; k < run.chains.size(); ++k)
        for (std::size_t r = 0; r < run.chains[k].size(); ++r)
            s += replica_line({run_id, (long long)k, run.record_steps[k][r], run.chains[k][r]});
    return s;
}

inline std::vector<ReplicaRow> read_replicas(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::string line;
    std::vector<ReplicaRow> rows;
    int row = 0;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto f = split(line);
        if (row == 1) {
            if (f.size() < 3 || f[0] != "run_id") throw std::invalid_argument(p.string() + ": bad replica header");
            n = f.size() - 3;
            continue;
        }
        const std::string where = p.string() + ":" + std::to_string(row);
        if (f.size() != n + 3) throw std::invalid_argument(where + ": expected " + std::to_string(n + 3) + " columns");
        ReplicaRow r;
        r.run_id = std::stoll(f[0]);
        r.temperature_index = std::stoll(f[1]);
        r.step = std::stoll(f[2]);
        r.config.thetas.resize(n);
        for (std::size_t i = 0; i < n; ++i) r.config.thetas[i] = wrap_angle(parse_double(f[3 + i], where));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json acceptance_json(const PtmcRun& run) {
    json a = json::array();
    for (std::size_t k = 0; k < run.swap_attempts.size(); ++k)
        a.push_back({{"pair", {k, k + 1}},
                     {"T", {run.temperatures[k], run.temperatures[k + 1]}},
                     {"attempts", run.swap_attempts[k]},
                     {"accepts", run.swap_accepts[k]},
                     {"rate", run.acceptance(k)}});
    return json{{"temperatures", run.temperatures}, {"swaps", a}};
}

// ---- energies ----

inline std::string energy_csv(const std::vector<EnergyReport>& rows) {
    std::string s = "replica_id,E,E_over_abs_Egs\n";
    for (std::size_t k = 0; k < rows.size(); ++k)
        s += std::to_string(k) + "," + fmt17(rows[k].E) + "," + fmt17(rows[k].normalized) + "\n";
    return s;
}

// ---- histograms ----

inline std::string histogram_csv(const Histogram2D& h) {
    std::string s;
    for (int i = 0; i < h.bins; ++i) {
        for (int j = 0; j < h.bins; ++j) {
            if (j) s += ",";
            s += fmt17(h.at(i, j));
        }
        s += "\n";
    }
    return s;
}

inline json histogram_sidecar(const Histogram2D& h, const std::string& provenance, const std::string& csv_name) {
    std::vector<double> edges(h.bins + 1);
    for (int k = 0; k <= h.bins; ++k) edges[k] = h.edge(k);
    return json{{"data", csv_name},
                {"rows", "Q"},
                {"cols", "R"},
                {"bins", h.bins},
                {"edges", edges},
                {"normalized", h.normalized},
                {"symmetrized", h.symmetrized},
                {"total", h.total()},
                {"provenance", provenance}};
}

inline void write_histogram(const fs::path& csv, const Histogram2D& h, const std::string& provenance) {
    write_file(csv, histogram_csv(h));
    fs::path side = csv;
    side.replace_extension(".json");
    write_file(side, histogram_sidecar(h, provenance, csv.filename().string()).dump(2) + "\n");
}

inline OverlapHistogram read_histogram(const fs::path& csv) {
    fs::path side = csv;
    side.replace_extension(".json");
    json meta;
    try {
        meta = json::parse(read_file(side));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(side.string() + ": " + e.what());
    }
    OverlapHistogram h;
    const int bins = meta.value("bins", 80);
    if (bins != h.bins) throw std::invalid_argument(side.string() + ": binning mismatch");
    h.normalized = meta.value("normalized", false);
    h.symmetrized = meta.value("symmetrized", false);
    std::istringstream in(read_file(csv));
    std::string line;
    int i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split(line);
        if (i >= bins || int(f.size()) != bins) throw std::invalid_argument(csv.string() + ": expected a square " + std::to_string(bins) + " matrix");
        for (int j = 0; j < bins; ++j) h.at(i, j) = parse_double(f[j], csv.string());
        ++i;
    }
    if (i != bins) throw std::invalid_argument(csv.string() + ": expected " + std::to_string(bins) + " rows");
    return h;
}

inline std::string marginal_csv(const std::vector<double>& m, const Histogram2D& h, const char* label) {
    std::string s = std::string(label) + ",p\n";
    for (int k = 0; k < h.bins; ++k) s += fmt17(h.center(k)) + "," + fmt17(m[k]) + "\n";
    return s;
}

// ---- dendrogram ----

inline json dendrogram_json(const Dendrogram& d, int node) {
    if (node < d.leaves) return json{{"leaf", node}};
    const auto& nd = d.nodes[std::size_t(node - d.leaves)];
    return json{{"left", dendrogram_json(d, nd.left)},
                {"right", dendrogram_json(d, nd.right)},
                {"height", nd.height},
                {"intra", nd.intra},
                {"size", nd.size}};
}

inline json dendrogram_json(const Dendrogram& d) {
    return json{{"leaves", d.leaves}, {"leaf_order", d.leaf_order}, {"tree", dendrogram_json(d, d.root())}};
}

// ---- rsb sweep ----

struct RsbRow {
    double betaJ, q_star, lambda_R, lambda_L, q0, q1, m, F;
};

inline std::string rsb_csv(const std::vector<RsbRow>& rows) {
    std::string s = "betaJ,q_star,lambda_R,lambda_L,q0,q1,m,F\n";
    for (const auto& r : rows)
        s += fmt17(r.betaJ) + "," + fmt17(r.q_star) + "," + fmt17(r.lambda_R) + "," + fmt17(r.lambda_L) + "," +
             fmt17(r.q0) + "," + fmt17(r.q1) + "," + fmt17(r.m) + "," + fmt17(r.F) + "\n";
    return s;
}

}  // namespace cglass::io
