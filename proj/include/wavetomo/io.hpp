#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "forward.hpp"
#include "geometry.hpp"
#include "media.hpp"
#include "psi.hpp"

namespace wavetomo::io {

namespace fs = std::filesystem;

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline void write_csv(const fs::path& path, const Table& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
    out << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << fmt(r[i]);
        out << '\n';
    }
}

/// Text CSV with a header and a mix of string and numeric cells.
inline void write_text_csv(const fs::path& path, const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << '\n';
    }
}

inline Table read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw std::runtime_error(path.string() + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != t.header.size()) throw std::runtime_error(path.string() + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::string axis_name(int a) { return "x" + std::to_string(a + 1); }

/// Column layout of a trace CSV: coordinates, then for w in {u, v}
///   w, w_t, w_tt, w_<xi>, w_t_<xi>, w_<xi><xj>.
inline std::vector<std::string> trace_header(int n) {
    std::vector<std::string> h;
    for (int a = 0; a < n; ++a) h.push_back(axis_name(a));
    for (const char* w : {"u", "v"}) {
        const std::string s = w;
        h.push_back(s);
        h.push_back(s + "_t");
        h.push_back(s + "_tt");
        for (int a = 0; a < n; ++a) h.push_back(s + "_" + axis_name(a));
        for (int a = 0; a < n; ++a) h.push_back(s + "_t_" + axis_name(a));
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) h.push_back(s + "_" + axis_name(a) + axis_name(b));
    }
    return h;
}

inline Table trace_table(const TraceSet& ts) {
    Table t;
    const int n = ts.n;
    t.header = trace_header(n);
    const std::size_t P = ts.size();
    const auto N = static_cast<std::size_t>(n);
    t.rows.reserve(P);
    for (std::size_t i = 0; i < P; ++i) {
        std::vector<double> r;
        for (std::size_t a = 0; a < N; ++a) r.push_back(ts.x[i * N + a]);
        for (const WaveTrace* w : {&ts.u, &ts.v}) {
            r.push_back(w->val[i]);
            r.push_back(w->t[i]);
            r.push_back(w->tt[i]);
            for (std::size_t a = 0; a < N; ++a) r.push_back(w->grad[i * N + a]);
            for (std::size_t a = 0; a < N; ++a) r.push_back(w->grad_t[i * N + a]);
            for (std::size_t a = 0; a < N * N; ++a) r.push_back(w->hess[i * N * N + a]);
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline void fill_traces(TraceSet& ts, const Table& t) {
    const int n = ts.n;
    const auto N = static_cast<std::size_t>(n);
    if (t.header != trace_header(n)) throw std::runtime_error("trace CSV header does not match dimension");
    const std::size_t P = t.rows.size();
    if (P != ts.size()) throw std::runtime_error("trace CSV row count does not match dataset.json");
    ts.x.assign(P * N, 0.0);
    for (WaveTrace* w : {&ts.u, &ts.v}) {
        w->val.assign(P, 0.0);
        w->t.assign(P, 0.0);
        w->tt.assign(P, 0.0);
        w->grad.assign(P * N, 0.0);
        w->grad_t.assign(P * N, 0.0);
        w->hess.assign(P * N * N, 0.0);
    }
    for (std::size_t i = 0; i < P; ++i) {
        const auto& r = t.rows[i];
        std::size_t c = 0;
        for (std::size_t a = 0; a < N; ++a) ts.x[i * N + a] = r[c++];
        for (WaveTrace* w : {&ts.u, &ts.v}) {
            w->val[i] = r[c++];
            w->t[i] = r[c++];
            w->tt[i] = r[c++];
            for (std::size_t a = 0; a < N; ++a) w->grad[i * N + a] = r[c++];
            for (std::size_t a = 0; a < N; ++a) w->grad_t[i * N + a] = r[c++];
            for (std::size_t a = 0; a < N * N; ++a) w->hess[i * N * N + a] = r[c++];
        }
    }
}

inline std::string row_file(const Direction& o, std::size_t m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "row_%s%d_%04zu.csv", o.sign > 0 ? "p" : "m", o.axis + 1, m);
    return buf;
}

/// Writes dataset.json plus one CSV per (omega, tau). Returns the files written
/// relative to `dir`.
inline std::vector<std::string> write_dataset(const fs::path& dir, const PlaneWaveDataset& ds) {
    fs::create_directories(dir);
    nlohmann::json j;
    j["grid"] = ds.grid;
    j["omegas"] = nlohmann::json::array();
    for (const auto& o : ds.omegas) j["omegas"].push_back(o.label());
    j["taus"] = ds.taus;
    j["coeff_hash"] = ds.coeff_hash;
    j["background"] = ds.all_background();
    j["rows"] = nlohmann::json::array();
    std::vector<std::string> files;
    for (std::size_t o = 0; o < ds.omegas.size(); ++o)
        for (std::size_t m = 0; m < ds.taus.size(); ++m) {
            const auto& r = ds.row(o, m);
            const std::string f = row_file(ds.omegas[o], m);
            write_csv(dir / f, trace_table(r));
            files.push_back(f);
            j["rows"].push_back({{"omega", r.omega.label()},
                                 {"tau", r.tau},
                                 {"background", r.background},
                                 {"along_count", r.along_count},
                                 {"across_count", r.across_count},
                                 {"node", r.node},
                                 {"file", f}});
        }
    std::ofstream out(dir / "dataset.json", std::ios::binary);
    out << j.dump(2) << '\n';
    files.insert(files.begin(), "dataset.json");
    return files;
}

inline Direction parse_direction(const std::string& s) {
    if (s.size() < 3 || (s[0] != '+' && s[0] != '-') || s[1] != 'e')
        throw std::invalid_argument("bad direction '" + s + "' (expected +e1, -e2, ...)");
    const int axis = std::stoi(s.substr(2)) - 1;
    return Direction{axis, s[0] == '+' ? 1 : -1};
}

inline PlaneWaveDataset read_dataset(const fs::path& dir) {
    std::ifstream in(dir / "dataset.json", std::ios::binary);
    if (!in) throw std::runtime_error("dataset.json not found in " + dir.string());
    const auto j = nlohmann::json::parse(in);
    PlaneWaveDataset ds;
    ds.grid = j.at("grid").get<SpaceTimeGrid>();
    for (const auto& o : j.at("omegas")) ds.omegas.push_back(parse_direction(o.get<std::string>()));
    ds.taus = j.at("taus").get<std::vector<double>>();
    ds.coeff_hash = j.at("coeff_hash").get<std::string>();
    for (const auto& r : j.at("rows")) {
        TraceSet ts;
        ts.omega = parse_direction(r.at("omega").get<std::string>());
        ts.tau = r.at("tau").get<double>();
        ts.n = ds.grid.n;
        ts.background = r.at("background").get<bool>();
        ts.along_count = r.at("along_count").get<int>();
        ts.across_count = r.at("across_count").get<int>();
        ts.node = r.at("node").get<std::vector<int>>();
        fill_traces(ts, read_csv(dir / r.at("file").get<std::string>()));
        ds.rows.push_back(std::move(ts));
    }
    if (ds.rows.size() != ds.omegas.size() * ds.taus.size()) throw std::runtime_error("dataset.json row count mismatch");
    return ds;
}

inline Table psi_table(const PsiTraces& p) {
    Table t;
    const int n = p.n;
    const auto N = static_cast<std::size_t>(n);
    for (int a = 0; a < n; ++a) t.header.push_back(axis_name(a));
    for (const char* c : {"psi", "psi_t", "psi_tt"}) t.header.push_back(c);
    for (int a = 0; a < n; ++a) t.header.push_back("psi_" + axis_name(a));
    for (int a = 0; a < n; ++a) t.header.push_back("psi_t_" + axis_name(a));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) t.header.push_back("psi_" + axis_name(a) + axis_name(b));
    for (std::size_t id = 0; id < p.size(); ++id) {
        std::vector<double> r;
        std::size_t rest = id;
        for (std::size_t a = 0; a < N; ++a) {
            r.push_back(p.x_min + static_cast<double>(rest % static_cast<std::size_t>(p.nx)) * p.h);
            rest /= static_cast<std::size_t>(p.nx);
        }
        r.push_back(p.val[id]);
        r.push_back(p.t[id]);
        r.push_back(p.tt[id]);
        for (std::size_t a = 0; a < N; ++a) r.push_back(p.grad[id * N + a]);
        for (std::size_t a = 0; a < N; ++a) r.push_back(p.grad_t[id * N + a]);
        for (std::size_t a = 0; a < N * N; ++a) r.push_back(p.hess[id * N * N + a]);
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline PsiTraces read_psi(const fs::path& path, const SpaceTimeGrid& g) {
    const Table t = read_csv(path);
    PsiTraces p;
    p.n = g.n;
    p.nx = g.nx;
    p.x_min = g.x_min;
    p.h = g.h;
    if (t.header != psi_table(p).header) throw std::runtime_error(path.string() + ": unexpected psi columns");
    if (t.rows.size() != g.spatial_size()) throw std::runtime_error(path.string() + ": psi row count does not match grid");
    const auto N = static_cast<std::size_t>(g.n);
    for (const auto& r : t.rows) {
        std::size_t c = N;
        p.val.push_back(r[c++]);
        p.t.push_back(r[c++]);
        p.tt.push_back(r[c++]);
        for (std::size_t a = 0; a < N; ++a) p.grad.push_back(r[c++]);
        for (std::size_t a = 0; a < N; ++a) p.grad_t.push_back(r[c++]);
        for (std::size_t a = 0; a < N * N; ++a) p.hess.push_back(r[c++]);
    }
    return p;
}

/// Samples a scalar field on the grid's spatial nodes at the grid times
/// (every `stride`-th time level). Columns x..., t, value.
template <class F>
Table sample_field(const SpaceTimeGrid& g, F&& f, int stride = 1) {
    Table t;
    for (int a = 0; a < g.n; ++a) t.header.push_back(axis_name(a));
    t.header.push_back("t");
    t.header.push_back("value");
    for (int k = 0; k <= g.nt; k += std::max(stride, 1))
        for (std::size_t id = 0; id < g.spatial_size(); ++id) {
            const auto idx = unflatten(g, id);
            Point p{g.x(idx[0]), g.n > 1 ? g.x(idx[1]) : 0.0, g.t(k)};
            std::vector<double> r;
            for (int a = 0; a < g.n; ++a) r.push_back(p[a]);
            r.push_back(p[kTime]);
            r.push_back(f(p));
            t.rows.push_back(std::move(r));
        }
    return t;
}

}  // namespace wavetomo::io
