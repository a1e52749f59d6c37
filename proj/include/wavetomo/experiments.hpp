#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "config.hpp"
#include "errors.hpp"
#include "forward.hpp"
#include "functionals.hpp"
#include "inverse.hpp"
#include "io.hpp"
#include "psi.hpp"

namespace wavetomo {

enum class LogLevel { error = 0, info = 1, debug = 2 };

struct RunContext {
    std::filesystem::path output;
    int threads = 1;
    std::function<std::string(const std::string&)> hash;  // content hash for coefficient specs
    std::function<void(LogLevel, const std::string&)> log;

    void say(LogLevel l, const std::string& m) const {
        if (log) log(l, m);
    }
};

struct RunOutcome {
    std::vector<std::string> files;  // relative to the output directory
    bool background = false;
    int status = 0;                  // 0 ok, 3 numerical failure
    std::string message;
    nlohmann::json summary = nlohmann::json::object();
};

namespace exp_detail {

namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline std::string hash_of(const RunContext& ctx, const nlohmann::json& j) {
    return ctx.hash ? ctx.hash(j.dump()) : std::string();
}

/// Coefficients sampled on |x| <= 1, 0 <= t <= T with about `per_axis` samples.
inline io::Table medium_table(const CoefficientSet& cs, double T, int per_axis = 41) {
    io::Table t;
    const int n = cs.n;
    for (int a = 0; a < n; ++a) t.header.push_back(io::axis_name(a));
    t.header.push_back("t");
    t.header.push_back("a");
    for (int i = 0; i < n; ++i) t.header.push_back("b" + std::to_string(i + 1));
    t.header.push_back("c");
    t.header.push_back("q");
    for (int i = 0; i < n; ++i) t.header.push_back("curl_" + io::axis_name(i) + "t");
    if (n == 2) t.header.push_back("curl_x1x2");
    const int m = std::max(per_axis, 2);
    auto node = [&](int i, double lo, double hi) { return lo + (hi - lo) * i / (m - 1); };
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < (n == 2 ? m : 1); ++j)
            for (int i = 0; i < m; ++i) {
                const Point p{node(i, -1.0, 1.0), n == 2 ? node(j, -1.0, 1.0) : 0.0, node(k, 0.0, T)};
                std::vector<double> r;
                for (int a = 0; a < n; ++a) r.push_back(p[a]);
                r.push_back(p[kTime]);
                r.push_back(cs.a.value(p));
                for (int b = 0; b < n; ++b) r.push_back(cs.b[b].value(p));
                r.push_back(cs.c(p));
                r.push_back(cs.q(p));
                const auto F = curl_eta(cs, p);
                for (int b = 0; b < n; ++b) r.push_back(F[b][kTime]);
                if (n == 2) r.push_back(F[0][1]);
                t.rows.push_back(std::move(r));
            }
    return t;
}

inline nlohmann::json bump_json(const Bump& b, const std::string& field, int n) {
    std::vector<double> cx{b.center[0]};
    if (n == 2) cx.push_back(b.center[1]);
    return {{"field", field},        {"center_x", cx},           {"center_t", b.center[kTime]},
            {"radius_x", b.radius[0]}, {"radius_t", b.radius[kTime]}, {"amplitude", b.amplitude},
            {"profile", to_string(b.profile)}};
}

}  // namespace exp_detail

// ---------------------------------------------------------------------------
// forward

inline RunOutcome run_forward(const ExperimentConfig& cfg, const RunContext& ctx) {
    namespace fs = std::filesystem;
    RunOutcome out;
    const auto g = cfg.make();
    const auto taus = cfg.taus(g);
    ctx.say(LogLevel::info, "forward: " + std::to_string(cfg.directions.size() * taus.size()) + " rows, h = " +
                                io::fmt(g.h));
    auto ds = forward_data(cfg.medium, cfg.directions, taus, g, ctx.threads);
    ds.coeff_hash = exp_detail::hash_of(ctx, cfg.medium_json);
    for (const auto& f : io::write_dataset(ctx.output / "dataset", ds)) out.files.push_back("dataset/" + f);
    const auto psi = solve_psi(cfg.medium, g, cfg.psi());
    io::write_csv(ctx.output / "dataset" / "psi.csv", io::psi_table(psi));
    out.files.push_back("dataset/psi.csv");
    io::write_csv(ctx.output / "medium.csv", exp_detail::medium_table(cfg.medium, g.T));
    out.files.push_back("medium.csv");
    out.background = ds.all_background();
    out.summary = {{"rows", ds.rows.size()}, {"background", out.background}};
    return out;
}

// ---------------------------------------------------------------------------
// stability sweeps

struct StabilityDraw {
    int draw = 0;
    std::vector<std::pair<std::string, Bump>> shape;  // unit-scale perturbation
    std::vector<StabilityReport> reports;             // one per amplitude
    double spread = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
};

/// Random perturbation shapes. Draws are consumed in a fixed order so the
/// sequence depends only on the seed.
inline std::vector<std::pair<std::string, Bump>> draw_shape(std::mt19937_64& rng, const PerturbationSpec& spec, int n) {
    auto uniform = [&](const std::array<double, 2>& r) {
        return std::uniform_real_distribution<double>(r[0], r[1])(rng);
    };
    std::vector<std::pair<std::string, Bump>> out;
    for (const auto& f : spec.fields) {
        Bump b;
        b.profile = spec.profile;
        b.center[0] = uniform(spec.center_x);
        if (n == 2) b.center[1] = uniform(spec.center_x);
        b.center[kTime] = uniform(spec.center_t);
        const double rx = uniform(spec.radius_x);
        b.radius = {rx, n == 2 ? rx : std::numeric_limits<double>::infinity(), uniform(spec.radius_t)};
        const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        b.amplitude = sign * uniform({0.5, 1.0});
        out.emplace_back(f, b);
    }
    return out;
}

inline CoefficientSet perturbed(const CoefficientSet& base, const std::vector<std::pair<std::string, Bump>>& shape,
                                double amplitude) {
    CoefficientSet cs = base;
    for (auto [field, b] : shape) {
        b.amplitude *= amplitude;
        if (field == "a") cs.a.bumps.push_back(b);
        else if (field == "b1") cs.b[0].bumps.push_back(b);
        else if (field == "b2") cs.b[1].bumps.push_back(b);
        else cs.zeroth.bumps.push_back(b);
    }
    return cs;
}

inline RunOutcome run_stability(const ExperimentConfig& cfg, const RunContext& ctx) {
    RunOutcome out;
    const auto g = cfg.make();
    const auto taus = cfg.taus(g);
    const auto& spec = cfg.stability;
    const int n = g.n;
    std::mt19937_64 rng(cfg.seed);

    const auto base_data = forward_data(cfg.medium, cfg.directions, taus, g, ctx.threads);
    PsiTraces base_psi;
    if (cfg.kind == Kind::stability_abc) base_psi = solve_psi(cfg.medium, g, cfg.psi());

    std::vector<StabilityDraw> draws;
    for (int d = 0; d < spec.draws; ++d) {
        StabilityDraw sd;
        sd.draw = d;
        sd.shape = draw_shape(rng, spec.perturbation, n);
        for (double amp : spec.amplitudes) {
            const auto m2 = perturbed(cfg.medium, sd.shape, amp);
            validate_support(m2, g.T);
            const auto data = forward_data(m2, cfg.directions, taus, g, ctx.threads);
            StabilityReport r;
            if (cfg.kind == Kind::stability_q) r = thm_q_functional(cfg.medium, m2, base_data, data);
            else if (cfg.kind == Kind::stability_ab) r = thm_ab_functional(cfg.medium, m2, base_data, data);
            else r = thm_abc_functional(cfg.medium, m2, base_data, data, base_psi, solve_psi(m2, g, cfg.psi()));
            r.amplitude = amp;
            sd.reports.push_back(std::move(r));
        }
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        bool finite = true;
        for (const auto& r : sd.reports) {
            if (!std::isfinite(r.ratio) || r.ratio <= 0.0) finite = false;
            lo = std::min(lo, r.ratio);
            hi = std::max(hi, r.ratio);
        }
        sd.spread = finite ? hi / lo : std::numeric_limits<double>::quiet_NaN();
        sd.ok = finite && sd.spread <= spec.spread_limit;
        ctx.say(LogLevel::debug, "draw " + std::to_string(d) + ": spread " + io::fmt(sd.spread));
        draws.push_back(std::move(sd));
    }

    io::Table t;
    t.header = {"draw", "amplitude", "lhs", "rhs", "ratio"};
    nlohmann::json jd = nlohmann::json::array();
    double worst = 0.0;
    bool all_ok = true;
    for (const auto& sd : draws) {
        nlohmann::json shape = nlohmann::json::array();
        for (const auto& [f, b] : sd.shape) shape.push_back(exp_detail::bump_json(b, f, n));
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& r : sd.reports) {
            t.rows.push_back({static_cast<double>(sd.draw), r.amplitude, r.lhs, r.rhs, r.ratio});
            reps.push_back(r);
        }
        jd.push_back({{"draw", sd.draw},
                      {"shape", shape},
                      {"reports", reps},
                      {"spread", nan_to_null(sd.spread)},
                      {"ok", sd.ok}});
        if (!sd.ok) {
            all_ok = false;
            ctx.say(LogLevel::error, "stability draw " + std::to_string(sd.draw) + " spread " + io::fmt(sd.spread) +
                                         " exceeds " + io::fmt(spec.spread_limit) + "; perturbation: " + shape.dump());
        }
        worst = std::max(worst, std::isfinite(sd.spread) ? sd.spread : std::numeric_limits<double>::infinity());
    }
    io::write_csv(ctx.output / "stability.csv", t);
    const std::string theorem = cfg.kind == Kind::stability_q ? "1.1" : cfg.kind == Kind::stability_ab ? "1.2" : "1.4";
    nlohmann::json j{{"theorem", theorem},
                     {"seed", cfg.seed},
                     {"amplitudes", spec.amplitudes},
                     {"spread_limit", spec.spread_limit},
                     {"max_spread", nan_to_null(worst)},
                     {"all_within_limit", all_ok},
                     {"draws", jd}};
    exp_detail::write_json(ctx.output / "stability.json", j);
    out.files = {"stability.csv", "stability.json"};
    out.summary = {{"theorem", theorem}, {"max_spread", nan_to_null(worst)}, {"all_within_limit", all_ok}};
    return out;
}

// ---------------------------------------------------------------------------
// Carleman sweep

inline RunOutcome run_carleman(const ExperimentConfig& cfg, const RunContext& ctx) {
    RunOutcome out;
    const auto g = cfg.make();
    Field w;
    if (cfg.carleman.test_function.amplitude != 0.0) w.bumps.push_back(cfg.carleman.test_function);
    const auto rep = carleman_check(w, cfg.medium, cfg.carleman.direction, cfg.carleman.tau, cfg.carleman.sigmas, g,
                                    cfg.carleman.label);
    io::Table t;
    t.header = {"sigma", "interior", "face_l", "residual", "face_h", "lhs", "rhs", "ratio"};
    for (const auto& r : rep.rows)
        t.rows.push_back({r.sigma, r.interior, r.face_l, r.residual, r.face_h, r.lhs, r.rhs, r.ratio});
    io::write_csv(ctx.output / "carleman.csv", t);
    exp_detail::write_json(ctx.output / "carleman.json", rep);
    out.files = {"carleman.csv", "carleman.json"};
    out.summary = {{"single_constant", rep.single_constant},
                   {"constant", rep.constant},
                   {"sigma0", nan_to_null(rep.sigma0)}};
    return out;
}

// ---------------------------------------------------------------------------
// inversions

inline RunOutcome run_inversion(const ExperimentConfig& cfg, const RunContext& ctx) {
    namespace fs = std::filesystem;
    RunOutcome out;
    const auto g = cfg.make();
    InversionConfig ic = cfg.inversion.config;
    ic.threads = ctx.threads;

    PlaneWaveDataset observed;
    PsiTraces psi;
    const bool twin = cfg.inversion.data_dir.empty();
    if (twin) {
        observed = forward_data(cfg.medium, cfg.directions, cfg.taus(g), g, ctx.threads);
        observed.coeff_hash = exp_detail::hash_of(ctx, cfg.medium_json);
        if (ic.unknown == Unknown::abc && ic.use_psi) psi = solve_psi(cfg.medium, g, ic.psi_method);
    } else {
        const fs::path dir = cfg.inversion.data_dir;
        observed = io::read_dataset(dir);
        if (!(observed.grid == g)) throw ConfigError("inversion.data", "dataset grid differs from the configured grid");
        if (ic.unknown == Unknown::abc && ic.use_psi) psi = io::read_psi(dir / "psi.csv", g);
    }
    const CoefficientSet* truth = twin ? &cfg.medium : nullptr;
    ctx.say(LogLevel::info, std::string("invert ") + to_string(ic.unknown) + ": " +
                                std::to_string(observed.rows.size()) + " data rows");

    InversionResult res;
    RankReport at_zero;
    CoefficientSet known = cfg.medium;
    if (ic.unknown == Unknown::q) {
        known.zeroth = Field{};
        res = reconstruct_q(known, observed, ic, truth);
    } else if (ic.unknown == Unknown::ab) {
        known.a = Field{};
        known.b = {};
        res = reconstruct_ab(known, observed, ic, truth);
    } else {
        res = reconstruct_abc(observed, ic.use_psi ? &psi : nullptr, ic, truth);
    }
    if (cfg.inversion.rank_at_zero) {
        const auto pb = ic.unknown == Unknown::abc ? make_abc_problem(observed, ic.use_psi ? &psi : nullptr, ic)
                                                   : make_problem(ic.unknown, known, observed, ic);
        at_zero = jacobian_rank(pb, ctx.threads, ic.fd_step);
    }

    io::Table hist;
    hist.header = {"iter", "misfit", "step", "rel_error_if_truth"};
    for (const auto& h : res.history) hist.rows.push_back({static_cast<double>(h.iter), h.misfit, h.step, h.rel_error});
    io::write_csv(ctx.output / "history.csv", hist);
    io::write_csv(ctx.output / "recovered.csv", exp_detail::medium_table(res.recovered, g.T));
    out.files = {"history.csv", "recovered.csv"};
    if (twin) {
        io::write_csv(ctx.output / "truth.csv", exp_detail::medium_table(cfg.medium, g.T));
        out.files.push_back("truth.csv");
    }
    nlohmann::json j = res;
    j["twin"] = twin;
    j["directions"] = nlohmann::json::array();
    for (const auto& o : observed.omegas) j["directions"].push_back(o.label());
    j["basis_size"] = make_basis(g.n, ic.basis).size();
    if (cfg.inversion.rank_at_zero) j["rank_at_zero"] = at_zero;
    exp_detail::write_json(ctx.output / "inversion.json", j);
    out.files.push_back("inversion.json");
    out.summary = {{"converged", res.converged},
                   {"stalled", res.stalled},
                   {"iterations", res.iterations},
                   {"rel_error", nan_to_null(res.rel_error)}};
    if (res.stalled) {
        out.status = 3;
        out.message = res.message;
    }
    return out;
}

// ---------------------------------------------------------------------------
// self-convergence

struct ConvergenceRow {
    std::string quantity;
    std::vector<double> diffs;   // |w_{h_{i-1}} - w_{h_i}| for i = 1..K-1
    std::vector<double> orders;  // from consecutive diffs
    bool exact = false;
};

namespace exp_detail {

/// max |w_c - w_f| over coarse lattice nodes of Q (t <= T).
inline double lattice_difference(const WaveSolution& c, const WaveSolution& f, int ratio) {
    const CharLattice& Lc = c.lattice;
    const CharLattice& Lf = f.lattice;
    double worst = 0.0;
    for (int i = 0; i <= Lc.S; ++i)
        for (int j = 0; i + j <= Lc.S; ++j) {
            const double s = Lc.s_min + j * Lc.k;
            const double jf_real = (s - Lf.s_min) / Lf.k;
            const long jf = std::lround(jf_real);
            if (std::abs(jf_real - static_cast<double>(jf)) > 1e-6 || jf < 0 || jf > Lf.J) continue;
            const int ifine = i * ratio;
            if (ifine > Lf.I) continue;
            const int off = static_cast<int>(std::lround((Lc.y0 - Lf.y0) / Lf.k));
            for (int l = 0; l < Lc.ny; ++l) {
                const int lf = off + l * ratio;
                if (lf < 0) continue;
                if (lf >= Lf.ny) continue;
                worst = std::max(worst, std::abs(c.at(i, j, l) - f.at(ifine, static_cast<int>(jf), lf)));
            }
        }
    return worst;
}

/// max over shared trace nodes of the selected component.
inline double trace_difference_max(const TraceSet& c, const TraceSet& f, const SpaceTimeGrid& gc,
                                   const SpaceTimeGrid& gf, const std::function<double(const TraceSet&, std::size_t)>& get) {
    const int ratio = static_cast<int>(std::lround(gc.h / gf.h));
    const int off = static_cast<int>(std::lround((gc.x_min - gf.x_min) / gf.h));
    std::vector<long> along_f(static_cast<std::size_t>(gf.nx), -1);
    for (int p = 0; p < f.along_count; ++p) along_f[static_cast<std::size_t>(f.node[p])] = p;
    double worst = 0.0;
    for (int q = 0; q < c.across_count; ++q)
        for (int p = 0; p < c.along_count; ++p) {
            const int gi = off + c.node[p] * ratio;
            if (gi < 0 || gi >= gf.nx || along_f[static_cast<std::size_t>(gi)] < 0) continue;
            const int qf = off + q * ratio;  // transverse grid index on the fine grid
            if (c.across_count > 1 && (qf < 0 || qf >= f.across_count)) continue;
            const std::size_t ic = static_cast<std::size_t>(q) * static_cast<std::size_t>(c.along_count) + static_cast<std::size_t>(p);
            const std::size_t jf = static_cast<std::size_t>(c.across_count > 1 ? qf : 0) * static_cast<std::size_t>(f.along_count) +
                                   static_cast<std::size_t>(along_f[static_cast<std::size_t>(gi)]);
            worst = std::max(worst, std::abs(get(c, ic) - get(f, jf)));
        }
    return worst;
}

}  // namespace exp_detail

/// Named trace components compared in the convergence study.
inline std::vector<std::pair<std::string, std::function<double(const TraceSet&, std::size_t)>>> trace_components(int n) {
    std::vector<std::pair<std::string, std::function<double(const TraceSet&, std::size_t)>>> out;
    for (const char* w : {"u", "v"}) {
        const bool is_u = w[0] == 'u';
        auto tr = [is_u](const TraceSet& t) -> const WaveTrace& { return is_u ? t.u : t.v; };
        const std::string s = w;
        const auto N = static_cast<std::size_t>(n);
        out.emplace_back(s + "_trace", [tr](const TraceSet& t, std::size_t i) { return tr(t).val[i]; });
        out.emplace_back(s + "_t_trace", [tr](const TraceSet& t, std::size_t i) { return tr(t).t[i]; });
        out.emplace_back(s + "_tt_trace", [tr](const TraceSet& t, std::size_t i) { return tr(t).tt[i]; });
        for (std::size_t a = 0; a < N; ++a) {
            out.emplace_back(s + "_" + io::axis_name(static_cast<int>(a)) + "_trace",
                             [tr, a, N](const TraceSet& t, std::size_t i) { return tr(t).grad[i * N + a]; });
            out.emplace_back(s + "_t_" + io::axis_name(static_cast<int>(a)) + "_trace",
                             [tr, a, N](const TraceSet& t, std::size_t i) { return tr(t).grad_t[i * N + a]; });
        }
    }
    return out;
}

inline std::vector<ConvergenceRow> convergence_table(const ExperimentConfig& cfg, int threads,
                                                     const RunContext* ctx = nullptr) {
    const auto& hs = cfg.convergence.hs;
    const auto& taus = cfg.convergence.taus;
    const std::size_t K = hs.size();
    std::vector<SpaceTimeGrid> grids;
    for (double h : hs) grids.push_back(make_grid(cfg.grid.n, cfg.grid.T, h, cfg.grid.margin));

    // solutions[k][row], rows ordered (direction, tau)
    const std::size_t R = cfg.directions.size() * taus.size();
    std::vector<std::vector<std::array<WaveSolution, 2>>> sols(K, std::vector<std::array<WaveSolution, 2>>(R));
    std::vector<std::vector<TraceSet>> traces(K, std::vector<TraceSet>(R));
    std::vector<PlaneWaveDataset> data(K), zero(K);
    CoefficientSet none;
    none.n = cfg.grid.n;
    for (std::size_t k = 0; k < K; ++k) {
        if (ctx) ctx->say(LogLevel::info, "convergence: h = " + io::fmt(hs[k]));
        parallel_for(R, threads, [&](std::size_t id) {
            const Direction o = cfg.directions[id / taus.size()];
            const double tau = taus[id % taus.size()];
            sols[k][id] = solve_uv(cfg.medium, grids[k], o, tau);
            traces[k][id] = extract_traces(sols[k][id][0], sols[k][id][1], cfg.medium, grids[k]);
        });
        data[k].grid = grids[k];
        data[k].omegas = cfg.directions;
        data[k].taus = taus;
        data[k].rows = traces[k];
        zero[k] = forward_data(none, cfg.directions, taus, grids[k], threads);
    }

    std::vector<ConvergenceRow> rows;
    auto add = [&](const std::string& name, const std::function<double(std::size_t)>& diff) {
        ConvergenceRow r;
        r.quantity = name;
        for (std::size_t k = 1; k < K; ++k) r.diffs.push_back(diff(k));
        r.exact = std::all_of(r.diffs.begin(), r.diffs.end(), [](double d) { return d == 0.0; });
        for (std::size_t k = 1; k + 1 < K; ++k)
            r.orders.push_back(std::log(r.diffs[k - 1] / r.diffs[k]) / std::log(hs[k - 1] / hs[k]));
        rows.push_back(std::move(r));
    };
    for (int w = 0; w < 2; ++w)
        add(w == 0 ? "u" : "v", [&](std::size_t k) {
            double worst = 0.0;
            const int ratio = static_cast<int>(std::lround(hs[k - 1] / hs[k]));
            for (std::size_t id = 0; id < R; ++id)
                worst = std::max(worst, exp_detail::lattice_difference(sols[k - 1][id][w], sols[k][id][w], ratio));
            return worst;
        });
    for (const auto& [name, get] : trace_components(cfg.grid.n))
        add(name, [&, get = get](std::size_t k) {
            double worst = 0.0;
            for (std::size_t id = 0; id < R; ++id)
                worst = std::max(worst, exp_detail::trace_difference_max(traces[k - 1][id], traces[k][id], grids[k - 1],
                                                                         grids[k], get));
            return worst;
        });
    // data functionals of the medium against the background, at each resolution
    std::vector<std::pair<std::string, std::vector<TraceTerm>>> functionals{
        {"functional_v_H1_vt_H0", {{TraceField::v, 1}, {TraceField::v_t, 0}}},
        {"functional_u_H1_ut_H0", {{TraceField::u, 1}, {TraceField::u_t, 0}}},
        {"functional_u_H2_ut_H1_utt_H0",
         {{TraceField::u, 2}, {TraceField::u_t, 1}, {TraceField::u_tt, 0}, {TraceField::v, 1}, {TraceField::v_t, 0}}}};
    for (const auto& [name, spec] : functionals) {
        std::vector<double> val(K);
        for (std::size_t k = 0; k < K; ++k) val[k] = tau_integral(data[k], zero[k], spec);
        add(name, [&](std::size_t k) { return std::abs(val[k - 1] - val[k]); });
    }
    return rows;
}

inline RunOutcome run_convergence(const ExperimentConfig& cfg, const RunContext& ctx) {
    RunOutcome out;
    const auto rows = convergence_table(cfg, ctx.threads, &ctx);
    const std::size_t K = cfg.convergence.hs.size();
    std::vector<std::string> header{"quantity"};
    for (std::size_t k = 1; k < K; ++k) header.push_back("diff_" + std::to_string(k));
    for (std::size_t k = 1; k + 1 < K; ++k) header.push_back("order_" + std::to_string(k));
    std::vector<std::vector<std::string>> cells;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        std::vector<std::string> c{r.quantity};
        for (double d : r.diffs) c.push_back(io::fmt(d));
        for (double o : r.orders) c.push_back(r.exact ? "exact" : io::fmt(o));
        cells.push_back(std::move(c));
        nlohmann::json orders = nlohmann::json::array();
        for (double o : r.orders) orders.push_back(r.exact ? nlohmann::json("exact") : nan_to_null(o));
        j.push_back({{"quantity", r.quantity}, {"diffs", r.diffs}, {"orders", orders}});
    }
    io::write_text_csv(ctx.output / "convergence.csv", header, cells);
    exp_detail::write_json(ctx.output / "convergence.json",
                           {{"h", cfg.convergence.hs}, {"taus", cfg.convergence.taus}, {"rows", j}});
    out.files = {"convergence.csv", "convergence.json"};
    out.background = cfg.medium.is_zero();
    return out;
}

inline RunOutcome run_experiment(const ExperimentConfig& cfg, const RunContext& ctx) {
    std::filesystem::create_directories(ctx.output);
    switch (cfg.kind) {
        case Kind::forward: return run_forward(cfg, ctx);
        case Kind::stability_q:
        case Kind::stability_ab:
        case Kind::stability_abc: return run_stability(cfg, ctx);
        case Kind::carleman: return run_carleman(cfg, ctx);
        case Kind::invert_q:
        case Kind::invert_ab:
        case Kind::invert_abc: return run_inversion(cfg, ctx);
        case Kind::convergence: return run_convergence(cfg, ctx);
    }
    throw std::logic_error("unhandled experiment kind");
}

}  // namespace wavetomo
