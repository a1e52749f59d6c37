#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "forward.hpp"
#include "geometry.hpp"
#include "inverse.hpp"
#include "io.hpp"
#include "media.hpp"

namespace wavetomo {

/// Invalid or incomplete experiment configuration. `field` is the dotted path
/// of the offending key.
struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string f, const std::string& msg) : std::runtime_error(f + ": " + msg), field(std::move(f)) {}
};

enum class Kind {
    forward,
    stability_q,
    stability_ab,
    stability_abc,
    carleman,
    invert_q,
    invert_ab,
    invert_abc,
    convergence
};

inline const std::vector<std::pair<Kind, std::string>>& kind_names() {
    static const std::vector<std::pair<Kind, std::string>> names{
        {Kind::forward, "forward"},           {Kind::stability_q, "stability-q"},
        {Kind::stability_ab, "stability-ab"}, {Kind::stability_abc, "stability-abc"},
        {Kind::carleman, "carleman"},         {Kind::invert_q, "invert-q"},
        {Kind::invert_ab, "invert-ab"},       {Kind::invert_abc, "invert-abc"},
        {Kind::convergence, "convergence"}};
    return names;
}

inline std::string to_string(Kind k) {
    for (const auto& [kind, name] : kind_names())
        if (kind == k) return name;
    return "?";
}

inline std::optional<Kind> kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kind_names())
        if (name == s) return kind;
    return std::nullopt;
}

struct GridSpec {
    int n = 1;
    double T = 1.0;
    double h = 0.05;
    double margin = 3.0;
};

/// Ranges from which random perturbation shapes are drawn.
struct PerturbationSpec {
    std::vector<std::string> fields;
    std::array<double, 2> center_x{-0.3, 0.3};
    std::array<double, 2> center_t{0.4, 0.6};
    std::array<double, 2> radius_x{0.3, 0.5};
    std::array<double, 2> radius_t{0.2, 0.3};
    Profile profile = Profile::smooth;
};

struct StabilitySpec {
    int draws = 10;
    std::vector<double> amplitudes{1e-3, 1e-2, 1e-1};
    double spread_limit = 10.0;
    PerturbationSpec perturbation;
};

struct CarlemanSpec {
    double tau = -0.5;
    Direction direction{0, 1};
    std::vector<double> sigmas{2, 4, 8, 16, 32, 64};
    Bump test_function;
    std::string label = "w";
};

struct InversionSpec {
    InversionConfig config;
    std::string data_dir;  // empty: synthesize data from the configured medium
    bool rank_at_zero = false;
};

struct ConvergenceSpec {
    std::vector<double> hs{0.04, 0.02, 0.01};
    std::vector<double> taus{-0.5, 0.0, 0.5};
};

struct ExperimentConfig {
    Kind kind = Kind::forward;
    std::uint64_t seed = 0;
    GridSpec grid;
    CoefficientSet medium;
    nlohmann::json medium_json;
    std::vector<Direction> directions;
    double dtau = std::numeric_limits<double>::quiet_NaN();  // NaN: default
    std::vector<double> tau_values;                         // overrides dtau
    CarlemanSpec carleman;
    StabilitySpec stability;
    InversionSpec inversion;
    ConvergenceSpec convergence;
    int psi_method = 0;  // 0 automatic, 1 quadrature, 2 leapfrog
    nlohmann::json raw;

    SpaceTimeGrid make() const { return make_grid(grid.n, grid.T, grid.h, grid.margin); }

    std::vector<double> taus(const SpaceTimeGrid& g) const {
        if (!tau_values.empty()) return tau_values;
        return make_tau_grid(g, std::isfinite(dtau) ? dtau : default_dtau(g));
    }

    PsiMethod psi() const {
        return psi_method == 1 ? PsiMethod::quadrature : psi_method == 2 ? PsiMethod::leapfrog : PsiMethod::automatic;
    }
};

namespace config_detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline const json& require(const json& j, const std::string& path, const std::string& key) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(join(path, key), "missing required field");
    return *it;
}

inline double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
}

inline int integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<int>();
}

inline bool boolean(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
    return v.get<bool>();
}

inline std::string text(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

inline std::vector<double> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline std::array<double, 2> range(const json& v, const std::string& path) {
    const auto r = numbers(v, path);
    if (r.size() != 2 || !(r[0] <= r[1])) throw ConfigError(path, "expected [lo, hi] with lo <= hi");
    return {r[0], r[1]};
}

template <class T, class Get>
T optional(const json& j, const std::string& path, const std::string& key, T fallback, Get get) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return get(*it, join(path, key));
}

inline Profile profile(const json& v, const std::string& path) {
    const auto s = text(v, path);
    if (s != "smooth" && s != "poly") throw ConfigError(path, "expected \"smooth\" or \"poly\"");
    return profile_from_string(s);
}

inline Direction direction(const json& v, const std::string& path, int n) {
    Direction d;
    try {
        d = io::parse_direction(text(v, path));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
    if (!d.admissible(n)) throw ConfigError(path, "direction not available in dimension " + std::to_string(n));
    return d;
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(join(path, it.key()), "unknown field");
    }
}

/// Bump with keys center_x[n], center_t, radius_x, radius_t, amplitude, profile.
inline Bump bump(const json& j, const std::string& path, int n) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    Bump b;
    const auto cx = numbers(require(j, path, "center_x"), join(path, "center_x"));
    if (static_cast<int>(cx.size()) != n)
        throw ConfigError(join(path, "center_x"), "needs " + std::to_string(n) + " entries");
    b.center = {cx[0], n == 2 ? cx[1] : 0.0, number(require(j, path, "center_t"), join(path, "center_t"))};
    const double rx = number(require(j, path, "radius_x"), join(path, "radius_x"));
    const double rt = number(require(j, path, "radius_t"), join(path, "radius_t"));
    if (!(rx > 0.0)) throw ConfigError(join(path, "radius_x"), "must be positive");
    if (!(rt > 0.0)) throw ConfigError(join(path, "radius_t"), "must be positive");
    b.radius = {rx, n == 2 ? rx : std::numeric_limits<double>::infinity(), rt};
    b.amplitude = number(require(j, path, "amplitude"), join(path, "amplitude"));
    b.profile = optional(j, path, "profile", Profile::smooth, profile);
    return b;
}

inline GridSpec grid(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    check_keys(j, path, {"n", "T", "h", "margin"});
    GridSpec g;
    g.n = integer(require(j, path, "n"), join(path, "n"));
    if (g.n != 1 && g.n != 2) throw ConfigError(join(path, "n"), "must be 1 or 2");
    g.T = number(require(j, path, "T"), join(path, "T"));
    if (!(g.T > 0.0)) throw ConfigError(join(path, "T"), "must be positive");
    g.h = number(require(j, path, "h"), join(path, "h"));
    if (!(g.h > 0.0)) throw ConfigError(join(path, "h"), "must be positive");
    g.margin = optional(j, path, "margin", g.T + 2.0, number);
    if (g.margin < g.T + 2.0 - 1e-12) throw ConfigError(join(path, "margin"), "must be at least T + 2");
    return g;
}

}  // namespace config_detail

/// Medium from {zeroth: "c"|"q", bumps: [{field, center_x, ...}]}.
inline CoefficientSet parse_medium(const nlohmann::json& j, const std::string& path, int n, double T) {
    using namespace config_detail;
    CoefficientSet cs;
    cs.n = n;
    if (j.is_null()) return cs;
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    check_keys(j, path, {"zeroth", "bumps"});
    const std::string z = optional(j, path, "zeroth", std::string("c"), text);
    if (z != "c" && z != "q") throw ConfigError(join(path, "zeroth"), "expected \"c\" or \"q\"");
    cs.zeroth_kind = z == "c" ? Zeroth::c : Zeroth::q;
    const auto it = j.find("bumps");
    if (it != j.end()) {
        if (!it->is_array()) throw ConfigError(join(path, "bumps"), "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string bp = join(path, "bumps") + "[" + std::to_string(i) + "]";
            const auto& e = (*it)[i];
            if (!e.is_object()) throw ConfigError(bp, "expected an object");
            check_keys(e, bp, {"field", "center_x", "center_t", "radius_x", "radius_t", "amplitude", "profile"});
            const std::string f = text(require(e, bp, "field"), join(bp, "field"));
            const Bump b = bump(e, bp, n);
            if (f == "a")
                cs.a.bumps.push_back(b);
            else if (f == "b1")
                cs.b[0].bumps.push_back(b);
            else if (f == "b2" && n == 2)
                cs.b[1].bumps.push_back(b);
            else if (f == z)
                cs.zeroth.bumps.push_back(b);
            else
                throw ConfigError(join(bp, "field"), "unknown field '" + f + "' for this medium");
        }
    }
    try {
        validate_support(cs, T);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
    return cs;
}

inline std::vector<Direction> default_directions(Kind k, int n) {
    switch (k) {
        case Kind::stability_q:
        case Kind::invert_q: return {Direction{n - 1, 1}};
        case Kind::stability_abc:
        case Kind::invert_abc: return curl_directions(n);
        default: return ab_directions(n);
    }
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    check_keys(j, "", {"kind", "seed", "grid", "medium", "directions", "tau", "carleman", "stability", "inversion",
                       "convergence", "psi_method", "description"});
    ExperimentConfig c;
    c.raw = j;
    const std::string kind = text(require(j, "", "kind"), "kind");
    const auto k = kind_from_string(kind);
    if (!k) throw ConfigError("kind", "unknown experiment kind '" + kind + "'");
    c.kind = *k;
    if (j.contains("seed")) {
        const auto& s = j["seed"];
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
            throw ConfigError("seed", "expected a nonnegative integer");
        c.seed = s.get<std::uint64_t>();
    }
    c.grid = grid(require(j, "", "grid"), "grid");
    const int n = c.grid.n;
    c.medium_json = j.contains("medium") ? j["medium"] : nlohmann::json();
    c.medium = parse_medium(c.medium_json, "medium", n, c.grid.T);

    if (j.contains("directions")) {
        const auto& d = j["directions"];
        if (!d.is_array() || d.empty()) throw ConfigError("directions", "expected a nonempty array");
        for (std::size_t i = 0; i < d.size(); ++i)
            c.directions.push_back(direction(d[i], "directions[" + std::to_string(i) + "]", n));
    } else {
        c.directions = default_directions(c.kind, n);
    }

    if (j.contains("tau")) {
        const auto& t = j["tau"];
        if (!t.is_object()) throw ConfigError("tau", "expected an object");
        check_keys(t, "tau", {"dtau", "values"});
        if (t.contains("values")) {
            c.tau_values = numbers(t["values"], "tau.values");
            if (c.tau_values.empty()) throw ConfigError("tau.values", "must not be empty");
        }
        if (t.contains("dtau")) {
            c.dtau = number(t["dtau"], "tau.dtau");
            if (!(c.dtau > 0.0)) throw ConfigError("tau.dtau", "must be positive");
        }
    }

    if (j.contains("psi_method")) {
        const auto m = text(j["psi_method"], "psi_method");
        if (m == "automatic") c.psi_method = 0;
        else if (m == "quadrature") c.psi_method = 1;
        else if (m == "leapfrog") c.psi_method = 2;
        else throw ConfigError("psi_method", "expected automatic, quadrature or leapfrog");
    }

    if (c.kind == Kind::carleman) {
        const auto& cj = require(j, "", "carleman");
        check_keys(cj, "carleman", {"tau", "direction", "sigma", "test_function", "label"});
        c.carleman.tau = number(require(cj, "carleman", "tau"), "carleman.tau");
        c.carleman.direction = optional(cj, "carleman", "direction", Direction{n - 1, 1},
                                        [&](const json& v, const std::string& p) { return direction(v, p, n); });
        c.carleman.sigmas = optional(cj, "carleman", "sigma", c.carleman.sigmas, numbers);
        if (c.carleman.sigmas.empty()) throw ConfigError("carleman.sigma", "must not be empty");
        for (std::size_t i = 0; i < c.carleman.sigmas.size(); ++i)
            if (!(c.carleman.sigmas[i] > 0.0) || (i && c.carleman.sigmas[i] <= c.carleman.sigmas[i - 1]))
                throw ConfigError("carleman.sigma", "must be positive and increasing");
        c.carleman.test_function = bump(require(cj, "carleman", "test_function"), "carleman.test_function", n);
        c.carleman.label = optional(cj, "carleman", "label", std::string("w"), text);
    }

    if (c.kind == Kind::stability_q || c.kind == Kind::stability_ab || c.kind == Kind::stability_abc) {
        const auto& sj = require(j, "", "stability");
        check_keys(sj, "stability", {"draws", "amplitudes", "spread_limit", "perturbation"});
        auto& s = c.stability;
        s.draws = optional(sj, "stability", "draws", s.draws, integer);
        if (s.draws < 1) throw ConfigError("stability.draws", "must be at least 1");
        s.amplitudes = optional(sj, "stability", "amplitudes", s.amplitudes, numbers);
        if (s.amplitudes.empty()) throw ConfigError("stability.amplitudes", "must not be empty");
        for (double a : s.amplitudes)
            if (!(a > 0.0)) throw ConfigError("stability.amplitudes", "must be positive");
        s.spread_limit = optional(sj, "stability", "spread_limit", s.spread_limit, number);
        auto& p = s.perturbation;
        p.fields = c.kind == Kind::stability_q ? std::vector<std::string>{"q"}
                   : c.kind == Kind::stability_ab
                       ? std::vector<std::string>{"a", "b1"}
                       : std::vector<std::string>{"a", "b1", "c"};
        if (c.kind != Kind::stability_q && n == 2) p.fields.insert(p.fields.begin() + 2, "b2");
        if (sj.contains("perturbation")) {
            const auto& pj = sj["perturbation"];
            const std::string pp = "stability.perturbation";
            if (!pj.is_object()) throw ConfigError(pp, "expected an object");
            check_keys(pj, pp, {"center_x", "center_t", "radius_x", "radius_t", "profile"});
            p.center_x = optional(pj, pp, "center_x", p.center_x, range);
            p.center_t = optional(pj, pp, "center_t", p.center_t, range);
            p.radius_x = optional(pj, pp, "radius_x", p.radius_x, range);
            p.radius_t = optional(pj, pp, "radius_t", p.radius_t, range);
            p.profile = optional(pj, pp, "profile", p.profile, profile);
            if (!(p.radius_x[0] > 0.0) || !(p.radius_t[0] > 0.0))
                throw ConfigError(pp, "radii must be positive");
        }
        const double reach = std::sqrt(static_cast<double>(n)) * std::max(std::abs(p.center_x[0]), std::abs(p.center_x[1])) +
                             std::sqrt(static_cast<double>(n)) * p.radius_x[1];
        if (reach > 1.0 + 1e-12)
            throw ConfigError("stability.perturbation", "largest shape leaves the closed unit ball");
        if (p.center_t[0] - p.radius_t[1] < 0.0 || p.center_t[1] + p.radius_t[1] > c.grid.T)
            throw ConfigError("stability.perturbation", "largest shape leaves 0 < t < T");
        if (c.kind == Kind::stability_q && c.medium.zeroth_kind != Zeroth::q && !c.medium.zeroth.empty())
            throw ConfigError("medium.zeroth", "stability-q needs the base medium given with zeroth = q");
        if (c.kind == Kind::stability_ab && c.medium.zeroth_kind != Zeroth::q && !c.medium.zeroth.empty())
            throw ConfigError("medium.zeroth", "stability-ab needs the base medium given with zeroth = q");
        if (c.kind == Kind::stability_abc && c.medium.zeroth_kind != Zeroth::c)
            throw ConfigError("medium.zeroth", "stability-abc needs the base medium given with zeroth = c");
    }

    if (c.kind == Kind::invert_q || c.kind == Kind::invert_ab || c.kind == Kind::invert_abc) {
        const auto& ij = require(j, "", "inversion");
        check_keys(ij, "inversion",
                   {"basis", "lambda_reg", "max_iterations", "tolerance", "fd_step", "use_psi", "slice", "psi_method", "data",
                    "rank_at_zero"});
        auto& ic = c.inversion.config;
        ic.unknown = c.kind == Kind::invert_q ? Unknown::q : c.kind == Kind::invert_ab ? Unknown::ab : Unknown::abc;
        if (ij.contains("basis")) {
            const auto& bj = ij["basis"];
            const std::string bp = "inversion.basis";
            if (!bj.is_object()) throw ConfigError(bp, "expected an object");
            check_keys(bj, bp, {"centers_x", "centers_t", "radius_x", "radius_t", "profile"});
            auto& b = ic.basis;
            b.centers_x = optional(bj, bp, "centers_x", b.centers_x, numbers);
            b.centers_t = optional(bj, bp, "centers_t", b.centers_t, numbers);
            b.radius_x = optional(bj, bp, "radius_x", b.radius_x, number);
            b.radius_t = optional(bj, bp, "radius_t", b.radius_t, number);
            b.profile = optional(bj, bp, "profile", b.profile, profile);
            if (b.centers_x.empty() || b.centers_t.empty()) throw ConfigError(bp, "needs centers");
            if (!(b.radius_x > 0.0) || !(b.radius_t > 0.0)) throw ConfigError(bp, "radii must be positive");
            for (double t : b.centers_t)
                if (t - b.radius_t < 0.0 || t + b.radius_t > c.grid.T)
                    throw ConfigError(join(bp, "centers_t"), "basis bumps must stay inside 0 < t < T");
        }
        ic.lambda_reg = optional(ij, "inversion", "lambda_reg", ic.lambda_reg, number);
        if (std::isfinite(ic.lambda_reg) && ic.lambda_reg < 0.0)
            throw ConfigError("inversion.lambda_reg", "must be nonnegative");
        ic.max_iterations = optional(ij, "inversion", "max_iterations", ic.max_iterations, integer);
        if (ic.max_iterations < 0) throw ConfigError("inversion.max_iterations", "must be nonnegative");
        ic.tolerance = optional(ij, "inversion", "tolerance", ic.tolerance, number);
        ic.fd_step = optional(ij, "inversion", "fd_step", ic.fd_step, number);
        if (!(ic.fd_step > 0.0)) throw ConfigError("inversion.fd_step", "must be positive");
        ic.use_psi = optional(ij, "inversion", "use_psi", ic.use_psi, boolean);
        ic.slice = optional(ij, "inversion", "slice", ic.slice, boolean);
        if (ij.contains("psi_method")) {
            const auto m = text(ij["psi_method"], "inversion.psi_method");
            if (m == "quadrature") ic.psi_method = PsiMethod::quadrature;
            else if (m == "leapfrog") ic.psi_method = PsiMethod::leapfrog;
            else throw ConfigError("inversion.psi_method", "expected quadrature or leapfrog");
        }
        c.inversion.data_dir = optional(ij, "inversion", "data", std::string(), text);
        c.inversion.rank_at_zero = optional(ij, "inversion", "rank_at_zero", false, boolean);
        try {
            (void)make_basis(n, ic.basis);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("inversion.basis", e.what());
        }
        if (c.kind == Kind::invert_ab && c.medium.zeroth_kind != Zeroth::q && !c.medium.zeroth.empty())
            throw ConfigError("medium.zeroth", "invert-ab needs the medium given with zeroth = q");
        if (c.kind == Kind::invert_q && c.medium.zeroth_kind != Zeroth::q && !c.medium.zeroth.empty())
            throw ConfigError("medium.zeroth", "invert-q needs the medium given with zeroth = q");
        if (c.kind == Kind::invert_abc && c.medium.zeroth_kind != Zeroth::c)
            throw ConfigError("medium.zeroth", "invert-abc needs the medium given with zeroth = c");
    }

    if (c.kind == Kind::convergence) {
        const auto& vj = require(j, "", "convergence");
        check_keys(vj, "convergence", {"h", "taus"});
        c.convergence.hs = numbers(require(vj, "convergence", "h"), "convergence.h");
        if (c.convergence.hs.size() < 3) throw ConfigError("convergence.h", "needs at least 3 resolutions");
        for (std::size_t i = 0; i < c.convergence.hs.size(); ++i) {
            const double h = c.convergence.hs[i];
            if (!(h > 0.0)) throw ConfigError("convergence.h", "must be positive");
            if (i && !(h < c.convergence.hs[i - 1])) throw ConfigError("convergence.h", "must be decreasing");
            if (i && !is_multiple(c.convergence.hs[i - 1], h))
                throw ConfigError("convergence.h", "each h must divide the previous one");
        }
        c.convergence.taus = optional(vj, "convergence", "taus", c.convergence.taus, numbers);
        if (c.convergence.taus.empty()) throw ConfigError("convergence.taus", "must not be empty");
        for (double tau : c.convergence.taus)
            if (!is_multiple(c.grid.T - tau, c.convergence.hs.front()))
                throw ConfigError("convergence.taus", "T - tau must be a multiple of the coarsest h");
    } else {
        // grid-dependent checks run here so that a bad grid is a validation error
        try {
            const auto g = c.make();
            if (c.kind != Kind::carleman) {
                const auto taus = c.taus(g);
                for (double tau : taus)
                    if (!is_multiple(g.T - tau, g.h))
                        throw ConfigError("tau", "T - tau must be a multiple of h for every tau");
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(c.tau_values.empty() && std::isfinite(c.dtau) ? "tau.dtau" : "grid", e.what());
        }
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path, "cannot read config file");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

}  // namespace wavetomo
