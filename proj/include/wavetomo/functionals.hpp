#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "forward.hpp"
#include "geometry.hpp"
#include "media.hpp"
#include "psi.hpp"
#include "quadrature.hpp"

namespace wavetomo {

inline constexpr double kRatioFloor = 1e-14;

struct StabilityReport {
    std::string theorem;  // stability id: "1.1" (q), "1.2" (a, b) or "1.4" (curl, c)
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    double amplitude = 0.0;
    SpaceTimeGrid grid;
    std::map<std::string, double> terms;  // rhs broken down by data term

    void finish() { ratio = rhs > kRatioFloor ? lhs / rhs : std::numeric_limits<double>::quiet_NaN(); }
};

inline void to_json(nlohmann::json& j, const StabilityReport& r) {
    j = nlohmann::json{{"theorem", r.theorem},
                       {"lhs", r.lhs},
                       {"rhs", r.rhs},
                       {"ratio", std::isfinite(r.ratio) ? nlohmann::json(r.ratio) : nlohmann::json(nullptr)},
                       {"amplitude", r.amplitude},
                       {"grid", r.grid},
                       {"terms", r.terms}};
}

/// Which trace of which remainder, and the Sobolev order of its norm on H.
enum class TraceField { u, u_t, u_tt, v, v_t };

struct TraceTerm {
    TraceField field;
    int order;
};

inline const char* to_string(TraceField f) {
    switch (f) {
        case TraceField::u: return "u";
        case TraceField::u_t: return "u_t";
        case TraceField::u_tt: return "u_tt";
        case TraceField::v: return "v";
        case TraceField::v_t: return "v_t";
    }
    return "?";
}

/// Quadrature weights on H for a trace set: trapezoid along the omega axis,
/// uniform across (the transverse lattice is periodic).
inline std::vector<double> trace_weights(const TraceSet& ts, double h) {
    const auto along = trapezoid_weights(ts.along_count, h, false);
    const auto across = trapezoid_weights(ts.across_count, h, true);
    return ts.n == 1 ? along : tensor_weights(along, across);
}

namespace detail {

inline void check_same_layout(const TraceSet& a, const TraceSet& b) {
    if (!(a.omega == b.omega) || a.tau != b.tau || a.n != b.n || a.along_count != b.along_count ||
        a.across_count != b.across_count)
        throw std::invalid_argument("mismatched grids: trace layouts differ");
}

inline void check_same_grid(const PlaneWaveDataset& a, const PlaneWaveDataset& b) {
    if (!(a.grid == b.grid) || a.omegas != b.omegas || a.taus != b.taus || a.rows.size() != b.rows.size())
        throw std::invalid_argument("mismatched grids: datasets do not share grid, directions and tau grid");
}

struct DiffSamples {
    std::vector<double> val, grad, hess;
};

inline void diff_into(const std::vector<double>& x, const std::vector<double>& y, std::vector<double>& out) {
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
}

inline DiffSamples trace_difference(const TraceSet& a, const TraceSet& b, TraceField f) {
    DiffSamples d;
    const WaveTrace& wa = (f == TraceField::v || f == TraceField::v_t) ? a.v : a.u;
    const WaveTrace& wb = (f == TraceField::v || f == TraceField::v_t) ? b.v : b.u;
    switch (f) {
        case TraceField::u:
        case TraceField::v:
            diff_into(wa.val, wb.val, d.val);
            diff_into(wa.grad, wb.grad, d.grad);
            diff_into(wa.hess, wb.hess, d.hess);
            break;
        case TraceField::u_t:
        case TraceField::v_t:
            diff_into(wa.t, wb.t, d.val);
            diff_into(wa.grad_t, wb.grad_t, d.grad);
            break;
        case TraceField::u_tt:
            diff_into(wa.tt, wb.tt, d.val);
            break;
    }
    return d;
}

}  // namespace detail

/// Standard (unweighted) H^order norm on H of the difference of one trace.
inline double trace_norm(const TraceSet& a, const TraceSet& b, TraceTerm term, double h) {
    detail::check_same_layout(a, b);
    if (a.background && b.background) return 0.0;
    const auto d = detail::trace_difference(a, b, term.field);
    const auto w = trace_weights(a, h);
    RegionSamples s;
    s.dim = a.n;
    s.values = d.val;
    s.grad = d.grad;
    s.hess = d.hess;
    s.weights = w;
    return weighted_norm(s, NormParams{0.0, term.order, true});
}

/// sum over directions of int_{-1}^{T+1} sum_terms ||trace difference|| dtau,
/// with the trapezoid rule in tau. Adds per-term totals into `terms`.
inline double tau_integral(const PlaneWaveDataset& d1, const PlaneWaveDataset& d2, const std::vector<TraceTerm>& spec,
                           std::map<std::string, double>* terms = nullptr) {
    detail::check_same_grid(d1, d2);
    const std::size_t nt = d1.taus.size();
    double total = 0.0;
    for (std::size_t o = 0; o < d1.omegas.size(); ++o) {
        for (std::size_t m = 0; m < nt; ++m) {
            double wtau = 0.0;
            if (nt >= 2) {
                if (m > 0) wtau += 0.5 * (d1.taus[m] - d1.taus[m - 1]);
                if (m + 1 < nt) wtau += 0.5 * (d1.taus[m + 1] - d1.taus[m]);
            }
            const auto& ra = d1.row(o, m);
            const auto& rb = d2.row(o, m);
            for (const auto& t : spec) {
                const double v = wtau * trace_norm(ra, rb, t, d1.grid.h);
                total += v;
                if (terms) (*terms)[std::string(to_string(t.field)) + "_H" + std::to_string(t.order)] += v;
            }
        }
    }
    return total;
}

/// Composite Gauss integral of f over [-1,1]^n x [0,T].
template <class F>
double integrate_support(int n, double T, int panels, F&& f) {
    std::vector<double> xs, wx, ts, wt;
    quad::composite_gauss_nodes(-1.0, 1.0, panels, xs, wx);
    quad::composite_gauss_nodes(0.0, T, panels, ts, wt);
    double acc = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (n == 1) {
                acc += wt[k] * wx[i] * f(Point{xs[i], 0.0, ts[k]});
                continue;
            }
            for (std::size_t j = 0; j < xs.size(); ++j) acc += wt[k] * wx[i] * wx[j] * f(Point{xs[i], xs[j], ts[k]});
        }
    }
    return acc;
}

inline int default_lhs_panels(int n) { return n == 1 ? 32 : 10; }

/// ||q - q'||_{L^2} versus the q-stability data functional (v traces).
inline StabilityReport thm_q_functional(const CoefficientSet& m1, const CoefficientSet& m2, const PlaneWaveDataset& d1,
                                        const PlaneWaveDataset& d2, int panels = 0) {
    StabilityReport r;
    r.theorem = "1.1";
    r.grid = d1.grid;
    if (panels <= 0) panels = default_lhs_panels(m1.n);
    r.lhs = std::sqrt(integrate_support(m1.n, d1.grid.T, panels, [&](const Point& p) {
        const double d = compute_q(m1, p) - compute_q(m2, p);
        return d * d;
    }));
    r.rhs = tau_integral(d1, d2, {{TraceField::v, 1}, {TraceField::v_t, 0}}, &r.terms);
    r.finish();
    return r;
}

/// ||[a - a', b - b']||_{L^2} versus the (a, b)-stability data functional (u traces).
inline StabilityReport thm_ab_functional(const CoefficientSet& m1, const CoefficientSet& m2, const PlaneWaveDataset& d1,
                                         const PlaneWaveDataset& d2, int panels = 0) {
    StabilityReport r;
    r.theorem = "1.2";
    r.grid = d1.grid;
    if (panels <= 0) panels = default_lhs_panels(m1.n);
    r.lhs = std::sqrt(integrate_support(m1.n, d1.grid.T, panels, [&](const Point& p) {
        const double da = m1.a.value(p) - m2.a.value(p);
        double s = da * da;
        for (int i = 0; i < m1.n; ++i) {
            const double db = m1.b[i].value(p) - m2.b[i].value(p);
            s += db * db;
        }
        return s;
    }));
    r.rhs = tau_integral(d1, d2, {{TraceField::u, 1}, {TraceField::u_t, 0}}, &r.terms);
    r.finish();
    return r;
}

/// Sum of squares of the independent components of d(eta) - d(eta').
inline double curl_difference_squared(const CoefficientSet& m1, const CoefficientSet& m2, const Point& p) {
    const auto f1 = curl_eta(m1, p);
    const auto f2 = curl_eta(m2, p);
    double s = 0.0;
    for (int i = 0; i < m1.n; ++i) {
        const double d = f1[i][kTime] - f2[i][kTime];
        s += d * d;
    }
    if (m1.n == 2) {
        const double d = f1[0][1] - f2[0][1];
        s += d * d;
    }
    return s;
}

/// Norms on R^n of psi - psi' at t = T:
///   ||psi||_{2} + ||psi_t||_{1} + ||psi_tt||_{0} (standard norms).
inline double psi_terms(const PsiTraces& p1, const PsiTraces& p2, std::map<std::string, double>* terms = nullptr) {
    if (p1.size() != p2.size() || p1.n != p2.n || p1.h != p2.h)
        throw std::invalid_argument("mismatched grids: psi traces differ in layout");
    const int n = p1.n;
    std::vector<double> wx = trapezoid_weights(p1.nx, p1.h);
    std::vector<double> w = n == 1 ? wx : tensor_weights(wx, wx);
    auto norm = [&](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>* ga,
                    const std::vector<double>* gb, const std::vector<double>* ha, const std::vector<double>* hb,
                    int order) {
        detail::DiffSamples d;
        detail::diff_into(a, b, d.val);
        if (ga) detail::diff_into(*ga, *gb, d.grad);
        if (ha) detail::diff_into(*ha, *hb, d.hess);
        RegionSamples s;
        s.dim = n;
        s.values = d.val;
        s.grad = d.grad;
        s.hess = d.hess;
        s.weights = w;
        return weighted_norm(s, NormParams{0.0, order, true});
    };
    const double t0 = norm(p1.val, p2.val, &p1.grad, &p2.grad, &p1.hess, &p2.hess, 2);
    const double t1 = norm(p1.t, p2.t, &p1.grad_t, &p2.grad_t, nullptr, nullptr, 1);
    const double t2 = norm(p1.tt, p2.tt, nullptr, nullptr, nullptr, nullptr, 0);
    if (terms) {
        (*terms)["psi_H2"] += t0;
        (*terms)["psi_t_H1"] += t1;
        (*terms)["psi_tt_H0"] += t2;
    }
    return t0 + t1 + t2;
}

/// ||[c - c', d eta - d eta']||_{L^2} versus the curl/c-stability data functional
/// (u, u_t, u_tt, v, v_t traces plus the psi terms).
inline StabilityReport thm_abc_functional(const CoefficientSet& m1, const CoefficientSet& m2,
                                          const PlaneWaveDataset& d1, const PlaneWaveDataset& d2,
                                          const PsiTraces& psi1, const PsiTraces& psi2, int panels = 0) {
    StabilityReport r;
    r.theorem = "1.4";
    r.grid = d1.grid;
    if (panels <= 0) panels = default_lhs_panels(m1.n);
    r.lhs = std::sqrt(integrate_support(m1.n, d1.grid.T, panels, [&](const Point& p) {
        const double dc = m1.c(p) - m2.c(p);
        return dc * dc + curl_difference_squared(m1, m2, p);
    }));
    r.rhs = tau_integral(d1, d2,
                         {{TraceField::u, 2},
                          {TraceField::u_t, 1},
                          {TraceField::u_tt, 0},
                          {TraceField::v, 1},
                          {TraceField::v_t, 0}},
                         &r.terms);
    r.rhs += psi_terms(psi1, psi2, &r.terms);
    r.finish();
    return r;
}

// ---------------------------------------------------------------------------
// Carleman estimate

struct CarlemanRow {
    double sigma = 0.0;
    double interior = 0.0;  // int_Q e^{2 s (t-T)} (|grad_{x,t} w|^2 + s^2 w^2)
    double face_l = 0.0;    // int_L e^{2 s (t-T)} (|grad_L w|^2 + s^2 w^2)
    double residual = 0.0;  // int_Q e^{2 s (t-T)} |L w|^2
    double face_h = 0.0;    // int_H e^{2 s (t-T)} (|grad_{x,t} w|^2 + s^2 w^2)
    double lhs = 0.0;       // s (interior + face_l)
    double rhs = 0.0;       // residual + s face_h
    double ratio = std::numeric_limits<double>::quiet_NaN();
};

struct CarlemanReport {
    std::string test_function;
    Direction omega;
    double tau = 0.0;
    std::vector<CarlemanRow> rows;
    double constant = 0.0;      // max over sigma of lhs / rhs
    double sigma0 = std::numeric_limits<double>::quiet_NaN();  // ratio nonincreasing from here on
    double constant_beyond = 0.0;  // max ratio over sigma >= sigma0
    bool single_constant = false;
    bool vacuous = false;
};

inline void to_json(nlohmann::json& j, const CarlemanRow& r) {
    j = nlohmann::json{{"sigma", r.sigma},       {"interior", r.interior}, {"face_l", r.face_l},
                       {"residual", r.residual}, {"face_h", r.face_h},     {"lhs", r.lhs},
                       {"rhs", r.rhs},           {"ratio", std::isfinite(r.ratio) ? nlohmann::json(r.ratio) : nlohmann::json(nullptr)}};
}

inline void to_json(nlohmann::json& j, const CarlemanReport& r) {
    j = nlohmann::json{{"test_function", r.test_function},
                       {"omega", r.omega.label()},
                       {"tau", r.tau},
                       {"weight", "exp(2 sigma (t - T))"},
                       {"rows", r.rows},
                       {"constant", r.constant},
                       {"sigma0", std::isfinite(r.sigma0) ? nlohmann::json(r.sigma0) : nlohmann::json(nullptr)},
                       {"constant_beyond_sigma0", r.constant_beyond},
                       {"single_constant", r.single_constant},
                       {"vacuous", r.vacuous}};
}

inline CarlemanReport finish_carleman(CarlemanReport rep);

/// Space-time bounding box of a bump-only field; false if it is zero.
inline bool field_box(const Field& w, int n, Box& box) {
    if (w.has_lines()) throw std::invalid_argument("test function must be a sum of bumps");
    bool any = false;
    for (const auto& b : w.bumps) {
        if (b.amplitude == 0.0) continue;
        for (int a = 0; a < 3; ++a) {
            if (a == 1 && n == 1) continue;
            if (!b.bounded(a)) throw std::invalid_argument("test function must be compactly supported");
        }
        if (!any) {
            box.lo = {b.lo(0), n == 2 ? b.lo(1) : 0.0, b.lo(kTime)};
            box.hi = {b.hi(0), n == 2 ? b.hi(1) : 0.0, b.hi(kTime)};
            any = true;
            continue;
        }
        for (int a = 0; a < 3; ++a) {
            if (a == 1 && n == 1) continue;
            box.lo[a] = std::min(box.lo[a], b.lo(a));
            box.hi[a] = std::max(box.hi[a], b.hi(a));
        }
    }
    return any;
}

/// Both sides of the Carleman estimate with weight t on the wedge Q_{omega,tau}
/// for a bump test function w:
///   s int_Q e^{2st}(|grad w|^2 + s^2 w^2) + s int_L e^{2st}(|grad_L w|^2 + s^2 w^2)
///     <~ int_Q e^{2st}|L w|^2 + s int_H e^{2st}(|grad w|^2 + s^2 w^2).
/// The weight is shifted by e^{-2sT}, which cancels in every ratio.
inline CarlemanReport carleman_check(const Field& w, const CoefficientSet& cs, Direction omega, double tau,
                                     const std::vector<double>& sigmas, const SpaceTimeGrid& grid,
                                     const std::string& label = "w") {
    if (!omega.admissible(grid.n)) throw std::invalid_argument("direction not admissible for this grid");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        if (!(sigmas[i] >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
        if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw std::invalid_argument("sigma list must be increasing");
    }
    CarlemanReport rep;
    rep.test_function = label;
    rep.omega = omega;
    rep.tau = tau;
    for (double s : sigmas) rep.rows.push_back(CarlemanRow{s});

    const int n = grid.n;
    const int ax = omega.axis;
    const int sg = omega.sign;
    const double T = grid.T;
    Box box;
    if (!field_box(w, n, box)) {
        rep.vacuous = true;
        rep.single_constant = true;
        return rep;
    }
    for (int a = 0; a < n; ++a)
        if (box.lo[a] < grid.x_min || box.hi[a] > grid.x_max)
            throw std::invalid_argument("test function support exits the grid");

    const std::size_t ns = sigmas.size();
    std::vector<double> q_int(ns, 0.0), l_int(ns, 0.0), r_int(ns, 0.0), h_int(ns, 0.0);
    auto panels_for = [&](double len) { return std::max(8, static_cast<int>(std::ceil(2.0 * len / grid.h))); };

    // transverse nodes (2D)
    std::vector<double> ys{0.0}, wy{1.0};
    if (n == 2) {
        const int pp = 1 - ax;
        quad::composite_gauss_nodes(box.lo[pp], box.hi[pp], panels_for(box.hi[pp] - box.lo[pp]), ys, wy);
    }
    auto make_point = [&](double xa, double y, double t) {
        Point p{0.0, 0.0, t};
        p[ax] = xa;
        if (n == 2) p[1 - ax] = y;
        return p;
    };
    auto energy = [&](const Jet& j, double s) {
        double g = j[jet_d(kTime)] * j[jet_d(kTime)];
        for (int a = 0; a < n; ++a) g += j[jet_d(a)] * j[jet_d(a)];
        return g + s * s * j[0] * j[0];
    };
    auto apply_l = [&](const Jet& j, const Point& p) {
        const auto lc = cs.local(p);
        double v = j[jet_dd(kTime, kTime)] - 2.0 * lc.a * j[jet_d(kTime)] + lc.q * j[0];
        for (int a = 0; a < n; ++a) v += -j[jet_dd(a, a)] + 2.0 * lc.b[a] * j[jet_d(a)];
        return v;
    };

    // Q: t outer, x along omega inner, clipped to sg x_ax <= t - tau
    {
        const double t0 = box.lo[kTime], t1 = std::min(box.hi[kTime], T);
        std::vector<double> ts, wt, xs, wx;
        quad::composite_gauss_nodes(t0, t1, panels_for(t1 - t0), ts, wt);
        for (std::size_t it = 0; it < ts.size(); ++it) {
            const double t = ts[it];
            double x0 = box.lo[ax], x1 = box.hi[ax];
            if (sg > 0) x1 = std::min(x1, t - tau);
            else x0 = std::max(x0, tau - t);
            if (!(x1 > x0)) continue;
            quad::composite_gauss_nodes(x0, x1, panels_for(x1 - x0), xs, wx);
            for (std::size_t ix = 0; ix < xs.size(); ++ix)
                for (std::size_t iy = 0; iy < ys.size(); ++iy) {
                    const Point p = make_point(xs[ix], ys[iy], t);
                    const Jet j = w.jet(p);
                    if (j[0] == 0.0 && j[jet_d(kTime)] == 0.0 && j[jet_dd(kTime, kTime)] == 0.0) continue;
                    const double lw = apply_l(j, p);
                    const double wgt = wt[it] * wx[ix] * wy[iy];
                    for (std::size_t k = 0; k < ns; ++k) {
                        const double s = sigmas[k];
                        const double e = wgt * std::exp(2.0 * s * (t - T));
                        q_int[k] += e * energy(j, s);
                        r_int[k] += e * lw * lw;
                    }
                }
        }
    }
    // L: t = tau + sg x_ax, measure sqrt(2) dx
    {
        double x0 = box.lo[ax], x1 = box.hi[ax];
        // keep box.lo_t <= t <= min(box.hi_t, T)
        const double ta = box.lo[kTime] - tau, tb = std::min(box.hi[kTime], T) - tau;
        if (sg > 0) {
            x0 = std::max(x0, ta);
            x1 = std::min(x1, tb);
        } else {
            x0 = std::max(x0, -tb);
            x1 = std::min(x1, -ta);
        }
        if (x1 > x0) {
            std::vector<double> xs, wx;
            quad::composite_gauss_nodes(x0, x1, panels_for(x1 - x0), xs, wx);
            for (std::size_t ix = 0; ix < xs.size(); ++ix)
                for (std::size_t iy = 0; iy < ys.size(); ++iy) {
                    const double t = tau + sg * xs[ix];
                    const Point p = make_point(xs[ix], ys[iy], t);
                    const Jet j = w.jet(p);
                    const double dl = (sg * j[jet_d(ax)] + j[jet_d(kTime)]) / std::sqrt(2.0);
                    double g = dl * dl;
                    if (n == 2) g += j[jet_d(1 - ax)] * j[jet_d(1 - ax)];
                    const double wgt = std::sqrt(2.0) * wx[ix] * wy[iy];
                    for (std::size_t k = 0; k < ns; ++k) {
                        const double s = sigmas[k];
                        l_int[k] += wgt * std::exp(2.0 * s * (t - T)) * (g + s * s * j[0] * j[0]);
                    }
                }
        }
    }
    // H: t = T, sg x_ax <= T - tau
    if (box.lo[kTime] < T && box.hi[kTime] > T) {
        double x0 = box.lo[ax], x1 = box.hi[ax];
        if (sg > 0) x1 = std::min(x1, T - tau);
        else x0 = std::max(x0, tau - T);
        if (x1 > x0) {
            std::vector<double> xs, wx;
            quad::composite_gauss_nodes(x0, x1, panels_for(x1 - x0), xs, wx);
            for (std::size_t ix = 0; ix < xs.size(); ++ix)
                for (std::size_t iy = 0; iy < ys.size(); ++iy) {
                    const Jet j = w.jet(make_point(xs[ix], ys[iy], T));
                    for (std::size_t k = 0; k < ns; ++k) h_int[k] += wx[ix] * wy[iy] * energy(j, sigmas[k]);
                }
        }
    }

    bool all_zero = true;
    for (std::size_t k = 0; k < ns; ++k) {
        auto& r = rep.rows[k];
        r.interior = q_int[k];
        r.face_l = l_int[k];
        r.residual = r_int[k];
        r.face_h = h_int[k];
        r.lhs = r.sigma * (r.interior + r.face_l);
        r.rhs = r.residual + r.sigma * r.face_h;
        if (r.rhs > 0.0) r.ratio = r.lhs / r.rhs;
        if (r.lhs != 0.0 || r.rhs != 0.0) all_zero = false;
    }
    if (all_zero) {
        rep.vacuous = true;
        rep.single_constant = true;
        return rep;
    }
    return finish_carleman(std::move(rep));
}

/// Fills the verdict fields: C = max ratio; sigma0 = first sigma from which
/// the ratio never increases again. One constant is deemed to hold when that
/// tail covers at least the last three sigma values.
inline CarlemanReport finish_carleman(CarlemanReport rep) {
    const std::size_t ns = rep.rows.size();
    rep.constant = 0.0;
    bool finite = true;
    for (const auto& r : rep.rows) {
        if (!std::isfinite(r.ratio)) finite = false;
        else rep.constant = std::max(rep.constant, r.ratio);
    }
    if (!finite || ns == 0) {
        rep.single_constant = false;
        return rep;
    }
    std::size_t start = ns - 1;
    while (start > 0 && rep.rows[start].ratio <= rep.rows[start - 1].ratio * (1.0 + 1e-12)) --start;
    rep.sigma0 = rep.rows[start].sigma;
    rep.constant_beyond = 0.0;
    for (std::size_t k = start; k < ns; ++k) rep.constant_beyond = std::max(rep.constant_beyond, rep.rows[k].ratio);
    rep.single_constant = ns < 3 ? start == 0 : start + 3 <= ns;
    return rep;
}

}  // namespace wavetomo
