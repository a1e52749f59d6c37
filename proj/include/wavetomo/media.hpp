#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bump.hpp"
#include "geometry.hpp"
#include "quadrature.hpp"

namespace wavetomo {

/// Unit step (sign e^axis, 1) in the (x1, x2, t) slots.
inline Point line_step(int axis, int sign) {
    Point d{0.0, 0.0, 1.0};
    d[axis] = static_cast<double>(sign);
    return d;
}

inline Point shifted(const Point& p, const Point& d, double s) {
    return {p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]};
}

/// Interval of s <= s_hi on which p + s d lies in the bump's open support.
/// Returns false when the line misses the support.
inline bool support_interval(const Bump& b, const Point& p, const Point& d, double s_hi, double& s0, double& s1) {
    s0 = -std::numeric_limits<double>::infinity();
    s1 = s_hi;
    for (int a = 0; a < 3; ++a) {
        if (!b.bounded(a)) continue;
        if (d[a] == 0.0) {
            if (std::abs(p[a] - b.center[a]) >= b.radius[a]) return false;
            continue;
        }
        double lo = (b.lo(a) - p[a]) / d[a];
        double hi = (b.hi(a) - p[a]) / d[a];
        if (lo > hi) std::swap(lo, hi);
        s0 = std::max(s0, lo);
        s1 = std::min(s1, hi);
    }
    if (!(s1 > s0)) return false;
    if (!std::isfinite(s0)) throw std::invalid_argument("line integral of a bump unbounded along the line");
    return true;
}

/// weight * int_{-inf}^0 f(x + s sign e^axis, t + s) ds with f a sum of bumps.
struct LineTerm {
    int axis = 0;
    int sign = 1;
    double weight = 1.0;
    std::vector<Bump> integrand;
};

/// Scalar field on space-time: a finite sum of bumps and line-integral terms.
struct Field {
    std::vector<Bump> bumps;
    std::vector<LineTerm> lines;

    bool empty() const { return bumps.empty() && lines.empty(); }
    bool has_lines() const { return !lines.empty(); }

    /// Earliest time at which any term can be nonzero.
    double t_lo() const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        double t = inf;
        for (const auto& b : bumps) t = std::min(t, b.bounded(kTime) ? b.lo(kTime) : -inf);
        for (const auto& l : lines)
            for (const auto& b : l.integrand) t = std::min(t, b.bounded(kTime) ? b.lo(kTime) : -inf);
        return t;
    }

    Jet jet(const Point& p, const quad::Tolerance& tol = {}) const {
        Jet out{};
        for (const auto& b : bumps) quad::axpy(out, 1.0, b.jet(p));
        for (const auto& l : lines) {
            const Point d = line_step(l.axis, l.sign);
            for (const auto& b : l.integrand) {
                double s0, s1;
                if (!support_interval(b, p, d, 0.0, s0, s1)) continue;
                const Jet j = quad::integrate<Jet>([&](double s) { return b.jet(shifted(p, d, s)); }, s0, s1, tol);
                quad::axpy(out, l.weight, j);
            }
        }
        return out;
    }

    double value(const Point& p, const quad::Tolerance& tol = {}) const {
        double out = 0.0;
        for (const auto& b : bumps) out += b.value(p);
        for (const auto& l : lines) {
            const Point d = line_step(l.axis, l.sign);
            for (const auto& b : l.integrand) {
                double s0, s1;
                if (!support_interval(b, p, d, 0.0, s0, s1)) continue;
                out += l.weight *
                       quad::integrate<double>([&](double s) { return b.value(shifted(p, d, s)); }, s0, s1, tol);
            }
        }
        return out;
    }

    /// Jet of int_{-inf}^0 f(p + s (sign e^axis, 1)) ds.
    Jet line_jet(const Point& p, int axis, int sign, const quad::Tolerance& tol = {}) const {
        Jet out{};
        const Point d = line_step(axis, sign);
        for (const auto& b : bumps) {
            double s0, s1;
            if (!support_interval(b, p, d, 0.0, s0, s1)) continue;
            quad::axpy(out, 1.0, quad::integrate<Jet>([&](double s) { return b.jet(shifted(p, d, s)); }, s0, s1, tol));
        }
        if (has_lines()) {
            Field rest;
            rest.lines = lines;
            const double s0 = rest.t_lo() - p[kTime];
            if (s0 < 0.0)
                quad::axpy(out, 1.0,
                           quad::integrate<Jet>([&](double s) { return rest.jet(shifted(p, d, s), tol); }, s0, 0.0, tol));
        }
        return out;
    }

    Field derivative(int axis) const {
        Field f;
        for (const auto& b : bumps) f.bumps.push_back(b.derivative(axis));
        for (const auto& l : lines) {
            LineTerm dl = l;
            for (auto& b : dl.integrand) b = b.derivative(axis);
            f.lines.push_back(std::move(dl));
        }
        return f;
    }

    Field scaled(double s) const {
        Field f = *this;
        for (auto& b : f.bumps) b.amplitude *= s;
        for (auto& l : f.lines) l.weight *= s;
        return f;
    }

    Field& operator+=(const Field& o) {
        bumps.insert(bumps.end(), o.bumps.begin(), o.bumps.end());
        lines.insert(lines.end(), o.lines.begin(), o.lines.end());
        return *this;
    }
};

inline Field operator+(Field a, const Field& b) { return a += b; }

/// Space-time box [lo, hi] (infinite sides allowed).
struct Box {
    Point lo;
    Point hi;
};

enum class Zeroth { c, q };

inline const char* to_string(Zeroth z) { return z == Zeroth::c ? "c" : "q"; }

/// Pointwise coefficients needed by the forward march.
struct LocalCoefficients {
    double a = 0.0;
    std::array<double, 2> b{};
    double q = 0.0;
};

/// Coefficients of L = (d_t - a)^2 - (grad - b)^2 + c, given either through c
/// or through q = c - a_t + div b + a^2 - |b|^2.
struct CoefficientSet {
    int n = 1;
    Field a;
    std::array<Field, 2> b;
    Field zeroth;
    Zeroth zeroth_kind = Zeroth::c;

    bool is_zero() const {
        bool z = a.empty() && zeroth.empty();
        for (int i = 0; i < n; ++i) z = z && b[i].empty();
        return z;
    }

    bool has_lines() const {
        bool l = a.has_lines() || zeroth.has_lines();
        for (int i = 0; i < n; ++i) l = l || b[i].has_lines();
        return l;
    }

    LocalCoefficients local(const Point& p) const {
        LocalCoefficients out;
        if (zeroth_kind == Zeroth::q) {
            out.a = a.value(p);
            for (int i = 0; i < n; ++i) out.b[i] = b[i].value(p);
            out.q = zeroth.value(p);
            return out;
        }
        const Jet aj = a.jet(p);
        out.a = aj[0];
        double q = zeroth.value(p) - aj[jet_d(kTime)] + aj[0] * aj[0];
        for (int i = 0; i < n; ++i) {
            const Jet bj = b[i].jet(p);
            out.b[i] = bj[0];
            q += bj[jet_d(i)] - bj[0] * bj[0];
        }
        out.q = q;
        return out;
    }

    double q(const Point& p) const { return local(p).q; }

    /// Values and first derivatives (x1, x2, t) of a, b and q at p.
    struct Jets1 {
        std::array<double, 4> a{};
        std::array<std::array<double, 4>, 2> b{};
        std::array<double, 4> q{};
    };

    Jets1 local_jets(const Point& p) const {
        Jets1 out;
        const Jet aj = a.jet(p);
        const Jet zj = zeroth.jet(p);
        out.a = {aj[0], aj[jet_d(0)], aj[jet_d(1)], aj[jet_d(2)]};
        if (zeroth_kind == Zeroth::q) {
            out.q = {zj[0], zj[jet_d(0)], zj[jet_d(1)], zj[jet_d(2)]};
        } else {
            out.q[0] = zj[0] - aj[jet_d(kTime)] + aj[0] * aj[0];
            for (int k = 0; k < 3; ++k)
                out.q[1 + k] = zj[jet_d(k)] - aj[jet_dd(kTime, k)] + 2.0 * aj[0] * aj[jet_d(k)];
        }
        for (int i = 0; i < n; ++i) {
            const Jet bj = b[i].jet(p);
            out.b[i] = {bj[0], bj[jet_d(0)], bj[jet_d(1)], bj[jet_d(2)]};
            if (zeroth_kind == Zeroth::c) {
                out.q[0] += bj[jet_d(i)] - bj[0] * bj[0];
                for (int k = 0; k < 3; ++k) out.q[1 + k] += bj[jet_dd(i, k)] - 2.0 * bj[0] * bj[jet_d(k)];
            }
        }
        return out;
    }


    double c(const Point& p) const {
        if (zeroth_kind == Zeroth::c) return zeroth.value(p);
        const Jet aj = a.jet(p);
        double c = zeroth.value(p) + aj[jet_d(kTime)] - aj[0] * aj[0];
        for (int i = 0; i < n; ++i) {
            const Jet bj = b[i].jet(p);
            c += -bj[jet_d(i)] + bj[0] * bj[0];
        }
        return c;
    }

    /// F = div b - a_t + c and its first derivatives (x1, x2, t).
    std::array<double, 4> psi_source(const Point& p) const {
        std::array<double, 4> f{};
        const Jet aj = a.jet(p);
        const Jet zj = zeroth.jet(p);
        if (zeroth_kind == Zeroth::c) {
            f[0] = zj[0] - aj[jet_d(kTime)];
            for (int k = 0; k < 3; ++k) f[1 + k] = zj[jet_d(k)] - aj[jet_dd(kTime, k)];
            for (int i = 0; i < n; ++i) {
                const Jet bj = b[i].jet(p);
                f[0] += bj[jet_d(i)];
                for (int k = 0; k < 3; ++k) f[1 + k] += bj[jet_dd(i, k)];
            }
        } else {
            f[0] = zj[0] - aj[0] * aj[0];
            for (int k = 0; k < 3; ++k) f[1 + k] = zj[jet_d(k)] - 2.0 * aj[0] * aj[jet_d(k)];
            for (int i = 0; i < n; ++i) {
                const Jet bj = b[i].jet(p);
                f[0] += bj[0] * bj[0];
                for (int k = 0; k < 3; ++k) f[1 + k] += 2.0 * bj[0] * bj[jet_d(k)];
            }
        }
        return f;
    }

    /// Bounding boxes of every term; `bounded` is false if some term (a line
    /// integral) has unbounded support.
    std::vector<Box> support_boxes(bool& bounded) const {
        std::vector<Box> boxes;
        bounded = !has_lines();
        auto add = [&](const Field& f) {
            for (const auto& bp : f.bumps) {
                Box bx;
                for (int a = 0; a < 3; ++a) {
                    bx.lo[a] = bp.bounded(a) ? bp.lo(a) : -std::numeric_limits<double>::infinity();
                    bx.hi[a] = bp.bounded(a) ? bp.hi(a) : std::numeric_limits<double>::infinity();
                }
                boxes.push_back(bx);
            }
        };
        add(a);
        add(zeroth);
        for (int i = 0; i < n; ++i) add(b[i]);
        return boxes;
    }
};

/// Rejects bumps whose support leaves the closed unit ball times [0, T].
inline void validate_support(const CoefficientSet& cs, double T) {
    auto check = [&](const Field& f, const std::string& name) {
        for (const auto& b : f.bumps) {
            if (!b.bounded(0) || !b.bounded(kTime) || (cs.n == 2 && !b.bounded(1)))
                throw std::invalid_argument(name + ": bump radius must be finite");
            if (b.lo(kTime) < -1e-12 || b.hi(kTime) > T + 1e-12)
                throw std::invalid_argument(name + ": bump support leaves the time interval [0, T]");
            double r2 = 0.0;
            for (int a = 0; a < cs.n; ++a) {
                const double e = std::abs(b.center[a]) + b.radius[a];
                r2 += e * e;
            }
            if (r2 > 1.0 + 1e-12) throw std::invalid_argument(name + ": bump support leaves the closed unit ball");
        }
        if (f.has_lines()) throw std::invalid_argument(name + ": line-integral terms are not compactly supported");
    };
    check(cs.a, "a");
    for (int i = 0; i < cs.n; ++i) check(cs.b[i], "b" + std::to_string(i + 1));
    check(cs.zeroth, to_string(cs.zeroth_kind));
}

inline LocalCoefficients compute_local(const CoefficientSet& cs, const Point& p) { return cs.local(p); }

inline double compute_q(const CoefficientSet& cs, const Point& p) { return cs.q(p); }

/// m = a + omega.b as a single field.
inline Field incoming_rate(const CoefficientSet& cs, Direction omega) {
    return cs.a + cs.b[omega.axis].scaled(static_cast<double>(omega.sign));
}

/// Jet of log alpha = int_{-inf}^0 (a + omega.b)(x + s omega, t + s) ds.
inline Jet alpha_log_jet(const CoefficientSet& cs, Direction omega, const Point& p, const quad::Tolerance& tol = {}) {
    return incoming_rate(cs, omega).line_jet(p, omega.axis, omega.sign, tol);
}

inline std::vector<double> compute_alpha(const CoefficientSet& cs, Direction omega, const std::vector<Point>& points,
                                         const quad::Tolerance& tol = {}) {
    const Field m = incoming_rate(cs, omega);
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(std::exp(m.line_jet(p, omega.axis, omega.sign, tol)[0]));
    return out;
}

/// L alpha from the jet of I = log alpha:
///   alpha [I_tt - Lap I + I_t^2 - |grad I|^2 - 2 a I_t + 2 b.grad I + q].
inline double l_alpha(const CoefficientSet& cs, const Point& p, const Jet& logj) {
    const LocalCoefficients lc = cs.local(p);
    const double it = logj[jet_d(kTime)];
    double s = logj[jet_dd(kTime, kTime)] + it * it - 2.0 * lc.a * it + lc.q;
    for (int i = 0; i < cs.n; ++i) {
        const double ii = logj[jet_d(i)];
        s += -logj[jet_dd(i, i)] - ii * ii + 2.0 * lc.b[i] * ii;
    }
    return std::exp(logj[0]) * s;
}

/// L alpha through the factorization valid when c = a_t - div b:
///   alpha (d_t - omega.grad) m - (Lap_perp - 2 b_perp.grad_perp + |b_perp|^2) alpha.
inline double l_alpha_normalized(const CoefficientSet& cs, Direction omega, const Point& p, const Jet& logj) {
    const Jet mj = incoming_rate(cs, omega).jet(p);
    double s = mj[jet_d(kTime)] - omega.sign * mj[jet_d(omega.axis)];
    for (int i = 0; i < cs.n; ++i) {
        if (i == omega.axis) continue;
        const double bi = cs.b[i].value(p);
        const double ii = logj[jet_d(i)];
        s -= logj[jet_dd(i, i)] + ii * ii - 2.0 * bi * ii + bi * bi;
    }
    return std::exp(logj[0]) * s;
}

/// Gauge function phi with its end-condition flags at t = T.
struct GaugeFunction {
    Field phi;
    bool vanishes_at_T = false;
    bool dt_vanishes_at_T = false;
};

/// Samples |phi(., T)| and |phi_t(., T)| on the grid's spatial nodes.
inline void check_end_conditions(GaugeFunction& g, const SpaceTimeGrid& grid, double tol = 1e-12) {
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t id = 0; id < grid.spatial_size(); ++id) {
        const auto idx = unflatten(grid, id);
        const Point p{grid.x(idx[0]), grid.n > 1 ? grid.x(idx[1]) : 0.0, grid.T};
        const Jet j = g.phi.jet(p);
        m0 = std::max(m0, std::abs(j[0]));
        m1 = std::max(m1, std::abs(j[jet_d(kTime)]));
    }
    g.vanishes_at_T = m0 < tol;
    g.dt_vanishes_at_T = m1 < tol;
}

/// (a + phi_t, b + grad phi, c). Only defined for media given through c.
inline CoefficientSet apply_gauge(const CoefficientSet& cs, const Field& phi) {
    if (cs.zeroth_kind != Zeroth::c) throw std::invalid_argument("apply_gauge needs the medium given through c");
    CoefficientSet out = cs;
    out.a += phi.derivative(kTime);
    for (int i = 0; i < cs.n; ++i) out.b[i] += phi.derivative(i);
    return out;
}

/// phi(x,t) = -int_{-inf}^0 (a + e^n.b)(x + s e^n, t + s) ds, which makes the
/// gauged medium satisfy a + e^n.b = 0.
inline GaugeFunction gauge_phi(const CoefficientSet& cs) {
    const Direction en{cs.n - 1, 1};
    const Field m = incoming_rate(cs, en);
    if (m.has_lines()) throw std::invalid_argument("gauge_phi needs bump-only a and b");
    GaugeFunction g;
    if (!m.bumps.empty()) g.phi.lines.push_back(LineTerm{en.axis, 1, -1.0, m.bumps});
    return g;
}

/// int_{-inf}^T (a + b^n)(x + s e^n, s) ds for a spatial point x (x[2] ignored).
inline double final_line_integral(const CoefficientSet& cs, const Point& x, double T, const quad::Tolerance& tol = {}) {
    const Direction en{cs.n - 1, 1};
    const Field m = incoming_rate(cs, en);
    Point p = x;
    p[en.axis] += T;
    p[kTime] = T;
    return m.line_jet(p, en.axis, 1, tol)[0];
}

/// Components of d(a dt + sum b^i dx^i) in slot order (x1, x2, t):
///   F[i][t] = a_{x_i} - b^i_t,  F[j][i] = b^i_{x_j} - b^j_{x_i}.
using OneFormCurl = std::array<std::array<double, 3>, 3>;

inline OneFormCurl curl_eta(const CoefficientSet& cs, const Point& p) {
    OneFormCurl F{};
    const Jet aj = cs.a.jet(p);
    std::array<Jet, 2> bj{};
    for (int i = 0; i < cs.n; ++i) bj[i] = cs.b[i].jet(p);
    for (int i = 0; i < cs.n; ++i) {
        F[i][kTime] = aj[jet_d(i)] - bj[i][jet_d(kTime)];
        F[kTime][i] = -F[i][kTime];
        for (int j = 0; j < cs.n; ++j)
            if (j != i) F[j][i] = bj[i][jet_d(j)] - bj[j][jet_d(i)];
    }
    return F;
}

}  // namespace wavetomo
