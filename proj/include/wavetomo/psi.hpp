#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "media.hpp"
#include "quadrature.hpp"

namespace wavetomo {

/// Final-time traces of the potential psi solving box psi = div b - a_t + c
/// with zero past, sampled on every spatial grid node (axis 0 fastest).
struct PsiTraces {
    int n = 1;
    int nx = 0;
    double x_min = 0.0;
    double h = 0.0;
    std::vector<double> val, t, tt;
    std::vector<double> grad;    // n per node
    std::vector<double> hess;    // n*n per node
    std::vector<double> grad_t;  // n per node

    std::size_t size() const { return val.size(); }
};

enum class PsiMethod { automatic, quadrature, leapfrog };

namespace detail {

struct SourceBox {
    bool empty = true;
    Point lo{}, hi{};
};

inline SourceBox source_box(const CoefficientSet& cs) {
    bool bounded = true;
    const auto boxes = cs.support_boxes(bounded);
    if (!bounded) throw std::invalid_argument("psi source must be compactly supported");
    SourceBox out;
    for (const auto& b : boxes) {
        if (out.empty) {
            out.lo = b.lo;
            out.hi = b.hi;
            out.empty = false;
            continue;
        }
        for (int a = 0; a < 3; ++a) {
            out.lo[a] = std::min(out.lo[a], b.lo[a]);
            out.hi[a] = std::max(out.hi[a], b.hi[a]);
        }
    }
    if (!out.empty && !std::isfinite(out.lo[kTime]))
        throw std::invalid_argument("psi source must start at a finite time");
    return out;
}

inline PsiTraces empty_traces(const SpaceTimeGrid& g) {
    PsiTraces p;
    p.n = g.n;
    p.nx = g.nx;
    p.x_min = g.x_min;
    p.h = g.h;
    const std::size_t m = g.spatial_size();
    const auto n = static_cast<std::size_t>(g.n);
    p.val.assign(m, 0.0);
    p.t.assign(m, 0.0);
    p.tt.assign(m, 0.0);
    p.grad.assign(m * n, 0.0);
    p.hess.assign(m * n * n, 0.0);
    p.grad_t.assign(m * n, 0.0);
    return p;
}

}  // namespace detail

/// One-dimensional psi at (x, t) and its derivatives from the d'Alembert-Duhamel
/// formula psi = 1/2 int int_{|y-x| < t-s} F(y, s) dy ds.
/// Returns {psi, psi_t, psi_x, psi_xx, psi_tx, psi_tt}.
inline std::array<double, 6> psi_point_1d(const CoefficientSet& cs, double x, double t,
                                          const quad::Tolerance& tol = {}) {
    if (cs.n != 1) throw std::invalid_argument("psi_point_1d needs n = 1");
    std::array<double, 6> out{};
    const auto box = detail::source_box(cs);
    if (box.empty) return out;
    const double s_lo = box.lo[kTime];
    const double s_hi = std::min(t, box.hi[kTime]);
    const double y_lo = box.lo[0], y_hi = box.hi[0];
    auto F = [&](double y, double s) { return cs.psi_source({y, 0.0, s}); };

    if (s_hi > s_lo) {
        // value: nested integral, inner range clipped to the source support
        out[0] = 0.5 * quad::integrate<double>(
                           [&](double s) {
                               const double a = std::max(x - (t - s), y_lo);
                               const double b = std::min(x + (t - s), y_hi);
                               return quad::integrate<double>([&](double y) { return F(y, s)[0]; }, a, b, tol);
                           },
                           s_lo, s_hi, tol);
        // derivatives: integrals along the two characteristics through (x, t)
        const auto lines = quad::integrate<std::array<double, 4>>(
            [&](double s) {
                const auto fp = F(x + (t - s), s);
                const auto fm = F(x - (t - s), s);
                return std::array<double, 4>{fp[0] + fm[0], fp[0] - fm[0], fp[1] - fm[1], fp[1] + fm[1]};
            },
            s_lo, s_hi, tol);
        out[1] = 0.5 * lines[0];
        out[2] = 0.5 * lines[1];
        out[3] = 0.5 * lines[2];
        out[4] = 0.5 * lines[3];
    }
    out[5] = F(x, t)[0] + out[3];
    return out;
}

/// psi traces at t = T by nested quadrature (n = 1 only).
inline PsiTraces solve_psi_quadrature(const CoefficientSet& cs, const SpaceTimeGrid& g,
                                      const quad::Tolerance& tol = {1e-10, 1e-15, 20}) {
    if (g.n != 1 || cs.n != 1) throw std::invalid_argument("quadrature psi solver supports n = 1 only");
    PsiTraces p = detail::empty_traces(g);
    const auto box = detail::source_box(cs);
    if (box.empty) return p;
    const double reach = g.T - box.lo[kTime];
    for (int i = 0; i < g.nx; ++i) {
        const double x = g.x(i);
        if (x < box.lo[0] - reach || x > box.hi[0] + reach) continue;
        const auto d = psi_point_1d(cs, x, g.T, tol);
        p.val[i] = d[0];
        p.t[i] = d[1];
        p.grad[i] = d[2];
        p.hess[i] = d[3];
        p.grad_t[i] = d[4];
        p.tt[i] = d[5];
    }
    return p;
}

/// psi traces at t = T by explicit leapfrog with zero Dirichlet walls. The
/// grid margin keeps the walls outside the domain of influence.
inline PsiTraces solve_psi_leapfrog(const CoefficientSet& cs, const SpaceTimeGrid& g) {
    if (g.dt > g.h / std::sqrt(static_cast<double>(g.n)) * (1.0 + 1e-12))
        throw NumericalError("CFL violation: dt > h / sqrt(n)");
    PsiTraces p = detail::empty_traces(g);
    const auto box = detail::source_box(cs);
    if (box.empty) return p;
    if (box.lo[kTime] < -1e-12) throw std::invalid_argument("psi source must vanish for t < 0");

    const int n = g.n, nx = g.nx;
    const std::size_t m = g.spatial_size();
    const std::size_t stride1 = n == 2 ? static_cast<std::size_t>(nx) : 0;
    std::vector<double> prev(m, 0.0), cur(m, 0.0), next(m, 0.0), src(m, 0.0);

    // nodes whose source can be nonzero
    auto in_range = [&](int axis, int i) { return g.x(i) > box.lo[axis] && g.x(i) < box.hi[axis]; };
    std::vector<std::size_t> src_nodes;
    for (std::size_t id = 0; id < m; ++id) {
        const auto idx = unflatten(g, id);
        bool inside = in_range(0, idx[0]);
        if (n == 2) inside = inside && in_range(1, idx[1]);
        if (inside) src_nodes.push_back(id);
    }
    auto source_at = [&](double t, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        if (t <= box.lo[kTime] || t >= box.hi[kTime]) return;
        for (auto id : src_nodes) {
            const auto idx = unflatten(g, id);
            Point pt{g.x(idx[0]), n == 2 ? g.x(idx[1]) : 0.0, t};
            out[id] = cs.psi_source(pt)[0];
        }
    };
    auto laplacian = [&](const std::vector<double>& u, std::size_t id) {
        double l = u[id + 1] - 2.0 * u[id] + u[id - 1];
        if (n == 2) l += u[id + stride1] - 2.0 * u[id] + u[id - stride1];
        return l / (g.h * g.h);
    };
    auto interior = [&](const std::array<int, kMaxSpace>& idx) {
        for (int a = 0; a < n; ++a)
            if (idx[a] <= 0 || idx[a] >= nx - 1) return false;
        return true;
    };

    // cur = psi^k, prev = psi^{k-1}, older = psi^{k-2}
    std::vector<double> older(m, 0.0);
    const double dt2 = g.dt * g.dt;
    for (int k = 1; k <= g.nt; ++k) {
        source_at(g.t(k - 1), src);
        for (std::size_t id = 0; id < m; ++id) {
            const auto idx = unflatten(g, id);
            next[id] = interior(idx) ? 2.0 * cur[id] - prev[id] + dt2 * (laplacian(cur, id) + src[id]) : 0.0;
        }
        older.swap(prev);
        prev.swap(cur);
        cur.swap(next);
    }
    source_at(g.T, src);

    std::vector<double> vt(m, 0.0);
    for (std::size_t id = 0; id < m; ++id)
        vt[id] = (3.0 * cur[id] - 4.0 * prev[id] + older[id]) / (2.0 * g.dt);
    const auto N = static_cast<std::size_t>(n);
    for (std::size_t id = 0; id < m; ++id) {
        const auto idx = unflatten(g, id);
        p.val[id] = cur[id];
        p.t[id] = vt[id];
        if (!interior(idx)) {
            p.tt[id] = src[id];
            continue;
        }
        p.tt[id] = src[id] + laplacian(cur, id);
        const std::size_t step[2] = {1, stride1};
        for (int a = 0; a < n; ++a) {
            const std::size_t s = step[a];
            p.grad[id * N + a] = (cur[id + s] - cur[id - s]) / (2.0 * g.h);
            p.grad_t[id * N + a] = (vt[id + s] - vt[id - s]) / (2.0 * g.h);
            p.hess[id * N * N + a * N + a] = (cur[id + s] - 2.0 * cur[id] + cur[id - s]) / (g.h * g.h);
        }
        if (n == 2) {
            const double mixed = (cur[id + 1 + stride1] - cur[id - 1 + stride1] - cur[id + 1 - stride1] +
                                  cur[id - 1 - stride1]) /
                                 (4.0 * g.h * g.h);
            p.hess[id * N * N + 1] = mixed;
            p.hess[id * N * N + 2] = mixed;
        }
    }
    return p;
}

inline PsiTraces solve_psi(const CoefficientSet& cs, const SpaceTimeGrid& g, PsiMethod method = PsiMethod::automatic) {
    if (g.n != 1 && g.n != 2) throw std::invalid_argument("unsupported dimension");
    if (method == PsiMethod::automatic) method = g.n == 1 ? PsiMethod::quadrature : PsiMethod::leapfrog;
    return method == PsiMethod::quadrature ? solve_psi_quadrature(cs, g) : solve_psi_leapfrog(cs, g);
}

}  // namespace wavetomo
