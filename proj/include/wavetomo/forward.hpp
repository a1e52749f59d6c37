#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "media.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace wavetomo {

enum class WaveKind { u, v };

/// Characteristic lattice for one (omega, tau): node (i, j) sits at
/// r = t - tau - x.omega = i k, s = t + x.omega = s_min + j k, with k = h.
/// H (t = T) is the anti-diagonal i + j = S. In 2D the transverse axis is
/// periodic with the grid's spatial nodes.
struct CharLattice {
    int n = 1;
    Direction omega;
    double tau = 0.0;
    double T = 1.0;
    double k = 0.1;
    double s_min = -1.0;
    int S = 0;
    int I = 0;
    int J = 0;
    int ny = 1;
    double y0 = 0.0;

    int perp() const { return 1 - omega.axis; }
    bool active(int i, int j) const { return i + j <= S + 3; }
    std::size_t index(int i, int j, int l) const {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(J + 1) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(ny) +
               static_cast<std::size_t>(l);
    }
    std::size_t size() const {
        return static_cast<std::size_t>(I + 1) * static_cast<std::size_t>(J + 1) * static_cast<std::size_t>(ny);
    }

    double t_of(double fi, double fj) const { return 0.5 * (fi * k + s_min + fj * k + tau); }
    double xw_of(double fi, double fj) const { return 0.5 * (s_min + fj * k - fi * k - tau); }

    Point at(double fi, double fj, int l) const {
        Point p{0.0, 0.0, t_of(fi, fj)};
        p[omega.axis] = omega.sign * xw_of(fi, fj);
        if (n == 2) p[perp()] = y0 + l * k;
        return p;
    }

    /// Number of H nodes with x.omega in [x_min, T - tau] is last_h() + 1.
    int last_h(double x_max) const { return static_cast<int>(std::floor((T - tau + x_max) / k + 1e-9)); }
};

inline bool is_multiple(double value, double step) {
    const double q = value / step;
    return std::abs(q - std::round(q)) < 1e-7;
}

inline CharLattice make_lattice(const SpaceTimeGrid& g, Direction omega, double tau) {
    if (!omega.admissible(g.n)) throw std::invalid_argument("direction not admissible for this grid");
    if (tau < -1.0 - 1e-12 || tau > g.T + 1.0 + 1e-12) throw std::invalid_argument("tau outside [-1, T+1]");
    if (!is_multiple(g.T - tau, g.h))
        throw std::invalid_argument("T - tau must be a multiple of h so H falls on lattice nodes");
    CharLattice L;
    L.n = g.n;
    L.omega = omega;
    L.tau = tau;
    L.T = g.T;
    L.k = g.h;
    L.S = static_cast<int>(std::ceil((2.0 * g.T - tau + 1.0) / g.h - 1e-9));
    L.s_min = 2.0 * g.T - tau - L.S * g.h;
    L.I = L.S + 3;
    L.J = L.S + 3;
    if (g.n == 2) {
        L.ny = g.nx - 1;
        L.y0 = g.x_min;
    }
    return L;
}

/// Remainder u (Heaviside part) or v (delta part) on the lattice of one wedge.
struct WaveSolution {
    WaveKind kind = WaveKind::u;
    CharLattice lattice;
    std::string scheme = "characteristic-box";
    bool background = false;
    std::vector<double> w;     // lattice values, valid where lattice.active(i, j)
    std::vector<double> face;  // values on r = 0, (J+1) x ny
    std::vector<double> face_r, face_rs, face_rr;  // r-derivatives on r = 0
    double residual = std::numeric_limits<double>::quiet_NaN();

    double background_value() const { return kind == WaveKind::u ? 1.0 : 0.0; }
    double at(int i, int j, int l) const { return background ? background_value() : w[lattice.index(i, j, l)]; }
};

struct ForwardOptions {
    bool residual = false;
    bool skip_background = true;
};

/// True when Q_{omega,tau} misses every coefficient support box, so that
/// u = 1 and v = 0 on the whole wedge.
inline bool wedge_misses_support(const CoefficientSet& cs, Direction omega, double tau, double T) {
    bool bounded = true;
    const auto boxes = cs.support_boxes(bounded);
    if (!bounded) return false;
    for (const auto& b : boxes) {
        if (b.lo[kTime] >= T) continue;
        const int a = omega.axis;
        const double xw_min = omega.sign > 0 ? b.lo[a] : -b.hi[a];
        const double t_top = std::min(b.hi[kTime], T);
        if (!std::isfinite(xw_min) || !std::isfinite(t_top)) return false;
        if (t_top - xw_min > tau) return false;
    }
    return true;
}

namespace detail {

// Periodic tridiagonal solve: lo[l] x[l-1] + di[l] x[l] + up[l] x[l+1] = rhs[l].
inline void solve_cyclic(std::vector<double>& lo, std::vector<double>& di, std::vector<double>& up,
                         std::vector<double>& rhs) {
    const std::size_t n = di.size();
    if (n == 1) {
        rhs[0] /= (lo[0] + di[0] + up[0]);
        return;
    }
    auto thomas = [&](std::vector<double>& b, std::vector<double>& x) {
        std::vector<double> c(n);
        double denom = b[0];
        c[0] = up[0] / denom;
        x[0] /= denom;
        for (std::size_t i = 1; i < n; ++i) {
            denom = b[i] - lo[i] * c[i - 1];
            c[i] = (i + 1 < n) ? up[i] / denom : 0.0;
            x[i] = (x[i] - lo[i] * x[i - 1]) / denom;
        }
        for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
    };
    const double alpha = up[n - 1];
    const double beta = lo[0];
    const double gamma = -di[0];
    std::vector<double> bb = di;
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    std::vector<double> z(n, 0.0);
    z[0] = gamma;
    z[n - 1] = alpha;
    thomas(bb, rhs);
    thomas(bb, z);
    const double fact = (rhs[0] + beta * rhs[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i) rhs[i] -= fact * z[i];
}

// Coefficients of the characteristic form at a point:
//   L = 4 d_r d_s - 2A d_r - 2B d_s - d_yy + 2 by d_y + q.
struct CharCoeffs {
    double A = 0.0, B = 0.0, by = 0.0, q = 0.0;
    bool zero() const { return A == 0.0 && B == 0.0 && by == 0.0 && q == 0.0; }
};

inline CharCoeffs char_coeffs(const CoefficientSet& cs, const CharLattice& L, const Point& p) {
    const LocalCoefficients lc = cs.local(p);
    const double bw = L.omega.sign * lc.b[L.omega.axis];
    CharCoeffs c;
    c.A = lc.a + bw;
    c.B = lc.a - bw;
    c.q = lc.q;
    if (L.n == 2) c.by = lc.b[L.perp()];
    return c;
}

class SupportTest {
public:
    SupportTest(const CoefficientSet& cs, const CharLattice& L) : L_(L) {
        boxes_ = cs.support_boxes(bounded_);
    }
    // Could the coefficients be nonzero anywhere on the transverse row through (fi, fj)?
    bool row_active(double fi, double fj) const {
        if (!bounded_) return true;
        const double t = L_.t_of(fi, fj);
        const double xa = L_.omega.sign * L_.xw_of(fi, fj);
        const int a = L_.omega.axis;
        for (const auto& b : boxes_)
            if (t > b.lo[kTime] && t < b.hi[kTime] && xa > b.lo[a] && xa < b.hi[a]) return true;
        return false;
    }

private:
    const CharLattice& L_;
    std::vector<Box> boxes_;
    bool bounded_ = true;
};

}  // namespace detail

/// Values of log alpha jets and L alpha along r = 0, accumulated segment by
/// segment (8-point Gauss per half-step of t).
struct FaceData {
    std::vector<double> alpha;    // (J+1) x ny
    std::vector<double> alpha_y;  // transverse derivatives (2D)
    std::vector<double> alpha_yy;
    std::vector<double> l_alpha;  // (J+1) x ny
    std::vector<double> rate;     // m = a + omega.b on the face
};

inline FaceData face_data(const CoefficientSet& cs, const CharLattice& L, bool need_l_alpha) {
    const std::size_t ny = static_cast<std::size_t>(L.ny);
    FaceData f;
    f.alpha.assign(static_cast<std::size_t>(L.J + 1) * ny, 1.0);
    f.alpha_y.assign(f.alpha.size(), 0.0);
    f.alpha_yy.assign(f.alpha.size(), 0.0);
    f.l_alpha.assign(f.alpha.size(), 0.0);
    f.rate.assign(f.alpha.size(), 0.0);
    const Field m = incoming_rate(cs, L.omega);
    const Point d = line_step(L.omega.axis, L.omega.sign);
    std::vector<double> nodes, weights;
    quad::gauss_nodes(-0.5 * L.k, 0.0, nodes, weights);
    for (std::size_t l = 0; l < ny; ++l) {
        Jet I{};
        for (int j = 0; j <= L.J; ++j) {
            const Point p = L.at(0, j, static_cast<int>(l));
            if (j > 0) {
                for (std::size_t q = 0; q < nodes.size(); ++q) quad::axpy(I, weights[q], m.jet(shifted(p, d, nodes[q])));
            }
            const std::size_t id = static_cast<std::size_t>(j) * ny + l;
            f.alpha[id] = std::exp(I[0]);
            if (L.n == 2) {
                const double iy = I[jet_d(L.perp())];
                f.alpha_y[id] = f.alpha[id] * iy;
                f.alpha_yy[id] = f.alpha[id] * (I[jet_dd(L.perp(), L.perp())] + iy * iy);
            }
            const LocalCoefficients lc = cs.local(p);
            f.rate[id] = lc.a + L.omega.sign * lc.b[L.omega.axis];
            if (need_l_alpha) f.l_alpha[id] = l_alpha(cs, p, I);
        }
    }
    return f;
}

/// r-derivatives of a lattice solution on r = 0, from the equation and its
/// r-derivative read as ODEs in s along the face:
///   4 d_s w_r  = 2A w_r + 2B w_s - q w + w_yy - 2 by w_y,
///   4 d_s w_rr = 2A w_rr + 2A_r w_r + 2B_r w_s + 2B w_rs - q_r w - q w_r
///                + w_ryy - 2 by_r w_y - 2 by w_ry,
/// integrated by the trapezoid rule from zero data at s = s_min.
inline void face_r_derivatives(const CoefficientSet& cs, const CharLattice& L, const std::vector<double>& w,
                               const std::vector<double>& ws, const std::vector<double>& wy,
                               const std::vector<double>& wyy, std::vector<double>& wr, std::vector<double>& wrs,
                               std::vector<double>& wrr) {
    const int ny = L.ny;
    const double k = L.k;
    const int ax = L.omega.axis;
    const double sg = L.omega.sign;
    const int pp = L.n == 2 ? L.perp() : 0;
    wr.assign(w.size(), 0.0);
    wrs.assign(w.size(), 0.0);
    wrr.assign(w.size(), 0.0);
    std::vector<double> A_prev(ny, 0.0), g1_prev(ny, 0.0), g2_prev(ny, 0.0);
    std::vector<double> A(ny), Ar(ny), B(ny), Br(ny), q(ny), qr(ny), by(ny), byr(ny);
    auto dr = [&](const std::array<double, 4>& f) { return 0.5 * (f[3] - sg * f[1 + ax]); };
    for (int j = 1; j <= L.J; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * ny;
        for (int l = 0; l < ny; ++l) {
            const auto lj = cs.local_jets(L.at(0, j, l));
            std::array<double, 4> Aj{}, Bj{};
            for (int c = 0; c < 4; ++c) {
                Aj[c] = lj.a[c] + sg * lj.b[ax][c];
                Bj[c] = lj.a[c] - sg * lj.b[ax][c];
            }
            A[l] = Aj[0];
            Ar[l] = dr(Aj);
            B[l] = Bj[0];
            Br[l] = dr(Bj);
            q[l] = lj.q[0];
            qr[l] = dr(lj.q);
            by[l] = L.n == 2 ? lj.b[pp][0] : 0.0;
            byr[l] = L.n == 2 ? dr(lj.b[pp]) : 0.0;
            const std::size_t id = row + l;
            const double g1 = 2.0 * B[l] * ws[id] - q[l] * w[id] + wyy[id] - 2.0 * by[l] * wy[id];
            wr[id] = (wr[id - ny] * (1.0 + 0.25 * k * A_prev[l]) + 0.125 * k * (g1_prev[l] + g1)) /
                     (1.0 - 0.25 * k * A[l]);
            wrs[id] = 0.25 * (2.0 * A[l] * wr[id] + g1);
            g1_prev[l] = g1;
        }
        for (int l = 0; l < ny; ++l) {
            const std::size_t id = row + l;
            double wry = 0.0, wryy = 0.0;
            if (ny > 1) {
                const std::size_t m = row + (l + ny - 1) % ny, p = row + (l + 1) % ny;
                wry = (wr[p] - wr[m]) / (2.0 * k);
                wryy = (wr[p] - 2.0 * wr[id] + wr[m]) / (k * k);
            }
            const double g2 = 2.0 * Ar[l] * wr[id] + 2.0 * Br[l] * ws[id] + 2.0 * B[l] * wrs[id] - qr[l] * w[id] -
                              q[l] * wr[id] + wryy - 2.0 * byr[l] * wy[id] - 2.0 * by[l] * wry;
            wrr[id] = (wrr[id - ny] * (1.0 + 0.25 * k * A_prev[l]) + 0.125 * k * (g2_prev[l] + g2)) /
                      (1.0 - 0.25 * k * A[l]);
            g2_prev[l] = g2;
            A_prev[l] = A[l];
        }
    }
}

/// Solves the characteristic problems for u and v on one wedge with a shared
/// coefficient pass. u = alpha and v = transport solution on r = 0; u = 1,
/// v = 0 on the far-past characteristic s = s_min.
inline std::array<WaveSolution, 2> solve_uv(const CoefficientSet& cs, const SpaceTimeGrid& grid, Direction omega,
                                             double tau, const ForwardOptions& opt = {}) {
    const CharLattice L = make_lattice(grid, omega, tau);
    std::array<WaveSolution, 2> out;
    out[0].kind = WaveKind::u;
    out[1].kind = WaveKind::v;
    out[0].lattice = out[1].lattice = L;
    if (opt.skip_background && wedge_misses_support(cs, omega, tau, grid.T)) {
        out[0].background = out[1].background = true;
        out[0].residual = out[1].residual = 0.0;
        return out;
    }

    const int ny = L.ny;
    const double k = L.k;
    const FaceData fd = face_data(cs, L, true);

    auto& U = out[0].w;
    auto& V = out[1].w;
    U.assign(L.size(), 1.0);
    V.assign(L.size(), 0.0);
    out[0].face = fd.alpha;
    auto& vf = out[1].face;
    vf.assign(fd.alpha.size(), 0.0);

    // Transport along r = 0 in the time parameter: dv/dt = m v - L alpha / 2.
    const double dl = 0.5 * k;
    for (int l = 0; l < ny; ++l) {
        for (int j = 1; j <= L.J; ++j) {
            const std::size_t a = static_cast<std::size_t>(j - 1) * ny + l, b = static_cast<std::size_t>(j) * ny + l;
            const double num = vf[a] * (1.0 + 0.5 * dl * fd.rate[a]) - 0.25 * dl * (fd.l_alpha[a] + fd.l_alpha[b]);
            vf[b] = num / (1.0 - 0.5 * dl * fd.rate[b]);
        }
    }
    for (int j = 0; j <= L.J; ++j)
        for (int l = 0; l < ny; ++l) {
            U[L.index(0, j, l)] = fd.alpha[static_cast<std::size_t>(j) * ny + l];
            V[L.index(0, j, l)] = vf[static_cast<std::size_t>(j) * ny + l];
        }

    {
        const std::size_t nf = fd.alpha.size();
        std::vector<double> us(nf), vs(nf), vy(nf, 0.0), vyy(nf, 0.0);
        for (std::size_t id = 0; id < nf; ++id) {
            us[id] = 0.5 * fd.alpha[id] * fd.rate[id];
            vs[id] = 0.5 * (fd.rate[id] * vf[id] - 0.5 * fd.l_alpha[id]);
        }
        if (ny > 1)
            for (int j = 0; j <= L.J; ++j)
                for (int l = 0; l < ny; ++l) {
                    const std::size_t row = static_cast<std::size_t>(j) * ny;
                    const double vm = vf[row + (l + ny - 1) % ny], vp = vf[row + (l + 1) % ny], v0 = vf[row + l];
                    vy[row + l] = (vp - vm) / (2.0 * k);
                    vyy[row + l] = (vp - 2.0 * v0 + vm) / (k * k);
                }
        face_r_derivatives(cs, L, fd.alpha, us, fd.alpha_y, fd.alpha_yy, out[0].face_r, out[0].face_rs,
                           out[0].face_rr);
        face_r_derivatives(cs, L, vf, vs, vy, vyy, out[1].face_r, out[1].face_rs, out[1].face_rr);
    }

    // Transverse-constant flags (2D fast path).
    std::vector<std::uint8_t> flat(static_cast<std::size_t>(L.I + 1) * (L.J + 1), 1);
    auto fid = [&](int i, int j) { return static_cast<std::size_t>(i) * (L.J + 1) + j; };
    auto row_constant = [&](const std::vector<double>& W, int i, int j) {
        const std::size_t base = L.index(i, j, 0);
        for (int l = 1; l < ny; ++l)
            if (W[base + l] != W[base]) return false;
        return true;
    };
    if (ny > 1)
        for (int j = 0; j <= L.J; ++j) flat[fid(0, j)] = row_constant(U, 0, j) && row_constant(V, 0, j);

    const detail::SupportTest support(cs, L);
    std::vector<detail::CharCoeffs> cc(static_cast<std::size_t>(ny));
    std::vector<double> lo(ny), di(ny), up(ny), rhs(ny), lo2(ny), di2(ny), up2(ny);
    const double ik2 = 1.0 / (k * k);

    for (int i = 1; i <= L.I; ++i) {
        for (int j = 1; j <= L.J && L.active(i, j); ++j) {
            const bool coeffs_on = support.row_active(i - 0.5, j - 0.5);
            bool zero = true;
            if (coeffs_on) {
                for (int l = 0; l < ny; ++l) {
                    cc[l] = detail::char_coeffs(cs, L, L.at(i - 0.5, j - 0.5, l));
                    zero = zero && cc[l].zero();
                }
            }
            const std::size_t i00 = L.index(i - 1, j - 1, 0), i10 = L.index(i, j - 1, 0), i01 = L.index(i - 1, j, 0),
                              i11 = L.index(i, j, 0);
            const bool inputs_flat = ny == 1 || (flat[fid(i - 1, j - 1)] && flat[fid(i, j - 1)] && flat[fid(i - 1, j)]);
            if (zero && inputs_flat) {
                for (int l = 0; l < ny; ++l) {
                    U[i11 + l] = U[i10 + l] + U[i01 + l] - U[i00 + l];
                    V[i11 + l] = V[i10 + l] + V[i01 + l] - V[i00 + l];
                }
                continue;
            }
            if (zero)
                for (auto& c : cc) c = {};
            if (ny == 1) {
                const auto& c = cc[0];
                const double q4 = 0.25 * c.q;
                const double c11 = 4.0 * ik2 - (c.A + c.B) / k + q4;
                const double c10 = -4.0 * ik2 - c.A / k + c.B / k + q4;
                const double c01 = -4.0 * ik2 + c.A / k - c.B / k + q4;
                const double c00 = 4.0 * ik2 + (c.A + c.B) / k + q4;
                U[i11] = -(c10 * U[i10] + c01 * U[i01] + c00 * U[i00]) / c11;
                V[i11] = -(c10 * V[i10] + c01 * V[i01] + c00 * V[i00]) / c11;
                continue;
            }
            // 2D: transverse operator averaged over the four corners, implicit in the new row.
            for (std::size_t which = 0; which < 2; ++which) {
                auto& W = which == 0 ? U : V;
                for (int l = 0; l < ny; ++l) {
                    const auto& c = cc[l];
                    const int lm = (l + ny - 1) % ny, lp = (l + 1) % ny;
                    const double m_lo = 0.25 * (-ik2 - c.by / k);
                    const double m_di = 0.25 * (2.0 * ik2 + c.q);
                    const double m_up = 0.25 * (-ik2 + c.by / k);
                    const double c11 = 4.0 * ik2 - (c.A + c.B) / k;
                    const double c10 = -4.0 * ik2 - c.A / k + c.B / k;
                    const double c01 = -4.0 * ik2 + c.A / k - c.B / k;
                    const double c00 = 4.0 * ik2 + (c.A + c.B) / k;
                    auto corner = [&](std::size_t base, double cc0) {
                        return cc0 * W[base + l] + m_lo * W[base + lm] + m_di * W[base + l] + m_up * W[base + lp];
                    };
                    rhs[l] = -(corner(i10, c10) + corner(i01, c01) + corner(i00, c00));
                    lo2[l] = m_lo;
                    di2[l] = c11 + m_di;
                    up2[l] = m_up;
                }
                lo = lo2;
                di = di2;
                up = up2;
                detail::solve_cyclic(lo, di, up, rhs);
                for (int l = 0; l < ny; ++l) W[i11 + l] = rhs[l];
            }
            flat[fid(i, j)] = row_constant(U, i, j) && row_constant(V, i, j);
        }
    }

    if (opt.residual) {
        for (auto& sol : out) {
            const auto& W = sol.w;
            double acc = 0.0;
            for (int i = 1; i <= L.S; ++i)
                for (int j = 1; i + j <= L.S; ++j) {
                    for (int l = 0; l < ny; ++l) {
                        const auto c = detail::char_coeffs(cs, L, L.at(i, j, l));
                        auto Wv = [&](int ii, int jj, int ll) { return W[L.index(ii, jj, (ll + ny) % ny)]; };
                        const double w0 = Wv(i, j, l);
                        const double wr = (Wv(i + 1, j, l) - Wv(i - 1, j, l)) / (2.0 * k);
                        const double ws = (Wv(i, j + 1, l) - Wv(i, j - 1, l)) / (2.0 * k);
                        const double wrs =
                            (Wv(i + 1, j + 1, l) - Wv(i + 1, j - 1, l) - Wv(i - 1, j + 1, l) + Wv(i - 1, j - 1, l)) /
                            (4.0 * k * k);
                        double res = 4.0 * wrs - 2.0 * c.A * wr - 2.0 * c.B * ws + c.q * w0;
                        if (ny > 1) {
                            const double wy = (Wv(i, j, l + 1) - Wv(i, j, l - 1)) / (2.0 * k);
                            const double wyy = (Wv(i, j, l + 1) - 2.0 * w0 + Wv(i, j, l - 1)) / (k * k);
                            res += -wyy + 2.0 * c.by * wy;
                        }
                        acc += res * res;
                    }
                }
            const double cell = 0.5 * k * k * (ny > 1 ? k : 1.0);
            sol.residual = std::sqrt(acc * cell);
        }
    }
    return out;
}

inline WaveSolution solve_u(const CoefficientSet& cs, const SpaceTimeGrid& grid, Direction omega, double tau,
                            const ForwardOptions& opt = {}) {
    return solve_uv(cs, grid, omega, tau, opt)[0];
}

inline WaveSolution solve_v(const CoefficientSet& cs, const SpaceTimeGrid& grid, Direction omega, double tau,
                            const ForwardOptions& opt = {}) {
    return solve_uv(cs, grid, omega, tau, opt)[1];
}

/// Final-time trace of one remainder on H: value, d_t, d_tt, spatial gradient,
/// spatial Hessian and gradient of d_t, at `points` nodes.
struct WaveTrace {
    std::vector<double> val, t, tt;
    std::vector<double> grad;    // n per node
    std::vector<double> hess;    // n*n per node
    std::vector<double> grad_t;  // n per node
};

/// Traces of u and v on H_{omega,tau}. Nodes are the grid's spatial nodes with
/// x.omega <= T - tau, ordered along the omega axis (ascending grid index)
/// fastest, transverse axis slowest.
struct TraceSet {
    Direction omega;
    double tau = 0.0;
    int n = 1;
    bool background = false;
    int along_count = 0;   // nodes along the omega axis
    int across_count = 1;  // transverse nodes (2D)
    std::vector<int> node;     // grid index along the omega axis for each along position
    std::vector<double> x;     // n coordinates per node
    WaveTrace u, v;

    std::size_t size() const { return static_cast<std::size_t>(along_count) * static_cast<std::size_t>(across_count); }
};

namespace detail {

struct NodeDerivs {
    double w = 0.0, wt = 0.0, wtt = 0.0, wx = 0.0, wxx = 0.0, wtx = 0.0;
};

}  // namespace detail

/// Builds the traces of u and v at t = T from lattice values. Derivatives in
/// r use centered differences (forward 3- and 4-point ones on r = 0), s
/// derivatives are centered, and the mixed r-s derivative comes from the
/// equation itself.
inline TraceSet extract_traces(const WaveSolution& u, const WaveSolution& v, const CoefficientSet& cs,
                               const SpaceTimeGrid& grid) {
    const CharLattice& L = u.lattice;
    TraceSet ts;
    ts.omega = L.omega;
    ts.tau = L.tau;
    ts.n = grid.n;
    ts.background = u.background && v.background;
    const int nh = L.last_h(grid.x_max) + 1;
    ts.along_count = nh;
    ts.across_count = L.ny;
    const int n = grid.n;
    const int sg = L.omega.sign;
    const int ax = L.omega.axis;
    const int pp = 1 - ax;
    const double k = L.k;

    // along position p -> lattice row i (ascending grid index along ax)
    std::vector<int> row(nh);
    for (int p = 0; p < nh; ++p) row[p] = sg > 0 ? nh - 1 - p : p;
    ts.node.resize(nh);
    for (int p = 0; p < nh; ++p) {
        const double xa = sg * (L.T - L.tau - row[p] * k);
        ts.node[p] = static_cast<int>(std::lround((xa - grid.x_min) / grid.h));
    }
    const std::size_t P = ts.size();
    ts.x.resize(P * n);
    for (int l = 0; l < L.ny; ++l)
        for (int p = 0; p < nh; ++p) {
            const std::size_t id = static_cast<std::size_t>(l) * nh + p;
            ts.x[id * n + ax] = grid.x(ts.node[p]);
            if (n == 2) ts.x[id * n + pp] = L.y0 + l * k;
        }

    auto fill = [&](const WaveSolution& sol, WaveTrace& tr) {
        const double bg = sol.background_value();
        tr.val.assign(P, bg);
        tr.t.assign(P, 0.0);
        tr.tt.assign(P, 0.0);
        tr.grad.assign(P * n, 0.0);
        tr.hess.assign(P * n * n, 0.0);
        tr.grad_t.assign(P * n, 0.0);
        if (sol.background) return;
        const int ny = L.ny;
        std::vector<detail::NodeDerivs> nd(static_cast<std::size_t>(ny));
        for (int p = 0; p < nh; ++p) {
            const int i = row[p];
            const int j = L.S - i;
            if (j < 1) continue;
            auto W = [&](int ii, int jj, int ll) { return sol.at(ii, jj, (ll + ny) % ny); };
            for (int l = 0; l < ny; ++l) {
                const double w0 = W(i, j, l);
                const double ws = (W(i, j + 1, l) - W(i, j - 1, l)) / (2.0 * k);
                const double wss = (W(i, j + 1, l) - 2.0 * w0 + W(i, j - 1, l)) / (k * k);
                double wr, wrr, wrs;
                if (i >= 1) {
                    wr = (W(i + 1, j, l) - W(i - 1, j, l)) / (2.0 * k);
                    wrr = (W(i + 1, j, l) - 2.0 * w0 + W(i - 1, j, l)) / (k * k);
                    const auto c = detail::char_coeffs(cs, L, L.at(i, j, l));
                    double wy = 0.0, wyy = 0.0;
                    if (ny > 1) {
                        wy = (W(i, j, l + 1) - W(i, j, l - 1)) / (2.0 * k);
                        wyy = (W(i, j, l + 1) - 2.0 * w0 + W(i, j, l - 1)) / (k * k);
                    }
                    wrs = (2.0 * c.A * wr + 2.0 * c.B * ws + wyy - 2.0 * c.by * wy - c.q * w0) / 4.0;
                } else {
                    const std::size_t fid = static_cast<std::size_t>(j) * ny + l;
                    wr = sol.face_r[fid];
                    wrr = sol.face_rr[fid];
                    wrs = sol.face_rs[fid];
                }
                auto& d = nd[l];
                d.w = w0;
                d.wt = wr + ws;
                d.wtt = wrr + 2.0 * wrs + wss;
                d.wx = sg * (ws - wr);
                d.wxx = wrr - 2.0 * wrs + wss;
                d.wtx = sg * (wss - wrr);
            }
            for (int l = 0; l < ny; ++l) {
                const std::size_t id = static_cast<std::size_t>(l) * nh + p;
                const auto& d = nd[l];
                tr.val[id] = d.w;
                tr.t[id] = d.wt;
                tr.tt[id] = d.wtt;
                tr.grad[id * n + ax] = d.wx;
                tr.grad_t[id * n + ax] = d.wtx;
                tr.hess[id * n * n + ax * n + ax] = d.wxx;
                if (n == 2) {
                    const auto& dm = nd[(l + ny - 1) % ny];
                    const auto& dp = nd[(l + 1) % ny];
                    tr.grad[id * n + pp] = (dp.w - dm.w) / (2.0 * k);
                    tr.grad_t[id * n + pp] = (dp.wt - dm.wt) / (2.0 * k);
                    const double wyy = (dp.w - 2.0 * d.w + dm.w) / (k * k);
                    const double wxy = (dp.wx - dm.wx) / (2.0 * k);
                    tr.hess[id * n * n + pp * n + pp] = wyy;
                    tr.hess[id * n * n + ax * n + pp] = wxy;
                    tr.hess[id * n * n + pp * n + ax] = wxy;
                }
            }
        }
    };
    fill(u, ts.u);
    fill(v, ts.v);
    return ts;
}

/// Default tau step: the multiple of h closest to 2 dt (at least h).
/// Multiple of h dividing T + 2 closest to 2 dt; falls back to h.
inline double default_dtau(const SpaceTimeGrid& g) {
    const long total = std::lround((g.T + 2.0) / g.h);
    const double target = 2.0 * g.dt / g.h;
    long best = 1;
    for (long k = 1; k <= total; ++k)
        if (total % k == 0 && std::abs(static_cast<double>(k) - target) < std::abs(static_cast<double>(best) - target))
            best = k;
    return g.h * static_cast<double>(best);
}

/// tau grid over [-1, T+1]; dtau must divide T + 2 and be a multiple of h.
inline std::vector<double> make_tau_grid(const SpaceTimeGrid& g, double dtau) {
    if (!(dtau > 0.0)) throw std::invalid_argument("dtau must be positive");
    if (!is_multiple(dtau, g.h)) throw std::invalid_argument("dtau must be a multiple of h");
    if (!is_multiple(g.T + 2.0, dtau)) throw std::invalid_argument("dtau must divide T + 2");
    if (!is_multiple(g.T + 1.0, g.h)) throw std::invalid_argument("T + 1 must be a multiple of h");
    const int count = static_cast<int>(std::lround((g.T + 2.0) / dtau));
    std::vector<double> taus(static_cast<std::size_t>(count) + 1);
    for (int m = 0; m <= count; ++m) taus[m] = -1.0 + m * dtau;
    return taus;
}

/// The data map: one TraceSet per (omega, tau), row index o * taus.size() + m.
struct PlaneWaveDataset {
    SpaceTimeGrid grid;
    std::vector<Direction> omegas;
    std::vector<double> taus;
    std::string coeff_hash;
    std::vector<TraceSet> rows;

    const TraceSet& row(std::size_t o, std::size_t m) const { return rows.at(o * taus.size() + m); }
    bool all_background() const {
        for (const auto& r : rows)
            if (!r.background) return false;
        return true;
    }
};

inline TraceSet forward_row(const CoefficientSet& cs, const SpaceTimeGrid& grid, Direction omega, double tau,
                            const ForwardOptions& opt = {}) {
    const auto sol = solve_uv(cs, grid, omega, tau, opt);
    return extract_traces(sol[0], sol[1], cs, grid);
}

inline PlaneWaveDataset forward_data(const CoefficientSet& cs, const std::vector<Direction>& omegas,
                                     const std::vector<double>& taus, const SpaceTimeGrid& grid, int threads = 1,
                                     const ForwardOptions& opt = {}) {
    for (const auto& o : omegas)
        if (!o.admissible(grid.n)) throw std::invalid_argument("direction " + o.label() + " not admissible");
    PlaneWaveDataset ds;
    ds.grid = grid;
    ds.omegas = omegas;
    ds.taus = taus;
    ds.rows.resize(omegas.size() * taus.size());
    parallel_for(ds.rows.size(), threads, [&](std::size_t id) {
        const Direction o = omegas[id / taus.size()];
        const double tau = taus[id % taus.size()];
        try {
            ds.rows[id] = forward_row(cs, grid, o, tau, opt);
        } catch (const std::exception& e) {
            throw std::runtime_error("omega " + o.label() + ", tau " + std::to_string(tau) + ": " + e.what());
        }
    });
    return ds;
}

}  // namespace wavetomo
