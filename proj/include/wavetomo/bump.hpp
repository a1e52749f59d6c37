#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace wavetomo {

/// Space-time point in fixed slots (x1, x2, t). One-dimensional media are
/// constant along x2.
using Point = std::array<double, 3>;
inline constexpr int kTime = 2;

/// Value, gradient and Hessian of a scalar at a point, packed flat so the
/// quadrature driver can integrate it directly.
///   [0] value, [1..3] d/dx1 d/dx2 d/dt, [4..9] symmetric second derivatives
///   ordered (11, 12, 1t, 22, 2t, tt).
using Jet = std::array<double, 10>;

constexpr int jet_d(int i) { return 1 + i; }
constexpr int jet_dd(int i, int j) {
    if (i > j) std::swap(i, j);
    constexpr int table[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
    return 4 + table[i][j];
}

inline Jet jet_zero() { return Jet{}; }

inline Jet jet_constant(double c) {
    Jet j{};
    j[0] = c;
    return j;
}

inline Jet jet_product(const Jet& f, const Jet& g) {
    Jet out{};
    out[0] = f[0] * g[0];
    for (int i = 0; i < 3; ++i) out[jet_d(i)] = f[jet_d(i)] * g[0] + f[0] * g[jet_d(i)];
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j)
            out[jet_dd(i, j)] = f[jet_dd(i, j)] * g[0] + f[jet_d(i)] * g[jet_d(j)] + f[jet_d(j)] * g[jet_d(i)] +
                                f[0] * g[jet_dd(i, j)];
    return out;
}

enum class Profile { smooth, poly };

inline Profile profile_from_string(const std::string& s) {
    if (s == "smooth") return Profile::smooth;
    if (s == "poly") return Profile::poly;
    throw std::invalid_argument("unknown bump profile: " + s);
}

inline const char* to_string(Profile p) { return p == Profile::smooth ? "smooth" : "poly"; }

inline constexpr int kMaxProfileOrder = 8;
using ProfileDerivs = std::array<double, kMaxProfileOrder + 1>;

namespace detail {

inline double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

// exp(1 - 1/(1-s^2)) and its derivatives. With p(s) = 1 - 1/(1-s^2),
//   p^(k)(s) = -k!/2 [ (1-s)^-(k+1) + (-1)^k (1+s)^-(k+1) ],
//   g^(n+1) = sum_k C(n,k) p^(k+1) g^(n-k).
inline ProfileDerivs smooth_profile(double s, int order) {
    ProfileDerivs g{};
    const double w = 1.0 - s * s;
    if (w <= 1.0 / 700.0) return g;
    g[0] = std::exp(1.0 - 1.0 / w);
    std::array<double, kMaxProfileOrder + 1> dp{};
    double fact = 1.0;
    const double im = 1.0 / (1.0 - s), ip = 1.0 / (1.0 + s);
    double pm = im, pp = ip;
    for (int k = 1; k <= order; ++k) {
        fact *= k;
        pm *= im;
        pp *= -ip;
        dp[k] = -0.5 * fact * (pm + pp);
    }
    for (int n = 0; n < order; ++n) {
        double acc = 0.0;
        for (int k = 0; k <= n; ++k) acc += binomial(n, k) * dp[k + 1] * g[n - k];
        g[n + 1] = acc;
    }
    return g;
}

// (1 - s^2)^6 expanded in powers of s and differentiated term by term.
inline ProfileDerivs poly_profile(double s, int order) {
    ProfileDerivs g{};
    if (std::abs(s) >= 1.0) return g;
    std::array<double, 13> c{};
    for (int k = 0; k <= 6; ++k) c[2 * k] = binomial(6, k) * ((k % 2) ? -1.0 : 1.0);
    for (int d = 0; d <= order; ++d) {
        double v = 0.0;
        for (int p = 12; p >= d; --p) {
            double coeff = c[p];
            for (int m = 0; m < d; ++m) coeff *= (p - m);
            v = v * s + coeff;
        }
        g[d] = v;
    }
    return g;
}

}  // namespace detail

inline ProfileDerivs profile_derivatives(Profile kind, double s, int order) {
    if (order > kMaxProfileOrder) throw std::invalid_argument("profile derivative order too high");
    return kind == Profile::smooth ? detail::smooth_profile(s, order) : detail::poly_profile(s, order);
}

/// Separable compactly supported bump
///   amplitude * prod_axis P((x_axis - center_axis) / radius_axis),
/// optionally differentiated by the multi-index `deriv`. An infinite radius
/// makes the bump constant along that axis.
struct Bump {
    Point center{};
    Point radius{1.0, std::numeric_limits<double>::infinity(), 1.0};
    double amplitude = 1.0;
    Profile profile = Profile::smooth;
    std::array<int, 3> deriv{};

    bool bounded(int axis) const { return std::isfinite(radius[axis]); }
    double lo(int axis) const { return center[axis] - radius[axis]; }
    double hi(int axis) const { return center[axis] + radius[axis]; }

    bool inside_support(const Point& p) const {
        for (int a = 0; a < 3; ++a)
            if (bounded(a) && std::abs(p[a] - center[a]) >= radius[a]) return false;
        return true;
    }

    /// Value plus first and second derivatives at p.
    Jet jet(const Point& p) const {
        Jet out{};
        if (amplitude == 0.0 || !inside_support(p)) return out;
        // factors[a][k] = d^(deriv[a]+k)/dx_a^(...) of the axis factor, k = 0..2
        std::array<std::array<double, 3>, 3> f{};
        for (int a = 0; a < 3; ++a) {
            if (!bounded(a)) {
                if (deriv[a] > 0) return out;
                f[a] = {1.0, 0.0, 0.0};
                continue;
            }
            const auto g = profile_derivatives(profile, (p[a] - center[a]) / radius[a], deriv[a] + 2);
            double scale = std::pow(radius[a], -deriv[a]);
            for (int k = 0; k < 3; ++k) {
                f[a][k] = g[deriv[a] + k] * scale;
                scale /= radius[a];
            }
        }
        out[0] = amplitude * f[0][0] * f[1][0] * f[2][0];
        for (int i = 0; i < 3; ++i) {
            double v = amplitude;
            for (int a = 0; a < 3; ++a) v *= f[a][a == i ? 1 : 0];
            out[jet_d(i)] = v;
            for (int j = i; j < 3; ++j) {
                double w = amplitude;
                for (int a = 0; a < 3; ++a) w *= f[a][(a == i) + (a == j)];
                out[jet_dd(i, j)] = w;
            }
        }
        return out;
    }

    double value(const Point& p) const {
        if (amplitude == 0.0 || !inside_support(p)) return 0.0;
        double v = amplitude;
        for (int a = 0; a < 3; ++a) {
            if (!bounded(a)) {
                if (deriv[a] > 0) return 0.0;
                continue;
            }
            const auto g = profile_derivatives(profile, (p[a] - center[a]) / radius[a], deriv[a]);
            v *= g[deriv[a]] * std::pow(radius[a], -deriv[a]);
        }
        return v;
    }

    Bump derivative(int axis) const {
        Bump b = *this;
        ++b.deriv[axis];
        return b;
    }
};

}  // namespace wavetomo
