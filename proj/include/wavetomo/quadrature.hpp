#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace wavetomo::quad {

/// Magnitude used by the adaptive error test. Overloaded for the vector-like
/// integrands (jets, std::array) so one driver serves every caller.
inline double magnitude(double v) { return std::abs(v); }

template <std::size_t N>
double magnitude(const std::array<double, N>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

template <class V>
V zero_like();

template <>
inline double zero_like<double>() { return 0.0; }

template <class V>
    requires requires(V v) { v.fill(0.0); }
V zero_like() {
    V v{};
    v.fill(0.0);
    return v;
}

template <std::size_t N>
std::array<double, N>& axpy(std::array<double, N>& acc, double w, const std::array<double, N>& x) {
    for (std::size_t i = 0; i < N; ++i) acc[i] += w * x[i];
    return acc;
}

inline double& axpy(double& acc, double w, double x) { return acc += w * x; }

template <class V>
V difference(const V& a, const V& b) {
    V d = a;
    axpy(d, -1.0, b);
    return d;
}

struct Tolerance {
    double rel = 1e-9;
    double abs = 1e-14;
    int max_depth = 18;
};

namespace detail {

template <class V>
struct KronrodPair {
    V kronrod;
    V gauss;
};

// G7-K15 on [a,b]. The Gauss nodes are the even-indexed Kronrod abscissae.
template <class V, class F>
KronrodPair<V> gk15(F&& f, double a, double b) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    using G = boost::math::quadrature::gauss<double, 7>;
    const auto& xk = GK::abscissa();
    const auto& wk = GK::weights();
    const auto& wg = G::weights();
    const double c = 0.5 * (a + b);
    const double hw = 0.5 * (b - a);

    KronrodPair<V> out{zero_like<V>(), zero_like<V>()};
    const V f0 = f(c);
    axpy(out.kronrod, wk[0], f0);
    axpy(out.gauss, wg[0], f0);
    for (std::size_t i = 1; i < xk.size(); ++i) {
        const V fp = f(c + hw * xk[i]);
        const V fm = f(c - hw * xk[i]);
        axpy(out.kronrod, wk[i], fp);
        axpy(out.kronrod, wk[i], fm);
        if (i % 2 == 0) {
            axpy(out.gauss, wg[i / 2], fp);
            axpy(out.gauss, wg[i / 2], fm);
        }
    }
    V k = zero_like<V>();
    axpy(k, hw, out.kronrod);
    V g = zero_like<V>();
    axpy(g, hw, out.gauss);
    return {k, g};
}

template <class V, class F>
V adaptive(F& f, double a, double b, double abs_tol, int depth) {
    auto pair = gk15<V>(f, a, b);
    const double err = magnitude(difference(pair.kronrod, pair.gauss));
    if (err <= abs_tol || depth <= 0 || b - a < 1e-14) return pair.kronrod;
    const double m = 0.5 * (a + b);
    V left = adaptive<V>(f, a, m, 0.5 * abs_tol, depth - 1);
    V right = adaptive<V>(f, m, b, 0.5 * abs_tol, depth - 1);
    axpy(left, 1.0, right);
    return left;
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (G7/K15) on [a,b] for scalar or array-valued
/// integrands. The absolute target is derived from a first coarse pass so the
/// relative tolerance applies to the integral as a whole.
template <class V, class F>
V integrate(F&& f, double a, double b, const Tolerance& tol = {}) {
    if (!(b > a)) return zero_like<V>();
    auto coarse = detail::gk15<V>(f, a, b);
    const double scale = magnitude(coarse.kronrod);
    const double abs_tol = std::max(tol.abs, tol.rel * scale);
    return detail::adaptive<V>(f, a, b, abs_tol, tol.max_depth);
}

/// Fixed composite Gauss-Legendre with `panels` equal panels and 8 nodes each.
template <class V, class F>
V composite_gauss(F&& f, double a, double b, int panels) {
    using G = boost::math::quadrature::gauss<double, 8>;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    V acc = zero_like<V>();
    if (!(b > a) || panels <= 0) return acc;
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double c = a + (p + 0.5) * width;
        const double hw = 0.5 * width;
        for (std::size_t i = 0; i < x.size(); ++i) {
            axpy(acc, w[i] * hw, f(c + hw * x[i]));
            axpy(acc, w[i] * hw, f(c - hw * x[i]));
        }
    }
    return acc;
}

/// Composite trapezoid with `panels` panels; used where a deliberately
/// low-order rule is wanted (refinement studies).
template <class V, class F>
V composite_trapezoid(F&& f, double a, double b, int panels) {
    V acc = zero_like<V>();
    if (!(b > a) || panels <= 0) return acc;
    const double width = (b - a) / panels;
    for (int p = 0; p <= panels; ++p) {
        const double w = (p == 0 || p == panels) ? 0.5 * width : width;
        axpy(acc, w, f(a + p * width));
    }
    return acc;
}

/// Nodes and weights of the 8-point Gauss-Legendre rule mapped to [a,b].
inline void gauss_nodes(double a, double b, std::vector<double>& nodes, std::vector<double>& weights) {
    using G = boost::math::quadrature::gauss<double, 8>;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    const double c = 0.5 * (a + b);
    const double hw = 0.5 * (b - a);
    for (std::size_t i = 0; i < x.size(); ++i) {
        nodes.push_back(c - hw * x[i]);
        weights.push_back(hw * w[i]);
        nodes.push_back(c + hw * x[i]);
        weights.push_back(hw * w[i]);
    }
}

/// Composite 8-point Gauss rule over [a,b] split into `panels`.
inline void composite_gauss_nodes(double a, double b, int panels, std::vector<double>& nodes,
                                  std::vector<double>& weights) {
    nodes.clear();
    weights.clear();
    if (!(b > a) || panels <= 0) return;
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) gauss_nodes(a + p * width, a + (p + 1) * width, nodes, weights);
}

}  // namespace wavetomo::quad
