#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace wavetomo {

/// Space-time dimension bound: at most two spatial axes plus time.
inline constexpr int kMaxSpace = 2;
inline constexpr int kMaxDim = kMaxSpace + 1;

/// Uniform space-time sampling of [x_min, x_max]^n x [0, T].
///
/// The spatial box always contains the closed unit ball plus a margin of at
/// least T + 2, so nothing radiated from the unit ball during [0, T] reaches
/// the box boundary before t = T.
struct SpaceTimeGrid {
    int n = 1;
    double x_min = -1.0;
    double x_max = 1.0;
    double T = 1.0;
    double h = 0.1;
    double dt = 0.09;
    int nx = 0;  // nodes per spatial axis, both ends included
    int nt = 0;  // time steps; nodes are t_k = k dt, k = 0..nt

    double x(int i) const { return x_min + i * h; }
    double t(int k) const { return k * dt; }
    /// Half-width of the spatial box in units of h.
    int half_count() const { return (nx - 1) / 2; }
    std::size_t spatial_size() const {
        std::size_t s = 1;
        for (int a = 0; a < n; ++a) s *= static_cast<std::size_t>(nx);
        return s;
    }
    std::size_t total_samples() const { return spatial_size() * static_cast<std::size_t>(nt + 1); }

    bool operator==(const SpaceTimeGrid&) const = default;
};

inline void to_json(nlohmann::json& j, const SpaceTimeGrid& g) {
    j = nlohmann::json{{"n", g.n},   {"x_min", g.x_min}, {"x_max", g.x_max}, {"T", g.T},
                       {"h", g.h},   {"dt", g.dt},       {"nx", g.nx},       {"nt", g.nt}};
}

inline void from_json(const nlohmann::json& j, SpaceTimeGrid& g) {
    j.at("n").get_to(g.n);
    j.at("x_min").get_to(g.x_min);
    j.at("x_max").get_to(g.x_max);
    j.at("T").get_to(g.T);
    j.at("h").get_to(g.h);
    j.at("dt").get_to(g.dt);
    j.at("nx").get_to(g.nx);
    j.at("nt").get_to(g.nt);
}

inline constexpr double kMaxGridSamples = 1e8;

/// Builds the grid for dimension n, final time T, spatial step h and margin.
/// dt is the largest value not exceeding 0.9 h / sqrt(n) that divides T.
inline SpaceTimeGrid make_grid(int n, double T, double h, double margin) {
    if (n != 1 && n != 2) throw std::invalid_argument("unsupported dimension: n = " + std::to_string(n));
    if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
    if (!(h > 0.0)) throw std::invalid_argument("h must be positive");
    if (margin < T + 2.0 - 1e-12) throw std::invalid_argument("margin must be at least T + 2");

    SpaceTimeGrid g;
    g.n = n;
    g.T = T;
    g.h = h;
    const auto half = static_cast<long long>(std::ceil((1.0 + margin) / h - 1e-9));
    g.x_max = static_cast<double>(half) * h;
    g.x_min = -g.x_max;
    const double nx = 2.0 * static_cast<double>(half) + 1.0;
    const double dt_cap = 0.9 * h / std::sqrt(static_cast<double>(n));
    const double nt = std::ceil(T / dt_cap - 1e-12);
    if (std::pow(nx, n) * (nt + 1.0) > kMaxGridSamples)
        throw std::invalid_argument("grid too large: more than 1e8 space-time samples");
    g.nx = static_cast<int>(nx);
    g.nt = static_cast<int>(nt);
    g.dt = T / nt;
    return g;
}

/// Unit vector restricted to the signed coordinate axes.
struct Direction {
    int axis = 0;
    int sign = 1;

    double component(int i) const { return i == axis ? static_cast<double>(sign) : 0.0; }
    bool admissible(int n) const { return axis >= 0 && axis < n && (sign == 1 || sign == -1); }
    std::string label() const { return (sign > 0 ? "+e" : "-e") + std::to_string(axis + 1); }

    bool operator==(const Direction&) const = default;
};

inline void to_json(nlohmann::json& j, const Direction& d) { j = nlohmann::json{{"axis", d.axis}, {"sign", d.sign}}; }
inline void from_json(const nlohmann::json& j, Direction& d) {
    j.at("axis").get_to(d.axis);
    j.at("sign").get_to(d.sign);
}

/// Directions {e^1,...,e^{n-1}, +e^n, -e^n} used by the curl/c problem.
inline std::vector<Direction> curl_directions(int n) {
    std::vector<Direction> out;
    for (int i = 0; i + 1 < n; ++i) out.push_back({i, 1});
    out.push_back({n - 1, 1});
    out.push_back({n - 1, -1});
    return out;
}

/// Directions {-e^n, e^1,...,e^n} used by the (a,b) problem.
inline std::vector<Direction> ab_directions(int n) {
    std::vector<Direction> out{{n - 1, -1}};
    for (int i = 0; i < n; ++i) out.push_back({i, 1});
    return out;
}

enum class WedgeLabel : std::uint8_t { outside, interior, on_h, on_l, corner };

/// Q = {tau + x.omega <= t <= T} sampled on a grid, with H (t = T) and the
/// characteristic face L (t = tau + x.omega) labelled separately.
struct Wedge {
    Direction omega;
    double tau = 0.0;
    double T = 1.0;
    std::vector<WedgeLabel> labels;  // index: spatial node (row-major over axes) * (nt+1) + k

    std::size_t count(WedgeLabel l) const {
        std::size_t c = 0;
        for (auto v : labels) c += (v == l);
        return c;
    }
};

/// Spatial multi-index of a flat node id (axis 0 fastest).
inline std::array<int, kMaxSpace> unflatten(const SpaceTimeGrid& g, std::size_t id) {
    std::array<int, kMaxSpace> idx{};
    for (int a = 0; a < g.n; ++a) {
        idx[a] = static_cast<int>(id % static_cast<std::size_t>(g.nx));
        id /= static_cast<std::size_t>(g.nx);
    }
    return idx;
}

inline Wedge classify_wedge(const SpaceTimeGrid& g, Direction omega, double tau) {
    if (!omega.admissible(g.n)) throw std::invalid_argument("direction not admissible for this grid");
    if (tau < -1.0 - 1e-12 || tau > g.T + 1.0 + 1e-12) throw std::invalid_argument("tau outside [-1, T+1]");
    Wedge w{omega, tau, g.T, {}};
    const std::size_t ns = g.spatial_size();
    w.labels.resize(ns * static_cast<std::size_t>(g.nt + 1));
    const double half_dt = 0.5 * g.dt;
    for (std::size_t id = 0; id < ns; ++id) {
        const auto idx = unflatten(g, id);
        const double xw = omega.sign * g.x(idx[omega.axis]);
        for (int k = 0; k <= g.nt; ++k) {
            const double r = g.t(k) - tau - xw;
            const bool top = (k == g.nt);
            WedgeLabel l = WedgeLabel::outside;
            if (std::abs(r) < half_dt)
                l = top ? WedgeLabel::corner : WedgeLabel::on_l;
            else if (r > 0.0)
                l = top ? WedgeLabel::on_h : WedgeLabel::interior;
            w.labels[id * static_cast<std::size_t>(g.nt + 1) + static_cast<std::size_t>(k)] = l;
        }
    }
    return w;
}

/// Norm selector. Weighted norms follow
///   |w|_{1,M,s}^2 = int_M e^{2 s t} (|grad_M w|^2 + s^2 w^2),
///   |w|_{0,M,s}^2 = int_M e^{2 s t} w^2.
/// `standard` selects the unweighted Sobolev norms (w^2 + |grad w|^2 [+ |hess w|^2]);
/// order 2 is always standard.
struct NormParams {
    double sigma = 0.0;
    int order = 0;
    bool standard = false;
};

/// Samples of a field on a region M of manifold dimension `dim`, with the
/// tangential derivatives the requested order needs.
struct RegionSamples {
    int dim = 1;
    std::span<const double> values;
    std::span<const double> grad;  // dim entries per sample
    std::span<const double> hess;  // dim*dim entries per sample
    std::span<const double> t;     // time coordinate per sample (weight e^{2 s t}); may be empty if sigma = 0
    std::span<const double> weights;  // quadrature weights (surface measure included)
};

inline double weighted_norm_squared(const RegionSamples& s, const NormParams& p) {
    if (p.order < 0 || p.order > 2) throw std::invalid_argument("norm order must be 0, 1 or 2");
    if (p.sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
    if (p.order >= 1 && s.dim == 0) throw std::invalid_argument("order >= 1 norm on a 0-dimensional region");
    if (p.order == 2 && p.sigma != 0.0) throw std::invalid_argument("order-2 norms are unweighted");
    const std::size_t n = s.values.size();
    if (s.weights.size() != n) throw std::invalid_argument("weights/values size mismatch");
    const auto d = static_cast<std::size_t>(s.dim);
    if (p.order >= 1 && s.grad.size() != n * d) throw std::invalid_argument("gradient samples missing");
    if (p.order == 2 && s.hess.size() != n * d * d) throw std::invalid_argument("hessian samples missing");
    const bool weighted = p.sigma != 0.0;
    if (weighted && s.t.size() != n) throw std::invalid_argument("time samples missing for weighted norm");

    const double s2 = p.sigma * p.sigma;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = s.values[i];
        double integrand = 0.0;
        if (p.order == 0) {
            integrand = w * w;
        } else {
            double g2 = 0.0;
            for (std::size_t a = 0; a < d; ++a) g2 += s.grad[i * d + a] * s.grad[i * d + a];
            integrand = (p.standard || p.order == 2) ? (w * w + g2) : (g2 + s2 * w * w);
            if (p.order == 2)
                for (std::size_t a = 0; a < d * d; ++a) integrand += s.hess[i * d * d + a] * s.hess[i * d * d + a];
        }
        if (weighted) integrand *= std::exp(2.0 * p.sigma * s.t[i]);
        acc += s.weights[i] * integrand;
    }
    return acc;
}

inline double weighted_norm(const RegionSamples& s, const NormParams& p) {
    return std::sqrt(weighted_norm_squared(s, p));
}

/// Composite trapezoid weights for `count` equispaced nodes; periodic rows get
/// uniform weights.
inline std::vector<double> trapezoid_weights(int count, double spacing, bool periodic = false) {
    std::vector<double> w(static_cast<std::size_t>(std::max(count, 0)), spacing);
    if (!periodic && count >= 2) {
        w.front() *= 0.5;
        w.back() *= 0.5;
    }
    if (!periodic && count == 1) w.front() = 0.0;
    return w;
}

/// Tensor product of two 1D weight vectors, first index fastest.
inline std::vector<double> tensor_weights(const std::vector<double>& fast, const std::vector<double>& slow) {
    std::vector<double> w;
    w.reserve(fast.size() * slow.size());
    for (double ws : slow)
        for (double wf : fast) w.push_back(wf * ws);
    return w;
}

}  // namespace wavetomo
