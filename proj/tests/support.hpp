#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "wavetomo/forward.hpp"
#include "wavetomo/geometry.hpp"
#include "wavetomo/media.hpp"

namespace wt_test {

using namespace wavetomo;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline Bump bump1(double cx, double ct, double rx, double rt, double amp, Profile pr = Profile::smooth) {
    Bump b;
    b.center = {cx, 0.0, ct};
    b.radius = {rx, kInf, rt};
    b.amplitude = amp;
    b.profile = pr;
    return b;
}

inline Bump bump2(double cx, double cy, double ct, double rx, double rt, double amp, Profile pr = Profile::smooth) {
    Bump b;
    b.center = {cx, cy, ct};
    b.radius = {rx, rx, rt};
    b.amplitude = amp;
    b.profile = pr;
    return b;
}

inline Field field_of(std::initializer_list<Bump> bs) {
    Field f;
    for (const auto& b : bs) f.bumps.push_back(b);
    return f;
}

inline CoefficientSet zero_medium(int n = 1) {
    CoefficientSet cs;
    cs.n = n;
    return cs;
}

inline CoefficientSet c_medium(const Bump& c, int n = 1) {
    CoefficientSet cs = zero_medium(n);
    cs.zeroth.bumps.push_back(c);
    return cs;
}

/// a, b and c all nonzero, given through c.
inline CoefficientSet mixed_medium() {
    CoefficientSet cs = zero_medium(1);
    cs.a.bumps.push_back(bump1(-0.2, 0.45, 0.5, 0.3, 0.3, Profile::poly));
    cs.b[0].bumps.push_back(bump1(0.25, 0.55, 0.45, 0.3, -0.25, Profile::poly));
    cs.zeroth.bumps.push_back(bump1(0.0, 0.5, 0.6, 0.35, 0.8, Profile::poly));
    return cs;
}

inline SpaceTimeGrid grid1(double h, double T = 1.0) { return make_grid(1, T, h, T + 2.0); }

/// Centered first difference of f along `axis` of a space-time point.
template <class F>
double central(F&& f, Point p, int axis, double eps = 1e-5) {
    Point a = p, b = p;
    a[axis] += eps;
    b[axis] -= eps;
    return (f(a) - f(b)) / (2.0 * eps);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace wt_test
