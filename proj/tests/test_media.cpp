#include <algorithm>
#include <cmath>
#include <utility>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "support.hpp"
#include "wavetomo/media.hpp"
#include "wavetomo/psi.hpp"

using namespace wavetomo;
using namespace wt_test;

namespace {

/// Antiderivative of (1 - s^2)^6 vanishing at s = -1.
double poly_antiderivative(double u) {
    u = std::clamp(u, -1.0, 1.0);
    auto G = [](double s) {
        double acc = 0.0;
        const double binom[7] = {1, 6, 15, 20, 15, 6, 1};
        for (int k = 0; k <= 6; ++k) acc += binom[k] * ((k % 2) ? -1.0 : 1.0) * std::pow(s, 2 * k + 1) / (2 * k + 1);
        return acc;
    };
    return G(u) - G(-1.0);
}

/// Parameter window of the ray p + s d, s <= 0, inside [-1,1] x [0,1], where
/// the test media live; oracles integrate over it so no rule can skip the support.
std::pair<double, double> ray_window(const Point& p, const Point& d) {
    double lo = -p[kTime], hi = std::min(0.0, 1.0 - p[kTime]);
    const double s1 = (-1.0 - p[0]) / d[0], s2 = (1.0 - p[0]) / d[0];
    lo = std::max(lo, std::min(s1, s2));
    hi = std::min(hi, std::max(s1, s2));
    return {lo, std::max(lo, hi)};
}

std::vector<Point> probe_points() {
    std::vector<Point> pts;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(-1.5, 1.5), ut(0.0, 1.2);
    for (int i = 0; i < 40; ++i) pts.push_back({ux(rng), 0.0, ut(rng)});
    return pts;
}

}  // namespace

TEST(Bump, JetMatchesFiniteDifferences) {
    for (Profile pr : {Profile::smooth, Profile::poly}) {
        const Bump b = bump2(0.1, -0.2, 0.5, 0.6, 0.3, 1.7, pr);
        for (const Point& p : {Point{0.2, -0.1, 0.55}, Point{-0.3, 0.1, 0.4}, Point{0.5, -0.4, 0.7}}) {
            const Jet j = b.jet(p);
            EXPECT_DOUBLE_EQ(j[0], b.value(p));
            for (int a = 0; a < 3; ++a) {
                const double fd = central([&](const Point& q) { return b.value(q); }, p, a);
                EXPECT_NEAR(j[jet_d(a)], fd, 1e-7 * (1.0 + std::abs(fd)));
                for (int c = 0; c < 3; ++c) {
                    const double fd2 = central([&](const Point& q) { return b.jet(q)[jet_d(c)]; }, p, a);
                    EXPECT_NEAR(j[jet_dd(a, c)], fd2, 1e-6 * (1.0 + std::abs(fd2)));
                }
            }
        }
    }
}

TEST(Bump, VanishesOutsideItsSupport) {
    const Bump b = bump1(0.0, 0.5, 0.5, 0.25, 1.0);
    EXPECT_EQ(b.value({0.5, 0.0, 0.5}), 0.0);
    EXPECT_EQ(b.value({0.0, 0.0, 0.25}), 0.0);
    EXPECT_LT(std::abs(b.value({0.4999999, 0.0, 0.5})), 1e-12);
    EXPECT_GT(b.value({0.0, 0.0, 0.5}), 0.0);
}

TEST(Media, ZeroMediumHasZeroQ) {
    const auto cs = zero_medium();
    for (const auto& p : probe_points()) EXPECT_EQ(compute_q(cs, p), 0.0);
}

TEST(Media, QEqualsCWhenFirstOrderTermsVanish) {
    const auto cs = c_medium(bump1(0.1, 0.5, 0.6, 0.3, 0.9));
    for (const auto& p : probe_points()) EXPECT_EQ(compute_q(cs, p), cs.zeroth.value(p));
}

TEST(Media, QFormulaAgainstFiniteDifferences) {
    auto cs = mixed_medium();
    for (const auto& p : probe_points()) {
        const double a = cs.a.value(p), b = cs.b[0].value(p), c = cs.zeroth.value(p);
        const double at = central([&](const Point& q) { return cs.a.value(q); }, p, kTime);
        const double bx = central([&](const Point& q) { return cs.b[0].value(q); }, p, 0);
        EXPECT_NEAR(compute_q(cs, p), c - at + bx + a * a - b * b, 1e-7);
    }
    // single a bump: q = -a_t + a^2
    CoefficientSet only_a = zero_medium();
    only_a.a.bumps.push_back(bump1(0.0, 0.5, 0.5, 0.3, 0.7));
    for (const auto& p : probe_points()) {
        const double a = only_a.a.value(p);
        const double at = central([&](const Point& q) { return only_a.a.value(q); }, p, kTime);
        EXPECT_NEAR(compute_q(only_a, p), -at + a * a, 1e-7);
    }
}

TEST(Media, ZerothGivenThroughQRoundTripsToC) {
    auto cs = mixed_medium();
    CoefficientSet viaq = cs;
    viaq.zeroth_kind = Zeroth::q;
    for (const auto& p : probe_points()) {
        // a medium given through q = c of cs has c = q + a_t - b_x - a^2 + b^2
        const double expect = cs.zeroth.value(p) + cs.a.jet(p)[jet_d(kTime)] - cs.b[0].jet(p)[jet_d(0)] -
                               std::pow(cs.a.value(p), 2) + std::pow(cs.b[0].value(p), 2);
        EXPECT_NEAR(viaq.c(p), expect, 1e-14);
        EXPECT_NEAR(viaq.q(p), cs.zeroth.value(p), 1e-14);
    }
}

TEST(Alpha, TrivialForZeroMedium) {
    const auto pts = probe_points();
    for (double v : compute_alpha(zero_medium(), {0, 1}, pts)) EXPECT_EQ(v, 1.0);
}

TEST(Alpha, TimeOnlyCoefficientMatchesClosedForm) {
    const double A = 0.8, ct = 0.5, rt = 0.3;
    CoefficientSet cs = zero_medium();
    Bump g = bump1(0.0, ct, 1.0, rt, A, Profile::poly);
    g.radius[0] = kInf;
    cs.a.bumps.push_back(g);
    const auto pts = probe_points();
    for (Direction w : {Direction{0, 1}, Direction{0, -1}}) {
        const auto alpha = compute_alpha(cs, w, pts);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double exact = std::exp(A * rt * poly_antiderivative((pts[i][kTime] - ct) / rt));
            EXPECT_NEAR(alpha[i], exact, 1e-6 * exact) << "t = " << pts[i][kTime];
        }
    }
}

TEST(Alpha, TransportIdentityFromAnalyticJet) {
    const auto cs = mixed_medium();
    for (Direction w : {Direction{0, 1}, Direction{0, -1}}) {
        const Field m = incoming_rate(cs, w);
        for (const auto& p : probe_points()) {
            const Jet I = alpha_log_jet(cs, w, p);
            const double res = I[jet_d(kTime)] + w.sign * I[jet_d(0)] - m.value(p);
            EXPECT_LT(std::abs(res), 1e-6);
        }
    }
}

TEST(Alpha, TransportIdentityFromFiniteDifferenceSamples) {
    const auto cs = mixed_medium();
    for (Direction w : {Direction{0, 1}, Direction{0, -1}}) {
        const Field m = incoming_rate(cs, w);
        for (const auto& p : probe_points()) {
            const double eps = 1e-4;
            const Point pp{p[0] + w.sign * eps, 0.0, p[kTime] + eps};
            const Point pm{p[0] - w.sign * eps, 0.0, p[kTime] - eps};
            const auto al = compute_alpha(cs, w, {pp, p, pm});
            const double dal = (al[0] - al[2]) / (2.0 * eps);
            EXPECT_NEAR(dal - m.value(p) * al[1], 0.0, 1e-6);
        }
    }
}

TEST(Alpha, TransportResidualConvergesUnderQuadratureRefinement) {
    // residual of d/dl int m along the ray, with the derivative integrated by a
    // composite rule of N panels, against m at the end point
    const auto cs = mixed_medium();
    const Direction w{0, 1};
    const Field m = incoming_rate(cs, w);
    const Point d = line_step(w.axis, w.sign);
    const Point p{0.3, 0.0, 0.8};
    const double s_lo = -(p[kTime] - m.t_lo() + 2.0);
    auto residual = [&](int panels) {
        const double integral = quad::composite_gauss<double>(
            [&](double s) {
                const Jet j = m.jet(shifted(p, d, s));
                return j[jet_d(kTime)] + w.sign * j[jet_d(0)];
            },
            s_lo, 0.0, panels);
        return std::abs(integral - m.value(p));
    };
    const double r1 = residual(2), r2 = residual(4), r3 = residual(8);
    ASSERT_GT(r1, 0.0);
    EXPECT_GE(std::log2(r1 / r2), 2.0 - 1e-9);
    if (r3 > 1e-13) {
        EXPECT_GE(std::log2(r2 / r3), 2.0 - 1e-9);
    }
}

TEST(Alpha, PositiveWithL1LowerBound) {
    const auto cs = mixed_medium();
    const Direction w{0, 1};
    const Field m = incoming_rate(cs, w);
    const Point d = line_step(w.axis, w.sign);
    for (const auto& p : probe_points()) {
        const auto [lo, hi] = ray_window(p, d);
        const double l1 = quad::composite_gauss<double>([&](double s) { return std::abs(m.value(shifted(p, d, s))); },
                                                        lo, hi, 64);
        const double alpha = compute_alpha(cs, w, {p})[0];
        EXPECT_GT(alpha, 0.0);
        EXPECT_GE(alpha, std::exp(-l1) * (1.0 - 1e-9));
    }
}

TEST(Alpha, LineIntegralAgreesWithTanhSinh) {
    const auto cs = mixed_medium();
    const Direction w{0, -1};
    const Field m = incoming_rate(cs, w);
    const Point d = line_step(w.axis, w.sign);
    boost::math::quadrature::tanh_sinh<double> ts;
    for (const auto& p : probe_points()) {
        const auto [lo, hi] = ray_window(p, d);
        const double oracle = hi > lo ? ts.integrate([&](double s) { return m.value(shifted(p, d, s)); }, lo, hi) : 0.0;
        EXPECT_NEAR(std::log(compute_alpha(cs, w, {p})[0]), oracle, 1e-9);
    }
}

TEST(Gauge, ZeroPhiIsIdentity) {
    const auto cs = mixed_medium();
    const auto g = apply_gauge(cs, Field{});
    for (const auto& p : probe_points()) {
        EXPECT_EQ(g.a.value(p), cs.a.value(p));
        EXPECT_EQ(g.b[0].value(p), cs.b[0].value(p));
        EXPECT_EQ(g.c(p), cs.c(p));
    }
}

TEST(Gauge, CurlAndCAreInvariant) {
    const auto cs = mixed_medium();
    const Field phi = field_of({bump1(0.2, 0.4, 0.7, 0.4, 0.6), bump1(-0.3, 0.6, 0.5, 0.3, -0.4, Profile::poly)});
    const auto g = apply_gauge(cs, phi);
    for (const auto& p : probe_points()) {
        const auto f1 = curl_eta(cs, p), f2 = curl_eta(g, p);
        EXPECT_NEAR(f1[0][kTime], f2[0][kTime], 1e-10);
        EXPECT_NEAR(f1[kTime][0], -f1[0][kTime], 0.0);
        EXPECT_EQ(g.c(p), cs.c(p));
    }
    // an exact form has zero curl
    CoefficientSet exact = zero_medium();
    exact = apply_gauge(exact, phi);
    for (const auto& p : probe_points()) EXPECT_NEAR(curl_eta(exact, p)[0][kTime], 0.0, 1e-10);
}

TEST(Gauge, CurlIsInvariantInTwoDimensions) {
    CoefficientSet cs = zero_medium(2);
    cs.a.bumps.push_back(bump2(0.1, 0.0, 0.5, 0.5, 0.3, 0.4));
    cs.b[0].bumps.push_back(bump2(-0.2, 0.2, 0.5, 0.5, 0.3, 0.3));
    cs.b[1].bumps.push_back(bump2(0.0, -0.2, 0.4, 0.6, 0.3, -0.2));
    const Field phi = field_of({bump2(0.0, 0.1, 0.5, 0.6, 0.4, 0.5)});
    const auto g = apply_gauge(cs, phi);
    for (const Point& p : {Point{0.1, 0.1, 0.5}, Point{-0.2, 0.3, 0.4}, Point{0.3, -0.2, 0.6}}) {
        const auto f1 = curl_eta(cs, p), f2 = curl_eta(g, p);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                EXPECT_NEAR(f1[i][j], f2[i][j], 1e-10);
                EXPECT_NEAR(f1[i][j], -f1[j][i], 1e-15);
            }
    }
}

TEST(Gauge, QTransformsBySymbolicExpansion) {
    const auto cs = mixed_medium();
    const Field phi = field_of({bump1(0.2, 0.4, 0.7, 0.4, 0.6)});
    const auto g = apply_gauge(cs, phi);
    for (const auto& p : probe_points()) {
        const Jet f = phi.jet(p);
        const double a = cs.a.value(p), b = cs.b[0].value(p);
        const double ft = f[jet_d(kTime)], fx = f[jet_d(0)];
        const double expect = -f[jet_dd(kTime, kTime)] + f[jet_dd(0, 0)] + 2.0 * a * ft + ft * ft - 2.0 * b * fx - fx * fx;
        EXPECT_NEAR(compute_q(g, p) - compute_q(cs, p), expect, 1e-12);
    }
}

TEST(Gauge, PhiVanishesWhenRateIsZero) {
    CoefficientSet cs = zero_medium();
    const Bump b = bump1(0.0, 0.5, 0.5, 0.3, 0.4);
    cs.b[0].bumps.push_back(b);
    Bump na = b;
    na.amplitude = -0.4;
    cs.a.bumps.push_back(na);
    const auto g = gauge_phi(cs);
    for (const auto& p : probe_points()) EXPECT_NEAR(g.phi.value(p), 0.0, 1e-15);
}

TEST(Gauge, PhiNormalizesTheMedium) {
    for (const auto& cs : {mixed_medium(), [] {
             CoefficientSet s = zero_medium();
             s.a.bumps.push_back(bump1(0.1, 0.5, 0.5, 0.3, 0.6));
             return s;
         }()}) {
        const auto g = gauge_phi(cs);
        const auto gauged = apply_gauge(cs, g.phi);
        const Field m = incoming_rate(gauged, {0, 1});
        const auto grid = grid1(0.05);
        for (int i = 0; i < grid.nx; i += 3)
            for (int k = 0; k <= grid.nt; k += 2) {
                const Point p{grid.x(i), 0.0, grid.t(k)};
                if (std::abs(p[0]) > 3.0) continue;
                EXPECT_LT(std::abs(m.value(p)), 1e-6) << p[0] << " " << p[kTime];
            }
        // phi agrees with an independent line quadrature of -(a + b)
        const Field rate = incoming_rate(cs, {0, 1});
        for (const auto& p : probe_points()) {
            const auto [lo, hi] = ray_window(p, {1.0, 0.0, 1.0});
            const double oracle = hi > lo ? -boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                                                [&](double s) { return rate.value({p[0] + s, 0.0, p[kTime] + s}); }, lo,
                                                hi, 15, 1e-12)
                                          : 0.0;
            EXPECT_NEAR(g.phi.value(p), oracle, 1e-8);
        }
    }
}

TEST(Gauge, FinalLineIntegralAgreesWithSecondRule) {
    const auto cs = mixed_medium();
    const Field rate = incoming_rate(cs, {0, 1});
    boost::math::quadrature::tanh_sinh<double> ts;
    const double T = 1.0;
    for (double x : {-1.4, -0.7, -0.2, 0.0, 0.3, 0.9}) {
        const auto [lo, hi] = ray_window({x + T, 0.0, T}, {1.0, 0.0, 1.0});
        const double oracle =
            hi > lo ? ts.integrate([&](double s) { return rate.value({x + T + s, 0.0, T + s}); }, lo, hi) : 0.0;
        EXPECT_NEAR(final_line_integral(cs, {x, 0.0, 0.0}, T), oracle, 1e-8);
        // the same quantity read off the normalizing gauge at (x + T e, T)
        EXPECT_NEAR(final_line_integral(cs, {x, 0.0, 0.0}, T), -gauge_phi(cs).phi.value({x + T, 0.0, T}), 1e-8);
    }
}

TEST(Gauge, EndConditionFlags) {
    const auto grid = grid1(0.05);
    GaugeFunction early{field_of({bump1(0.0, 0.4, 0.5, 0.3, 1.0)})};
    check_end_conditions(early, grid);
    EXPECT_TRUE(early.vanishes_at_T);
    EXPECT_TRUE(early.dt_vanishes_at_T);
    GaugeFunction late{field_of({bump1(0.0, 0.9, 0.5, 0.3, 1.0)})};
    check_end_conditions(late, grid);
    EXPECT_FALSE(late.vanishes_at_T);
}

TEST(NewLAlpha, AgreesWithDirectEvaluationOnNormalizedMedia) {
    CoefficientSet cs = zero_medium();
    cs.a.bumps.push_back(bump1(-0.2, 0.45, 0.5, 0.3, 0.3));
    cs.b[0].bumps.push_back(bump1(0.25, 0.55, 0.45, 0.3, -0.25));
    cs.zeroth = cs.a.derivative(kTime) + cs.b[0].derivative(0).scaled(-1.0);
    const auto grid = grid1(0.05);
    for (Direction w : {Direction{0, 1}, Direction{0, -1}})
        for (double tau : {-0.6, 0.0, 0.4}) {
            for (int i = 0; i < grid.nx; ++i) {
                const double x = grid.x(i), t = tau + w.sign * x;
                if (t < 0.0 || t > grid.T) continue;
                const Point p{x, 0.0, t};
                const Jet I = alpha_log_jet(cs, w, p);
                EXPECT_NEAR(l_alpha(cs, p, I), l_alpha_normalized(cs, w, p, I), 1e-6);
            }
        }
}

TEST(NewLAlpha, TwoDimensionalNormalizedMedium) {
    CoefficientSet cs = zero_medium(2);
    cs.a.bumps.push_back(bump2(0.1, 0.0, 0.5, 0.5, 0.3, 0.3));
    cs.b[0].bumps.push_back(bump2(-0.2, 0.2, 0.5, 0.5, 0.3, 0.2));
    cs.b[1].bumps.push_back(bump2(0.0, -0.2, 0.4, 0.6, 0.3, -0.2));
    cs.zeroth = cs.a.derivative(kTime) + cs.b[0].derivative(0).scaled(-1.0) + cs.b[1].derivative(1).scaled(-1.0);
    for (Direction w : {Direction{0, 1}, Direction{1, -1}})
        for (double y : {-0.3, 0.0, 0.2})
            for (double s : {-0.5, -0.1, 0.2, 0.4}) {
                Point p{};
                p[w.axis] = s;
                p[1 - w.axis] = y;
                p[kTime] = 0.1 + w.sign * s;
                if (p[kTime] < 0.0 || p[kTime] > 1.0) continue;
                const Jet I = alpha_log_jet(cs, w, p);
                EXPECT_NEAR(l_alpha(cs, p, I), l_alpha_normalized(cs, w, p, I), 1e-6);
            }
}

TEST(Support, ValidationRejectsEscapingBumps) {
    EXPECT_NO_THROW(validate_support(c_medium(bump1(0.5, 0.5, 0.5, 0.5, 1.0)), 1.0));
    EXPECT_THROW(validate_support(c_medium(bump1(0.6, 0.5, 0.5, 0.3, 1.0)), 1.0), std::invalid_argument);
    EXPECT_THROW(validate_support(c_medium(bump1(0.0, 0.8, 0.5, 0.3, 1.0)), 1.0), std::invalid_argument);
    EXPECT_THROW(validate_support(c_medium(bump2(0.5, 0.5, 0.5, 0.4, 0.3, 1.0), 2), 1.0), std::invalid_argument);
}

TEST(Psi, ZeroSourceGivesZero) {
    const auto grid = grid1(0.05);
    for (auto method : {PsiMethod::quadrature, PsiMethod::leapfrog}) {
        const auto p = solve_psi(zero_medium(), grid, method);
        for (double v : p.val) EXPECT_EQ(v, 0.0);
        CoefficientSet slice = zero_medium();
        slice.a.bumps.push_back(bump1(0.0, 0.5, 0.5, 0.3, 0.4));
        slice.b[0].bumps.push_back(bump1(0.1, 0.5, 0.5, 0.3, 0.2));
        slice.zeroth = slice.a.derivative(kTime) + slice.b[0].derivative(0).scaled(-1.0);
        const auto q = solve_psi(slice, grid, method);
        for (std::size_t i = 0; i < q.size(); ++i) {
            EXPECT_NEAR(q.val[i], 0.0, 1e-12);
            EXPECT_NEAR(q.t[i], 0.0, 1e-12);
        }
    }
}

TEST(Psi, PointValueMatchesNestedGaussKronrod) {
    const auto cs = c_medium(bump1(0.1, 0.4, 0.5, 0.3, 1.0));
    using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
    for (double x : {-0.8, 0.0, 0.4, 1.2}) {
        const double t = 1.0;
        const double oracle = 0.5 * GK::integrate(
                                        [&](double s) {
                                            return GK::integrate([&](double y) { return cs.zeroth.value({y, 0.0, s}); },
                                                                 x - (t - s), x + (t - s), 15, 1e-12);
                                        },
                                        0.0, t, 15, 1e-12);
        EXPECT_NEAR(psi_point_1d(cs, x, t)[0], oracle, 1e-9);
    }
}

TEST(Psi, LeapfrogAgreesWithQuadratureAtSecondOrder) {
    const auto cs = mixed_medium();
    std::vector<double> err;
    for (double h : {0.04, 0.02, 0.01}) {
        const auto g = grid1(h);
        const auto a = solve_psi(cs, g, PsiMethod::quadrature);
        const auto b = solve_psi(cs, g, PsiMethod::leapfrog);
        err.push_back(max_abs_diff(a.val, b.val));
    }
    EXPECT_NEAR(std::log2(err[0] / err[1]), 2.0, 0.3);
    EXPECT_NEAR(std::log2(err[1] / err[2]), 2.0, 0.3);
}

TEST(Psi, SolutionIsLinearInTheSource) {
    const auto g = grid1(0.05);
    const auto c1 = c_medium(bump1(0.1, 0.4, 0.5, 0.3, 1.0));
    CoefficientSet c2 = zero_medium();
    c2.b[0].bumps.push_back(bump1(-0.2, 0.6, 0.5, 0.3, 0.5));
    CoefficientSet both = c1;
    both.b = c2.b;
    for (auto method : {PsiMethod::quadrature, PsiMethod::leapfrog}) {
        const auto p1 = solve_psi(c1, g, method), p2 = solve_psi(c2, g, method), p12 = solve_psi(both, g, method);
        for (std::size_t i = 0; i < p12.size(); ++i) {
            EXPECT_NEAR(p12.val[i], p1.val[i] + p2.val[i], 1e-8);
            EXPECT_NEAR(p12.t[i], p1.t[i] + p2.t[i], 1e-8);
        }
    }
}

TEST(Psi, LeapfrogRejectsCflViolation) {
    auto g = grid1(0.05);
    g.dt = 1.5 * g.h;
    g.nt = static_cast<int>(std::ceil(g.T / g.dt));
    EXPECT_THROW(solve_psi_leapfrog(c_medium(bump1(0.0, 0.5, 0.5, 0.3, 1.0)), g), NumericalError);
}
