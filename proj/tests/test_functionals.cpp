#include <cmath>
#include <filesystem>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "support.hpp"
#include "wavetomo/functionals.hpp"
#include "wavetomo/io.hpp"

using namespace wavetomo;
using namespace wt_test;
namespace fs = std::filesystem;
using GK = boost::math::quadrature::gauss_kronrod<double, 31>;

namespace {

PlaneWaveDataset data_for(const CoefficientSet& cs, const SpaceTimeGrid& g, std::vector<Direction> ws = {{0, 1}, {0, -1}}) {
    return forward_data(cs, ws, make_tau_grid(g, default_dtau(g)), g);
}

CoefficientSet q_medium(double amp) {
    CoefficientSet cs = zero_medium();
    cs.zeroth_kind = Zeroth::q;
    if (amp != 0.0) cs.zeroth.bumps.push_back(bump1(0.1, 0.5, 0.5, 0.3, amp));
    return cs;
}

}  // namespace

TEST(Functionals, ZeroMediaGiveExactZeros) {
    const auto g = grid1(0.05);
    const auto z = zero_medium();
    const auto d = data_for(z, g);
    const auto psi = solve_psi(z, g);
    for (const auto& r : {thm_q_functional(z, z, d, d), thm_ab_functional(z, z, d, d), thm_abc_functional(z, z, d, d, psi, psi)}) {
        EXPECT_EQ(r.lhs, 0.0);
        EXPECT_EQ(r.rhs, 0.0);
        EXPECT_TRUE(std::isnan(r.ratio));
    }
}

TEST(Functionals, IdenticalMediaGiveZeroRhs) {
    const auto g = grid1(0.05);
    const auto m = mixed_medium();
    const auto d1 = data_for(m, g), d2 = data_for(m, g);
    const auto r = thm_ab_functional(m, m, d1, d2);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_EQ(r.lhs, 0.0);
}

TEST(Functionals, TraceNormIsAbsolutelyHomogeneous) {
    const auto g = grid1(0.05);
    const auto a = forward_row(zero_medium(), g, {0, 1}, -0.2, {false, false});
    const auto b = forward_row(mixed_medium(), g, {0, 1}, -0.2);
    for (double lambda : {-3.0, 0.5, 7.0}) {
        TraceSet c = a;
        auto blend = [&](std::vector<double>& out, const std::vector<double>& x, const std::vector<double>& y) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + lambda * (y[i] - x[i]);
        };
        for (auto m : {&WaveTrace::val, &WaveTrace::t, &WaveTrace::tt, &WaveTrace::grad, &WaveTrace::hess, &WaveTrace::grad_t}) {
            blend(c.u.*m, a.u.*m, b.u.*m);
            blend(c.v.*m, a.v.*m, b.v.*m);
        }
        for (TraceTerm t : {TraceTerm{TraceField::u, 2}, TraceTerm{TraceField::v, 1}, TraceTerm{TraceField::u_t, 1}}) {
            const double base = trace_norm(a, b, t, g.h);
            ASSERT_GT(base, 0.0);
            EXPECT_NEAR(trace_norm(a, c, t, g.h), std::abs(lambda) * base, 1e-10 * std::abs(lambda) * base);
        }
    }
}

TEST(Functionals, BackgroundRowsContributeNothing) {
    const auto g = grid1(0.05);
    const auto m = mixed_medium();
    const auto d1 = data_for(m, g), d0 = data_for(zero_medium(), g);
    int background = 0;
    for (std::size_t i = 0; i < d1.rows.size(); ++i) {
        if (!d1.rows[i].background) continue;
        ++background;
        EXPECT_EQ(trace_norm(d1.rows[i], d0.rows[i], {TraceField::u, 2}, g.h), 0.0);
        EXPECT_EQ(trace_norm(d1.rows[i], d0.rows[i], {TraceField::v, 1}, g.h), 0.0);
    }
    EXPECT_GT(background, 0);
}

TEST(Functionals, QStabilityRhsSurvivesPersistenceBitwise) {
    const auto g = grid1(0.05);
    const auto m1 = q_medium(0.0), m2 = q_medium(0.1);
    const auto d1 = data_for(m1, g, {{0, 1}}), d2 = data_for(m2, g, {{0, 1}});
    const auto direct = thm_q_functional(m1, m2, d1, d2);
    const fs::path dir = fs::temp_directory_path() / "wavetomo_functional_roundtrip";
    fs::remove_all(dir);
    io::write_dataset(dir / "a", d1);
    io::write_dataset(dir / "b", d2);
    const auto again = thm_q_functional(m1, m2, io::read_dataset(dir / "a"), io::read_dataset(dir / "b"));
    EXPECT_EQ(direct.rhs, again.rhs);
    EXPECT_EQ(direct.lhs, again.lhs);
    fs::remove_all(dir);
}

TEST(Functionals, QStabilityScalesLinearlyForSmallPerturbations) {
    const auto g = grid1(0.05);
    const auto m0 = q_medium(0.0);
    const auto d0 = data_for(m0, g, {{0, 1}});
    std::vector<StabilityReport> reps;
    for (double amp : {1e-3, 1e-2}) {
        const auto m = q_medium(amp);
        reps.push_back(thm_q_functional(m0, m, d0, data_for(m, g, {{0, 1}})));
    }
    EXPECT_NEAR(reps[1].lhs / reps[0].lhs, 10.0, 1e-9);
    EXPECT_NEAR(reps[1].rhs / reps[0].rhs, 10.0, 0.1);
    EXPECT_NEAR(reps[1].ratio / reps[0].ratio, 1.0, 0.01);
}

TEST(Functionals, QDifferenceNormMatchesIndependentQuadrature) {
    const auto g = grid1(0.05);
    const auto m0 = q_medium(0.0), m = q_medium(0.3);
    const auto d = data_for(m0, g, {{0, 1}});
    const auto r = thm_q_functional(m0, m, d, d);
    const double oracle = std::sqrt(GK::integrate(
        [&](double t) {
            return GK::integrate([&](double x) { return std::pow(m.zeroth.value({x, 0.0, t}), 2); }, -0.4, 0.6, 10, 1e-13);
        },
        0.2, 0.8, 10, 1e-13));
    EXPECT_NEAR(r.lhs, oracle, 1e-9 * oracle);
}

TEST(Functionals, PureGaugeHasZeroCurlAndCDifference) {
    const auto g = grid1(0.05);
    const auto m = mixed_medium();
    const auto gauged = apply_gauge(m, field_of({bump1(0.0, 0.5, 0.8, 0.45, 0.3, Profile::poly)}));
    const auto d = data_for(m, g);
    const auto psi = solve_psi(m, g);
    const auto r = thm_abc_functional(m, gauged, d, d, psi, psi);
    EXPECT_LT(r.lhs, 1e-12);
}

TEST(Functionals, CPerturbationRatioIsStableUnderRefinement) {
    const auto base = zero_medium();
    const auto pert = c_medium(bump1(0.1, 0.5, 0.5, 0.3, 0.05));
    std::vector<double> ratio;
    for (double h : {0.05, 0.025}) {
        const auto g = make_grid(1, 1.0, h, 3.0);
        const auto ws = curl_directions(1);
        const auto taus = make_tau_grid(g, 0.1);
        const auto d0 = forward_data(base, ws, taus, g), d1 = forward_data(pert, ws, taus, g);
        const auto r = thm_abc_functional(base, pert, d0, d1, solve_psi(base, g, PsiMethod::leapfrog),
                                          solve_psi(pert, g, PsiMethod::leapfrog));
        // with a = b = 0 the left side is exactly ||c||
        const double c_norm = std::sqrt(integrate_support(1, 1.0, 32, [&](const Point& p) { return std::pow(pert.c(p), 2); }));
        EXPECT_NEAR(r.lhs, c_norm, 1e-12);
        ratio.push_back(r.ratio);
    }
    EXPECT_LT(std::abs(ratio[1] / ratio[0] - 1.0), 0.2);
}

TEST(Functionals, MismatchedGridsAreRejected) {
    const auto d1 = data_for(zero_medium(), grid1(0.05));
    const auto d2 = data_for(zero_medium(), grid1(0.1));
    EXPECT_THROW(thm_q_functional(zero_medium(), zero_medium(), d1, d2), std::invalid_argument);
}

TEST(Carleman, ZeroTestFunctionIsVacuous) {
    const auto rep = carleman_check(Field{}, zero_medium(), {0, 1}, -0.5, {4, 8, 16}, grid1(0.05));
    EXPECT_TRUE(rep.vacuous);
    EXPECT_TRUE(rep.single_constant);
    Field zero_amp = field_of({bump1(0.0, 0.5, 0.25, 0.25, 0.0)});
    EXPECT_TRUE(carleman_check(zero_amp, zero_medium(), {0, 1}, -0.5, {4, 8}, grid1(0.05)).vacuous);
}

TEST(Carleman, InteriorBumpHasNoFaceTermsAndMatchesOracle) {
    const auto g = grid1(0.02);
    const Field w = field_of({bump1(0.0, 0.5, 0.25, 0.25, 1.0)});
    const std::vector<double> sigmas{2, 4, 8, 16, 32, 64};
    const auto rep = carleman_check(w, zero_medium(), {0, 1}, -0.5, sigmas, g);
    ASSERT_FALSE(rep.vacuous);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.face_l, 0.0);
        EXPECT_EQ(r.face_h, 0.0);
        EXPECT_GT(r.residual, 0.0);
    }
    EXPECT_TRUE(rep.single_constant);
    // residual and interior terms against nested Gauss-Kronrod
    const double s = 4.0;
    auto over_q = [&](auto f) {
        return GK::integrate([&](double t) { return GK::integrate([&](double x) { return f(x, t); }, -0.25, 0.25, 10, 1e-12); },
                             0.25, 0.75, 10, 1e-12);
    };
    const double res = over_q([&](double x, double t) {
        const Jet j = w.jet({x, 0.0, t});
        const double box = j[jet_dd(kTime, kTime)] - j[jet_dd(0, 0)];
        return std::exp(2.0 * s * (t - 1.0)) * box * box;
    });
    const double inner = over_q([&](double x, double t) {
        const Jet j = w.jet({x, 0.0, t});
        return std::exp(2.0 * s * (t - 1.0)) *
               (j[jet_d(0)] * j[jet_d(0)] + j[jet_d(kTime)] * j[jet_d(kTime)] + s * s * j[0] * j[0]);
    });
    EXPECT_NEAR(rep.rows[1].residual, res, 1e-6 * res);
    EXPECT_NEAR(rep.rows[1].interior, inner, 1e-6 * inner);
}

TEST(Carleman, BumpCrossingTheFrontHasPositiveFaceTerm) {
    const auto g = grid1(0.02);
    const double tau = -0.5;
    const Field w = field_of({bump1(0.75, 0.4, 0.25, 0.25, 1.0)});
    const auto rep = carleman_check(w, zero_medium(), {0, 1}, tau, {4, 16}, g);
    for (const auto& r : rep.rows) {
        EXPECT_GT(r.face_l, 0.0);
        const double s = r.sigma;
        const double oracle = GK::integrate(
            [&](double x) {
                const double t = tau + x;
                const Jet j = w.jet({x, 0.0, t});
                const double dl = (j[jet_d(0)] + j[jet_d(kTime)]) / std::sqrt(2.0);
                return std::sqrt(2.0) * std::exp(2.0 * s * (t - 1.0)) * (dl * dl + s * s * j[0] * j[0]);
            },
            0.5, 1.0, 12, 1e-12);
        EXPECT_NEAR(r.face_l, oracle, 1e-7 * oracle);
    }
}

TEST(Carleman, VerdictFollowsTheRatioTail) {
    CarlemanReport rising;
    for (double s : {4.0, 8.0, 16.0, 32.0}) rising.rows.push_back({s, 0, 0, 0, 0, 0, 0, s});
    EXPECT_FALSE(finish_carleman(rising).single_constant);
    CarlemanReport falling;
    for (double s : {4.0, 8.0, 16.0, 32.0}) falling.rows.push_back({s, 0, 0, 0, 0, 0, 0, 1.0 / s});
    const auto f = finish_carleman(falling);
    EXPECT_TRUE(f.single_constant);
    EXPECT_DOUBLE_EQ(f.sigma0, 4.0);
    EXPECT_DOUBLE_EQ(f.constant, 0.25);
}

TEST(Carleman, RejectsBadSigmaLists) {
    const Field w = field_of({bump1(0.0, 0.5, 0.25, 0.25, 1.0)});
    EXPECT_THROW(carleman_check(w, zero_medium(), {0, 1}, -0.5, {8, 4}, grid1(0.05)), std::invalid_argument);
    EXPECT_THROW(carleman_check(w, zero_medium(), {0, 1}, -0.5, {-1}, grid1(0.05)), std::invalid_argument);
}
