#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"
#include "wavetomo/inverse.hpp"

using namespace wavetomo;
using namespace wt_test;

namespace {

const SpaceTimeGrid& grid() {
    static const SpaceTimeGrid g = grid1(0.05);
    return g;
}

PlaneWaveDataset observe(const CoefficientSet& cs, std::vector<Direction> ws) {
    return forward_data(cs, ws, make_tau_grid(grid(), default_dtau(grid())), grid());
}

/// q truth built from the default basis with given amplitudes.
CoefficientSet q_truth(const std::vector<double>& amps) {
    const auto shapes = make_basis(1, BasisSpec{});
    CoefficientSet cs = zero_medium();
    cs.zeroth_kind = Zeroth::q;
    for (std::size_t k = 0; k < amps.size(); ++k) {
        if (amps[k] == 0.0) continue;
        Bump b = shapes[k];
        b.amplitude = amps[k];
        cs.zeroth.bumps.push_back(b);
    }
    return cs;
}

CoefficientSet q_known() {
    CoefficientSet cs = zero_medium();
    cs.zeroth_kind = Zeroth::q;
    return cs;
}

}  // namespace

TEST(Inverse, BasisStaysInTheUnitBall) {
    const auto b1 = make_basis(1, BasisSpec{});
    EXPECT_EQ(b1.size(), 9u);
    const auto b2 = make_basis(2, BasisSpec{});
    for (const auto& b : b2) EXPECT_LE(std::hypot(std::abs(b.center[0]) + b.radius[0], std::abs(b.center[1]) + b.radius[1]), 1.0 + 1e-12);
    BasisSpec wide;
    wide.radius_x = 2.0;
    EXPECT_THROW(make_basis(1, wide), std::invalid_argument);
}

TEST(Inverse, ZeroTruthNeedsNoIterations) {
    const auto truth = q_known();
    const auto res = reconstruct_q(q_known(), observe(truth, {{0, 1}}), InversionConfig{}, &truth);
    EXPECT_EQ(res.iterations, 0);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.final_misfit, 0.0);
    for (double p : res.params) EXPECT_EQ(p, 0.0);
    EXPECT_EQ(res.abs_error, 0.0);
}

TEST(Inverse, QTwinIsRecoveredWithDecreasingMisfit) {
    const auto truth = q_truth({0, 0.05, 0, 0.1, 0, -0.05, 0, 0.08, 0});
    const auto res = reconstruct_q(q_known(), observe(truth, {{0, 1}}), InversionConfig{}, &truth);
    EXPECT_LE(res.rel_error, 0.05);
    for (std::size_t i = 1; i < res.history.size(); ++i) EXPECT_LE(res.history[i].misfit, res.history[i - 1].misfit);
    EXPECT_FALSE(res.stalled);
}

TEST(Inverse, SwappingTheSignOfTheTruthNegatesTheRecovery) {
    const std::vector<double> amps{0, 0, 0, 0.01, 0, 0, 0, 0.02, 0};
    std::vector<double> neg(amps);
    for (double& a : neg) a = -a;
    const auto tp = q_truth(amps), tn = q_truth(neg);
    const auto rp = reconstruct_q(q_known(), observe(tp, {{0, 1}}), InversionConfig{});
    const auto rn = reconstruct_q(q_known(), observe(tn, {{0, 1}}), InversionConfig{});
    double scale = 0.0;
    for (double p : rp.params) scale = std::max(scale, std::abs(p));
    for (std::size_t k = 0; k < rp.params.size(); ++k) EXPECT_NEAR(rp.params[k], -rn.params[k], 1e-4 * scale);
}

TEST(Inverse, FiniteDifferenceJacobianMatchesCenteredDifferences) {
    const auto truth = q_truth({0, 0, 0, 0.05, 0, 0, 0, 0, 0});
    InversionConfig cfg;
    const auto pb = make_problem(Unknown::q, q_known(), observe(truth, {{0, 1}}), cfg);
    const std::vector<double> p0(pb.param.size(), 0.0);
    const auto r0 = problem_residual(pb, p0);
    const auto J = fd_jacobian(pb, p0, r0, 1e-4, 1);
    const double e = 1e-3;
    for (std::size_t k : {1u, 4u, 7u}) {
        auto pp = p0, pm = p0;
        pp[k] += e;
        pm[k] -= e;
        const auto rp = problem_residual(pb, pp), rm = problem_residual(pb, pm);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < r0.size(); ++i) {
            const double c = (rp[i] - rm[i]) / (2.0 * e);
            num += std::pow(J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - c, 2);
            den += c * c;
        }
        ASSERT_GT(den, 0.0);
        EXPECT_LT(std::sqrt(num / den), 0.01) << "column " << k;
    }
}

TEST(Inverse, JacobianIsDeterministicAcrossThreads) {
    const auto truth = q_truth({0, 0, 0, 0.05, 0, 0, 0, 0, 0});
    const auto pb = make_problem(Unknown::q, q_known(), observe(truth, {{0, 1}}), InversionConfig{});
    const std::vector<double> p0(pb.param.size(), 0.0);
    const auto r0 = problem_residual(pb, p0);
    EXPECT_EQ(fd_jacobian(pb, p0, r0, 1e-4, 1), fd_jacobian(pb, p0, r0, 1e-4, 4));
}

TEST(Inverse, SingleDirectionLeavesTheRateCombinationUndetermined) {
    CoefficientSet known = q_known();
    const auto obs1 = observe(zero_medium(), {{0, 1}});
    const auto obs2 = observe(zero_medium(), ab_directions(1));
    InversionConfig cfg;
    const auto one = jacobian_rank(make_problem(Unknown::ab, known, obs1, cfg));
    const auto two = jacobian_rank(make_problem(Unknown::ab, known, obs2, cfg));
    const std::size_t np = make_basis(1, cfg.basis).size() * 2;
    EXPECT_LT(one.rank, static_cast<int>(np));
    EXPECT_EQ(two.rank, static_cast<int>(np));
    // weakest mode: da = -db, i.e. a + b (the rate seen along +e1) unchanged
    const std::size_t K = np / 2;
    double sum = 0.0, da = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        sum += std::pow(one.weakest[k] + one.weakest[K + k], 2);
        da += std::pow(one.weakest[k], 2);
    }
    EXPECT_LT(std::sqrt(sum / da), 0.05);
}

TEST(Inverse, PureGaugeTruthRecoversVanishingInvariants) {
    const Field phi = field_of({bump1(0.0, 0.5, 0.8, 0.45, 0.3, Profile::poly)});
    const auto truth = apply_gauge(zero_medium(), phi);
    const auto obs = observe(truth, curl_directions(1));
    const auto psi = solve_psi(truth, grid(), PsiMethod::leapfrog);
    InversionConfig cfg;
    const auto res = reconstruct_abc(obs, &psi, cfg);
    EXPECT_TRUE(res.gauge_normalized);
    const double invariants = std::sqrt(field_error_squared(res.recovered, zero_medium(), Unknown::abc, grid().T, false));
    const double gauge_size = std::sqrt(integrate_support(1, 1.0, 32, [&](const Point& p) {
        const Jet j = phi.jet(p);
        return j[jet_d(0)] * j[jet_d(0)] + j[jet_d(kTime)] * j[jet_d(kTime)];
    }));
    EXPECT_LT(invariants, 0.05 * gauge_size);
}

TEST(Inverse, GaugeNormalizationOfAGaugeEquivalentPair) {
    const auto m1 = mixed_medium();
    const auto m2 = apply_gauge(m1, field_of({bump1(0.1, 0.5, 0.7, 0.4, 0.5)}));
    const auto pair = gauge_normalize_pair(m1, m2, grid(), 4);
    EXPECT_LT(pair.residual1, 1e-6);
    EXPECT_LT(pair.residual2, 1e-6);
    EXPECT_TRUE(pair.boundary_data_match);
    for (const Point& p : {Point{0.0, 0.0, 0.5}, Point{-0.3, 0.0, 0.3}, Point{0.4, 0.0, 0.7}, Point{0.2, 0.0, 1.0}}) {
        EXPECT_NEAR(pair.first.a.value(p), pair.second.a.value(p), 1e-8);
        EXPECT_NEAR(pair.first.b[0].value(p), pair.second.b[0].value(p), 1e-8);
        EXPECT_NEAR(curl_eta(pair.first, p)[0][kTime], curl_eta(m1, p)[0][kTime], 1e-10);
        EXPECT_EQ(pair.first.c(p), m1.c(p));
    }
    const auto other = gauge_normalize_pair(m1, zero_medium(), grid(), 4);
    EXPECT_FALSE(other.boundary_data_match);
    EXPECT_GT(other.boundary_mismatch, 1e-3);
}

TEST(Inverse, PsiTransformMapsDataToTheGaugedMedium) {
    // the gauge by the medium's own potential: data transform to O(h^2)
    const Field phi = field_of({bump1(0.0, 0.6, 0.7, 0.4, 0.3, Profile::poly)});
    CoefficientSet base = zero_medium();
    base.zeroth.bumps.push_back(bump1(0.1, 0.5, 0.5, 0.3, 0.4, Profile::poly));
    std::vector<double> err;
    for (double h : {0.04, 0.02}) {
        const auto g = grid1(h);
        const std::vector<Direction> ws{{0, 1}, {0, -1}};
        const std::vector<double> taus{-0.6, 0.2};
        const auto d = forward_data(base, ws, taus, g);
        const auto target = forward_data(apply_gauge(base, phi), ws, taus, g);
        // traces of phi at t = T
        PsiTraces p = solve_psi(zero_medium(), g, PsiMethod::leapfrog);
        for (int i = 0; i < g.nx; ++i) {
            const Jet j = phi.jet({g.x(i), 0.0, g.T});
            p.val[i] = j[0];
            p.t[i] = j[jet_d(kTime)];
            p.tt[i] = j[jet_dd(kTime, kTime)];
            p.grad[i] = j[jet_d(0)];
            p.hess[i] = j[jet_dd(0, 0)];
            p.grad_t[i] = j[jet_dd(0, kTime)];
        }
        const auto mapped = psi_transform(d, p);
        double worst = 0.0;
        for (std::size_t r = 0; r < d.rows.size(); ++r)
            worst = std::max({worst, max_abs_diff(mapped.rows[r].u.val, target.rows[r].u.val),
                              max_abs_diff(mapped.rows[r].v.val, target.rows[r].v.val)});
        err.push_back(worst);
    }
    EXPECT_LT(err[1], 1e-3);
    EXPECT_GT(err[0] / err[1], 3.0);
}
