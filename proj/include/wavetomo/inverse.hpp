#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "errors.hpp"
#include "forward.hpp"
#include "functionals.hpp"
#include "media.hpp"
#include "parallel.hpp"
#include "psi.hpp"

namespace wavetomo {

enum class Unknown { q, ab, abc };

inline const char* to_string(Unknown u) {
    switch (u) {
        case Unknown::q: return "q";
        case Unknown::ab: return "ab";
        case Unknown::abc: return "abc-gauge-fixed";
    }
    return "?";
}

/// Lattice of bump shapes (unit amplitude) in the closed unit ball times [0,T].
struct BasisSpec {
    std::vector<double> centers_x{-0.5, 0.0, 0.5};
    std::vector<double> centers_t{0.25, 0.5, 0.75};
    double radius_x = 0.5;
    double radius_t = 0.25;
    Profile profile = Profile::smooth;
};

inline std::vector<Bump> make_basis(int n, const BasisSpec& spec) {
    std::vector<Bump> out;
    for (double ct : spec.centers_t)
        for (std::size_t j = 0; j < (n == 2 ? spec.centers_x.size() : 1); ++j)
            for (double cx : spec.centers_x) {
                Bump b;
                b.profile = spec.profile;
                b.center = {cx, n == 2 ? spec.centers_x[j] : 0.0, ct};
                b.radius = {spec.radius_x, n == 2 ? spec.radius_x : std::numeric_limits<double>::infinity(),
                            spec.radius_t};
                double r2 = 0.0;
                for (int a = 0; a < n; ++a) r2 += std::pow(std::abs(b.center[a]) + spec.radius_x, 2);
                if (r2 > 1.0 + 1e-12) continue;
                out.push_back(b);
            }
    if (out.empty()) throw std::invalid_argument("inversion basis is empty (no bump fits the unit ball)");
    return out;
}

struct InversionConfig {
    Unknown unknown = Unknown::q;
    BasisSpec basis;
    double lambda_reg = std::numeric_limits<double>::quiet_NaN();  // NaN: 1e-6 x initial misfit
    int max_iterations = 15;
    double tolerance = 1e-10;  // on misfit / initial misfit
    double fd_step = 1e-4;
    bool use_psi = true;       // abc only: fit the final-time psi traces too
    bool slice = false;        // abc only: constrain to c = a_t - div b and map data by e^psi
    PsiMethod psi_method = PsiMethod::leapfrog;
    int threads = 1;
};

struct IterationRecord {
    int iter = 0;
    double misfit = 0.0;
    double step = 0.0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
};

struct RankReport {
    std::vector<double> eigenvalues;  // of J^T J, descending
    int rank = 0;                     // eigenvalues above rel_tol * max
    double rel_tol = 1e-8;
    double condition = std::numeric_limits<double>::infinity();
    std::vector<double> weakest;      // eigenvector of the smallest eigenvalue
};

struct InversionResult {
    Unknown unknown = Unknown::q;
    std::vector<double> params;
    CoefficientSet recovered;
    std::vector<IterationRecord> history;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
    bool regularization_floor = false;
    bool gauge_normalized = false;
    double lambda_reg = 0.0;
    double initial_misfit = 0.0;
    double final_misfit = 0.0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
    double abs_error = std::numeric_limits<double>::quiet_NaN();
    RankReport rank;
    std::string message;
};

inline void to_json(nlohmann::json& j, const RankReport& r) {
    j = nlohmann::json{{"eigenvalues", r.eigenvalues}, {"rank", r.rank},         {"rel_tol", r.rel_tol},
                       {"condition", std::isfinite(r.condition) ? nlohmann::json(r.condition) : nlohmann::json(nullptr)},
                       {"weakest", r.weakest}};
}

inline nlohmann::json nan_to_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline void to_json(nlohmann::json& j, const InversionResult& r) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : r.history)
        hist.push_back({{"iter", h.iter}, {"misfit", h.misfit}, {"step", h.step}, {"rel_error", nan_to_null(h.rel_error)}});
    j = nlohmann::json{{"unknown", to_string(r.unknown)},
                       {"params", r.params},
                       {"iterations", r.iterations},
                       {"converged", r.converged},
                       {"stalled", r.stalled},
                       {"regularization_floor", r.regularization_floor},
                       {"gauge_normalized", r.gauge_normalized},
                       {"lambda_reg", r.lambda_reg},
                       {"initial_misfit", r.initial_misfit},
                       {"final_misfit", r.final_misfit},
                       {"rel_error", nan_to_null(r.rel_error)},
                       {"abs_error", nan_to_null(r.abs_error)},
                       {"rank", r.rank},
                       {"history", hist},
                       {"message", r.message}};
}

// ---------------------------------------------------------------------------
// parametrizations

/// Maps a parameter vector to a medium. `known` supplies the fixed parts:
///   q   : a, b from known; q = sum p_k shape_k
///   ab  : q from known; a = sum p_k shape_k, b^i = sum p_{(i+1)K+k} shape_k
///   abc : a, b as for ab and c = sum p_{(n+1)K+k} shape_k, or on the slice
///         c = a_t - div b (psi source zero)
class Parametrization {
public:
    Parametrization(Unknown u, int n, std::vector<Bump> shapes, CoefficientSet known, bool slice = false)
        : unknown_(u), n_(n), shapes_(std::move(shapes)), known_(std::move(known)), slice_(slice) {}

    std::size_t size() const {
        const std::size_t K = shapes_.size();
        if (unknown_ == Unknown::q) return K;
        if (unknown_ == Unknown::abc && !slice_) return K * static_cast<std::size_t>(n_ + 2);
        return K * static_cast<std::size_t>(n_ + 1);
    }
    const std::vector<Bump>& shapes() const { return shapes_; }

    CoefficientSet medium(const std::vector<double>& p) const {
        const std::size_t K = shapes_.size();
        auto field = [&](std::size_t offset) {
            Field f;
            for (std::size_t k = 0; k < K; ++k) {
                if (p[offset + k] == 0.0) continue;
                Bump b = shapes_[k];
                b.amplitude = p[offset + k];
                f.bumps.push_back(b);
            }
            return f;
        };
        CoefficientSet cs;
        cs.n = n_;
        switch (unknown_) {
            case Unknown::q:
                cs.a = known_.a;
                cs.b = known_.b;
                cs.zeroth_kind = Zeroth::q;
                cs.zeroth = field(0);
                break;
            case Unknown::ab:
                cs.zeroth_kind = Zeroth::q;
                cs.zeroth = known_zeroth_q();
                cs.a = field(0);
                for (int i = 0; i < n_; ++i) cs.b[i] = field((i + 1) * K);
                break;
            case Unknown::abc:
                cs.zeroth_kind = Zeroth::c;
                cs.a = field(0);
                for (int i = 0; i < n_; ++i) cs.b[i] = field((i + 1) * K);
                if (!slice_) {
                    cs.zeroth = field(static_cast<std::size_t>(n_ + 1) * K);
                    break;
                }
                cs.zeroth = cs.a.derivative(kTime);
                for (int i = 0; i < n_; ++i) cs.zeroth += cs.b[i].derivative(i).scaled(-1.0);
                break;
        }
        return cs;
    }

private:
    Field known_zeroth_q() const {
        if (known_.zeroth_kind != Zeroth::q && !known_.is_zero())
            throw std::invalid_argument("reconstruct_ab needs q given directly (zeroth = q)");
        return known_.zeroth;
    }

    Unknown unknown_;
    int n_;
    std::vector<Bump> shapes_;
    CoefficientSet known_;
    bool slice_ = false;
};

/// Which traces enter the misfit and with which Sobolev order.
inline std::vector<TraceTerm> misfit_terms(Unknown u) {
    switch (u) {
        case Unknown::q: return {{TraceField::v, 1}, {TraceField::v_t, 0}};
        case Unknown::ab: return {{TraceField::u, 1}, {TraceField::u_t, 0}};
        case Unknown::abc:
            return {{TraceField::u, 2}, {TraceField::u_t, 1}, {TraceField::u_tt, 0}, {TraceField::v, 1}, {TraceField::v_t, 0}};
    }
    return {};
}

/// Residual vector whose squared norm is
///   sum_omega int dtau sum_terms ||model - observed||^2_{order,H},
/// i.e. the data functional with every norm squared (trapezoid in tau and x).
inline std::vector<double> residual_vector(const PlaneWaveDataset& model, const PlaneWaveDataset& obs,
                                           const std::vector<TraceTerm>& terms) {
    detail::check_same_grid(model, obs);
    std::vector<double> r;
    const std::size_t nt = obs.taus.size();
    for (std::size_t o = 0; o < obs.omegas.size(); ++o)
        for (std::size_t m = 0; m < nt; ++m) {
            double wtau = 0.0;
            if (nt >= 2) {
                if (m > 0) wtau += 0.5 * (obs.taus[m] - obs.taus[m - 1]);
                if (m + 1 < nt) wtau += 0.5 * (obs.taus[m + 1] - obs.taus[m]);
            } else {
                wtau = 1.0;
            }
            const auto& a = model.row(o, m);
            const auto& b = obs.row(o, m);
            detail::check_same_layout(a, b);
            const auto w = trace_weights(a, obs.grid.h);
            const std::size_t P = a.size();
            const auto n = static_cast<std::size_t>(a.n);
            for (const auto& t : terms) {
                const auto d = detail::trace_difference(a, b, t.field);
                for (std::size_t i = 0; i < P; ++i) {
                    const double s = std::sqrt(wtau * w[i]);
                    r.push_back(s * d.val[i]);
                    if (t.order >= 1)
                        for (std::size_t c = 0; c < n; ++c) r.push_back(s * d.grad[i * n + c]);
                    if (t.order >= 2)
                        for (std::size_t c = 0; c < n * n; ++c) r.push_back(s * d.hess[i * n * n + c]);
                }
            }
        }
    return r;
}

inline double squared_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

// ---------------------------------------------------------------------------
// psi transform for the normalized slice

/// Data of the gauged medium (a + psi_t, b + grad psi, c), obtained from the
/// observed data as w -> e^psi w with psi the observed final-time potential.
inline PlaneWaveDataset psi_transform(const PlaneWaveDataset& obs, const PsiTraces& psi) {
    const auto& g = obs.grid;
    if (psi.n != g.n || psi.nx != g.nx || psi.h != g.h) throw std::invalid_argument("mismatched grids: psi traces");
    PlaneWaveDataset out = obs;
    const int n = g.n;
    const auto N = static_cast<std::size_t>(n);
    for (auto& row : out.rows) {
        const int ax = row.omega.axis;
        bool touched = false;
        for (int l = 0; l < row.across_count; ++l)
            for (int p = 0; p < row.along_count; ++p) {
                const std::size_t id = static_cast<std::size_t>(l) * row.along_count + p;
                std::size_t gid = static_cast<std::size_t>(row.node[p]);
                if (n == 2) {
                    std::array<int, 2> idx{};
                    idx[ax] = row.node[p];
                    idx[1 - ax] = l;
                    gid = static_cast<std::size_t>(idx[0]) + static_cast<std::size_t>(idx[1]) * g.nx;
                }
                const double ps = psi.val[gid], pt = psi.t[gid], ptt = psi.tt[gid];
                if (ps == 0.0 && pt == 0.0 && ptt == 0.0) {
                    bool zero = true;
                    for (std::size_t a = 0; a < N; ++a) zero = zero && psi.grad[gid * N + a] == 0.0;
                    if (zero) continue;
                }
                touched = true;
                const double E = std::exp(ps);
                for (WaveTrace* w : {&row.u, &row.v}) {
                    const double f = w->val[id], ft = w->t[id], ftt = w->tt[id];
                    std::array<double, 2> fi{}, fti{}, psi_i{}, psi_ti{};
                    for (std::size_t a = 0; a < N; ++a) {
                        fi[a] = w->grad[id * N + a];
                        fti[a] = w->grad_t[id * N + a];
                        psi_i[a] = psi.grad[gid * N + a];
                        psi_ti[a] = psi.grad_t[gid * N + a];
                    }
                    w->val[id] = E * f;
                    w->t[id] = E * (ft + pt * f);
                    w->tt[id] = E * (ftt + 2.0 * pt * ft + (ptt + pt * pt) * f);
                    for (std::size_t a = 0; a < N; ++a) {
                        w->grad[id * N + a] = E * (fi[a] + psi_i[a] * f);
                        w->grad_t[id * N + a] =
                            E * (fti[a] + pt * fi[a] + psi_i[a] * ft + (psi_ti[a] + pt * psi_i[a]) * f);
                        for (std::size_t b = 0; b < N; ++b) {
                            const double fij = w->hess[id * N * N + a * N + b];
                            const double pij = psi.hess[gid * N * N + a * N + b];
                            w->hess[id * N * N + a * N + b] =
                                E * (fij + psi_i[a] * fi[b] + psi_i[b] * fi[a] + (pij + psi_i[a] * psi_i[b]) * f);
                        }
                    }
                }
            }
        if (touched) row.background = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// error measures against a known truth

inline double field_error_squared(const CoefficientSet& rec, const CoefficientSet& truth, Unknown u, double T,
                                  bool relative_to_truth) {
    CoefficientSet zero;
    zero.n = truth.n;
    const CoefficientSet& other = relative_to_truth ? zero : rec;
    auto integrand = [&](const Point& p) {
        switch (u) {
            case Unknown::q: {
                const double d = compute_q(other, p) - compute_q(truth, p);
                return d * d;
            }
            case Unknown::ab: {
                const double da = other.a.value(p) - truth.a.value(p);
                double s = da * da;
                for (int i = 0; i < truth.n; ++i) {
                    const double db = other.b[i].value(p) - truth.b[i].value(p);
                    s += db * db;
                }
                return s;
            }
            case Unknown::abc: {
                const double dc = other.c(p) - truth.c(p);
                return dc * dc + curl_difference_squared(other, truth, p);
            }
        }
        return 0.0;
    };
    return integrate_support(truth.n, T, default_lhs_panels(truth.n), integrand);
}

inline void score(InversionResult& r, const CoefficientSet& truth, double T) {
    const double e2 = field_error_squared(r.recovered, truth, r.unknown, T, false);
    const double t2 = field_error_squared(r.recovered, truth, r.unknown, T, true);
    r.abs_error = std::sqrt(e2);
    r.rel_error = t2 > 0.0 ? std::sqrt(e2 / t2) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Gauss-Newton driver

inline RankReport rank_report(const Eigen::MatrixXd& jtj, double rel_tol = 1e-8) {
    RankReport r;
    r.rel_tol = rel_tol;
    if (jtj.rows() == 0) return r;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jtj);
    const auto& ev = es.eigenvalues();  // ascending
    const double mx = ev(ev.size() - 1);
    for (Eigen::Index i = ev.size() - 1; i >= 0; --i) r.eigenvalues.push_back(ev(i));
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > rel_tol * mx) ++r.rank;
    r.condition = ev(0) > 0.0 ? mx / ev(0) : std::numeric_limits<double>::infinity();
    const Eigen::VectorXd v = es.eigenvectors().col(0);
    r.weakest.assign(v.data(), v.data() + v.size());
    return r;
}

struct InversionProblem {
    Parametrization param;
    PlaneWaveDataset observed;
    std::vector<TraceTerm> terms;
    ForwardOptions forward;
    bool fit_psi = false;
    PsiTraces psi_observed;
    PsiMethod psi_method = PsiMethod::leapfrog;
};

/// Appends the psi part of the misfit: ||psi||_2, ||psi_t||_1, ||psi_tt||_0 on
/// R^n, every norm squared.
inline void append_psi_residual(const PsiTraces& model, const PsiTraces& obs, std::vector<double>& r) {
    if (model.size() != obs.size() || model.n != obs.n || model.h != obs.h)
        throw std::invalid_argument("mismatched grids: psi traces differ in layout");
    const auto N = static_cast<std::size_t>(obs.n);
    const auto wx = trapezoid_weights(obs.nx, obs.h);
    const auto w = obs.n == 1 ? wx : tensor_weights(wx, wx);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double s = std::sqrt(w[i]);
        r.push_back(s * (model.val[i] - obs.val[i]));
        for (std::size_t a = 0; a < N; ++a) r.push_back(s * (model.grad[i * N + a] - obs.grad[i * N + a]));
        for (std::size_t a = 0; a < N * N; ++a) r.push_back(s * (model.hess[i * N * N + a] - obs.hess[i * N * N + a]));
        r.push_back(s * (model.t[i] - obs.t[i]));
        for (std::size_t a = 0; a < N; ++a) r.push_back(s * (model.grad_t[i * N + a] - obs.grad_t[i * N + a]));
        r.push_back(s * (model.tt[i] - obs.tt[i]));
    }
}

inline std::vector<double> problem_residual(const InversionProblem& pb, const std::vector<double>& p) {
    const auto cs = pb.param.medium(p);
    const auto model = forward_data(cs, pb.observed.omegas, pb.observed.taus, pb.observed.grid, 1, pb.forward);
    auto r = residual_vector(model, pb.observed, pb.terms);
    if (pb.fit_psi) append_psi_residual(solve_psi(cs, pb.observed.grid, pb.psi_method), pb.psi_observed, r);
    return r;
}

inline Eigen::MatrixXd fd_jacobian(const InversionProblem& pb, const std::vector<double>& p,
                                   const std::vector<double>& r0, double step, int threads) {
    const std::size_t np = p.size();
    Eigen::MatrixXd J(static_cast<Eigen::Index>(r0.size()), static_cast<Eigen::Index>(np));
    parallel_for(np, threads, [&](std::size_t k) {
        std::vector<double> pk = p;
        pk[k] += step;
        const auto rk = problem_residual(pb, pk);
        if (rk.size() != r0.size()) throw std::logic_error("residual length changed");
        for (std::size_t i = 0; i < r0.size(); ++i)
            J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (rk[i] - r0[i]) / step;
    });
    return J;
}

/// Tikhonov-regularized Gauss-Newton with backtracking on
///   Phi(p) = |r(p)|^2 + lambda |p|^2.
inline InversionResult gauss_newton(const InversionProblem& pb, const InversionConfig& cfg,
                                    const CoefficientSet* truth = nullptr) {
    InversionResult res;
    res.unknown = cfg.unknown;
    const std::size_t np = pb.param.size();
    std::vector<double> p(np, 0.0);
    auto r = problem_residual(pb, p);
    double misfit = squared_norm(r);
    res.initial_misfit = misfit;
    const double T = pb.observed.grid.T;

    auto record = [&](int it, double step) {
        IterationRecord h{it, misfit, step};
        if (truth) {
            InversionResult tmp;
            tmp.unknown = cfg.unknown;
            tmp.recovered = pb.param.medium(p);
            score(tmp, *truth, T);
            h.rel_error = tmp.rel_error;
        }
        res.history.push_back(h);
    };
    record(0, 0.0);

    double lambda = cfg.lambda_reg;
    if (!std::isfinite(lambda)) lambda = 1e-6 * misfit;
    if (lambda < 1e-12) {
        lambda = 1e-12;
        res.regularization_floor = true;
    }
    res.lambda_reg = lambda;

    auto objective = [&](double mis, const std::vector<double>& q) { return mis + lambda * squared_norm(q); };
    Eigen::MatrixXd last_jtj;

    if (misfit == 0.0) {
        res.converged = true;
        res.message = "observed data matches the initial guess";
    }
    int it = 0;
    while (!res.converged && it < cfg.max_iterations) {
        ++it;
        const Eigen::MatrixXd J = fd_jacobian(pb, p, r, cfg.fd_step, cfg.threads);
        const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
        const Eigen::Map<const Eigen::VectorXd> pv(p.data(), static_cast<Eigen::Index>(np));
        last_jtj = J.transpose() * J;
        Eigen::MatrixXd A = last_jtj;
        A.diagonal().array() += lambda;
        const Eigen::VectorXd g = J.transpose() * rv + lambda * pv;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw NumericalError("normal equations could not be factored");
        const Eigen::VectorXd delta = ldlt.solve(-g);

        const double phi0 = objective(misfit, p);
        double alpha = 1.0;
        bool accepted = false;
        std::vector<double> trial(np);
        std::vector<double> rt;
        double mt = 0.0;
        for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
            for (std::size_t k = 0; k < np; ++k) trial[k] = p[k] + alpha * delta(static_cast<Eigen::Index>(k));
            rt = problem_residual(pb, trial);
            mt = squared_norm(rt);
            if (objective(mt, trial) < phi0) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.stalled = true;
            res.message = "line search stalled at iteration " + std::to_string(it);
            break;
        }
        p = trial;
        r = std::move(rt);
        misfit = mt;
        record(it, alpha * delta.norm());
        if (misfit <= cfg.tolerance * res.initial_misfit) {
            res.converged = true;
            res.message = "relative misfit below tolerance";
        }
    }
    if (!res.converged && !res.stalled) res.message = "iteration cap reached";
    res.iterations = it;
    res.params = p;
    res.final_misfit = misfit;
    res.recovered = pb.param.medium(p);
    if (last_jtj.size() > 0) res.rank = rank_report(last_jtj);
    if (truth) score(res, *truth, T);
    return res;
}

/// Jacobian-only rank inspection at p = 0 (no iterations).
inline RankReport jacobian_rank(const InversionProblem& pb, int threads = 1, double step = 1e-4) {
    const std::vector<double> p(pb.param.size(), 0.0);
    const auto r = problem_residual(pb, p);
    const auto J = fd_jacobian(pb, p, r, step, threads);
    return rank_report(J.transpose() * J);
}

// ---------------------------------------------------------------------------
// public reconstructions

inline InversionProblem make_problem(Unknown u, const CoefficientSet& known, const PlaneWaveDataset& observed,
                                     const InversionConfig& cfg) {
    InversionProblem pb{
        Parametrization(u, observed.grid.n, make_basis(observed.grid.n, cfg.basis), known, u == Unknown::abc && cfg.slice),
        observed, misfit_terms(u), ForwardOptions{}, false, PsiTraces{}, PsiMethod::leapfrog};
    return pb;
}

/// q from v traces, a and b known.
inline InversionResult reconstruct_q(const CoefficientSet& known_ab, const PlaneWaveDataset& observed,
                                     InversionConfig cfg, const CoefficientSet* truth = nullptr) {
    cfg.unknown = Unknown::q;
    return gauss_newton(make_problem(Unknown::q, known_ab, observed, cfg), cfg, truth);
}

/// a and b from u traces over several directions, q known.
inline InversionResult reconstruct_ab(const CoefficientSet& known_q, const PlaneWaveDataset& observed,
                                      InversionConfig cfg, const CoefficientSet* truth = nullptr) {
    cfg.unknown = Unknown::ab;
    return gauss_newton(make_problem(Unknown::ab, known_q, observed, cfg), cfg, truth);
}

/// The c and d(eta) problem. By default a, b and c are free and `use_psi` adds
/// the final-time psi traces (computed with cfg.psi_method) to the misfit.
/// With `slice` the medium is constrained to c = a_t - div b and the observed
/// data are first mapped by e^psi to the gauged medium whose potential vanishes.
inline InversionProblem make_abc_problem(const PlaneWaveDataset& observed, const PsiTraces* psi,
                                         const InversionConfig& cfg) {
    if (cfg.use_psi && !psi) throw std::invalid_argument("reconstruct_abc needs psi traces (or use_psi = false)");
    CoefficientSet none;
    none.n = observed.grid.n;
    if (cfg.slice) return make_problem(Unknown::abc, none, cfg.use_psi ? psi_transform(observed, *psi) : observed, cfg);
    auto pb = make_problem(Unknown::abc, none, observed, cfg);
    pb.fit_psi = cfg.use_psi;
    if (cfg.use_psi) pb.psi_observed = *psi;
    pb.psi_method = cfg.psi_method;
    return pb;
}

/// c and d(eta) from u and v traces over several directions. The recovered
/// medium is reported after the line-integral gauge normalization.
inline InversionResult reconstruct_abc(const PlaneWaveDataset& observed, const PsiTraces* psi, InversionConfig cfg,
                                       const CoefficientSet* truth = nullptr) {
    cfg.unknown = Unknown::abc;
    auto res = gauss_newton(make_abc_problem(observed, psi, cfg), cfg, truth);
    const auto phi = gauge_phi(res.recovered);
    res.recovered = apply_gauge(res.recovered, phi.phi);
    res.gauge_normalized = true;
    return res;
}

// ---------------------------------------------------------------------------
// gauge normalization of a pair

struct NormalizedPair {
    CoefficientSet first, second;
    GaugeFunction phi1, phi2;
    double residual1 = 0.0, residual2 = 0.0;  // max |a + e^n.b| after gauging, sampled
    bool boundary_data_match = false;          // final line integrals agree
    double boundary_mismatch = 0.0;
};

/// max over sampled nodes of |a + e^n.b| for a medium.
inline double normalization_residual(const CoefficientSet& cs, const SpaceTimeGrid& g, int stride = 1) {
    const Direction en{cs.n - 1, 1};
    const Field m = incoming_rate(cs, en);
    double worst = 0.0;
    for (int k = 0; k <= g.nt; k += stride)
        for (std::size_t id = 0; id < g.spatial_size(); id += static_cast<std::size_t>(stride)) {
            const auto idx = unflatten(g, id);
            Point p{g.x(idx[0]), g.n > 1 ? g.x(idx[1]) : 0.0, g.t(k)};
            bool near = true;
            for (int a = 0; a < g.n; ++a) near = near && std::abs(p[a]) <= 1.0 + g.T + 1.0;
            if (!near) continue;
            worst = std::max(worst, std::abs(m.value(p)));
        }
    return worst;
}

inline NormalizedPair gauge_normalize_pair(const CoefficientSet& m1, const CoefficientSet& m2, const SpaceTimeGrid& g,
                                           int stride = 1) {
    NormalizedPair out;
    out.phi1 = gauge_phi(m1);
    out.phi2 = gauge_phi(m2);
    check_end_conditions(out.phi1, g);
    check_end_conditions(out.phi2, g);
    out.first = apply_gauge(m1, out.phi1.phi);
    out.second = apply_gauge(m2, out.phi2.phi);
    out.residual1 = normalization_residual(out.first, g, stride);
    out.residual2 = normalization_residual(out.second, g, stride);
    double worst = 0.0;
    for (std::size_t id = 0; id < g.spatial_size(); id += static_cast<std::size_t>(stride)) {
        const auto idx = unflatten(g, id);
        const Point x{g.x(idx[0]), g.n > 1 ? g.x(idx[1]) : 0.0, 0.0};
        worst = std::max(worst, std::abs(final_line_integral(m1, x, g.T) - final_line_integral(m2, x, g.T)));
    }
    out.boundary_mismatch = worst;
    out.boundary_data_match = worst < 1e-8;
    return out;
}

}  // namespace wavetomo
