#pragma once

// Outer problem: theta_hat = arg inf_theta sup_t P_n m(theta, t), the
// minimum-divergence estimate, plus its variance estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phidiv/divergence.hpp"
#include "phidiv/dual_solver.hpp"
#include "phidiv/errors.hpp"
#include "phidiv/moment_model.hpp"

namespace phidiv {

struct estimate_options {
    // Start 0 is the chi2 (continuous-updating) minimizer; the rest are
    // Latin-hypercube points in Theta.
    int starts = 5;
    std::uint64_t seed = 0x5eed5eedULL;
    int max_outer_iterations = 200;
    // Projected-gradient tolerance, scaled by 1 + |profile|.
    double tol = 1e-9;
    dual_options inner{};
};

struct profile_value {
    double value = inf; // +inf when the inner dual is unbounded or failed
    dual_solution inner;

    bool feasible() const { return inner.status == dual_status::converged; }
};

struct start_record {
    vec start;
    vec theta;
    double objective = inf;
    bool feasible = false;
    int iterations = 0;
};

struct estimation_diagnostics {
    std::vector<start_record> starts;
    int best_start = -1;
    int outer_iterations = 0;
    double largest_finite_profile = 0.0;
    bool v_pseudo_inverse = false;
    bool w_available = false;
};

struct estimation_result {
    vec theta_hat;
    vec t_hat;
    double divergence_hat = 0.0;
    mat V_hat;         // [G' Omega^{-1} G]^{-1}, d x d
    double sigma2_hat = 0.0;
    mat W_hat;         // S^{-1} M S^{-1}; empty when S is singular
    mat G_hat;         // sum w dg/dtheta, l x d
    mat Omega_hat;     // sum w g g', l x l
    mat S_hat;
    mat M_hat;
    dual_solution inner;
    Eigen::Index n = 0;
    bool population = false;
    estimation_diagnostics diagnostics;

    // sqrt(V_kk / n)
    vec standard_errors() const {
        return (V_hat.diagonal().array().max(0.0) / static_cast<double>(n)).sqrt().matrix();
    }
};

namespace detail {

inline profile_value profile_at(const divergence_family& f, const moment_model& model,
                                const weighted_sample& sample, const vec& theta,
                                const std::optional<vec>& init, const dual_options& opt) {
    profile_value pv;
    mat rows = gbar_matrix(model, sample, theta);
    if (!rows.allFinite()) {
        pv.inner.t = vec::Zero(rows.cols());
        pv.inner.status = dual_status::infeasible;
        return pv;
    }
    pv.inner = solve_inner_rows(f, rows, sample.weights(), init, opt);
    if (pv.inner.status == dual_status::converged) pv.value = pv.inner.objective;
    return pv;
}

inline vec envelope_gradient(const moment_model& model, const weighted_sample& sample,
                             const vec& theta, const dual_solution& inner) {
    const int l = model.dims().l;
    vec lambda = inner.t.tail(l);
    vec grad = vec::Zero(model.dims().d);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        if (inner.weights[i] == 0.0) continue;
        grad -= inner.weights[i] * (model.jacobian(sample.point(i), theta).transpose() * lambda);
    }
    return grad;
}

struct outer_run {
    vec theta;
    profile_value profile;
    int iterations = 0;
    bool feasible = false;
};

// Projected BFGS with Armijo backtracking on the profile; the gradient comes
// from the envelope theorem. Infeasible theta get a penalty value (10x the
// largest finite profile seen) so the line search steers away from them.
inline outer_run minimize_profile(const divergence_family& f, const moment_model& model,
                                  const weighted_sample& sample, const vec& start,
                                  const estimate_options& opt, double& largest_finite) {
    const box& space = model.theta_space();
    const auto d = start.size();
    outer_run run;
    run.theta = space.clamp(start);
    run.profile = profile_at(f, model, sample, run.theta, std::nullopt, opt.inner);
    if (!run.profile.feasible()) return run;
    run.feasible = true;

    auto penalty = [&] { return std::max(10.0 * largest_finite, largest_finite + 1.0); };
    auto note = [&](double v) {
        if (std::isfinite(v)) largest_finite = std::max(largest_finite, std::abs(v));
    };
    note(run.profile.value);

    vec grad = envelope_gradient(model, sample, run.theta, run.profile.inner);
    mat h_inv = mat::Identity(d, d);
    bool scaled = false;

    for (int it = 0; it < opt.max_outer_iterations; ++it) {
        run.iterations = it + 1;
        const double value = run.profile.value;
        vec pg = space.clamp(run.theta - grad) - run.theta;
        if (pg.lpNorm<Eigen::Infinity>() <= opt.tol * (1.0 + std::abs(value))) break;

        vec dir = -(h_inv * grad);
        auto pin_active = [&](vec& p) {
            for (Eigen::Index k = 0; k < d; ++k) {
                if ((run.theta[k] <= space.lo[k] && p[k] < 0.0) ||
                    (run.theta[k] >= space.hi[k] && p[k] > 0.0))
                    p[k] = 0.0;
            }
        };
        pin_active(dir);
        if (!(grad.dot(dir) < 0.0)) {
            h_inv.setIdentity();
            scaled = false;
            dir = -grad;
            pin_active(dir);
            if (!(grad.dot(dir) < 0.0)) break;
        }

        bool accepted = false;
        vec trial_theta;
        profile_value trial;
        double s = 1.0;
        for (int bt = 0; bt < 60; ++bt) {
            trial_theta = space.clamp(run.theta + s * dir);
            vec step = trial_theta - run.theta;
            if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
            trial = profile_at(f, model, sample, trial_theta, run.profile.inner.t, opt.inner);
            double tv = trial.feasible() ? trial.value : penalty();
            note(trial.feasible() ? trial.value : inf);
            const double noise = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(value));
            if (trial.feasible() && tv <= value + 1e-4 * grad.dot(step) + noise) {
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if (!accepted) break;

        vec new_grad = envelope_gradient(model, sample, trial_theta, trial.inner);
        vec s_k = trial_theta - run.theta;
        vec y_k = new_grad - grad;
        const double sy = s_k.dot(y_k);
        if (sy > 1e-14 * s_k.norm() * y_k.norm() && sy > 0.0) {
            if (!scaled) {
                h_inv = mat::Identity(d, d) * (sy / y_k.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            mat eye = mat::Identity(d, d);
            h_inv = (eye - rho * s_k * y_k.transpose()) * h_inv * (eye - rho * y_k * s_k.transpose()) +
                    rho * s_k * s_k.transpose();
        }
        const double change = std::abs(value - trial.value);
        run.theta = trial_theta;
        run.profile = std::move(trial);
        grad = new_grad;
        if (s_k.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + run.theta.lpNorm<Eigen::Infinity>()) &&
            change <= 1e-15 * (1.0 + std::abs(value)))
            break;
    }
    return run;
}

inline std::vector<vec> latin_hypercube(const box& space, int count, std::uint64_t seed) {
    std::vector<vec> pts;
    if (count <= 0) return pts;
    const int d = space.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<int>> perms(d);
    for (int k = 0; k < d; ++k) {
        perms[k].resize(count);
        std::iota(perms[k].begin(), perms[k].end(), 0);
        std::shuffle(perms[k].begin(), perms[k].end(), rng);
    }
    for (int j = 0; j < count; ++j) {
        vec p(d);
        for (int k = 0; k < d; ++k) {
            double u = (perms[k][j] + unif(rng)) / count;
            p[k] = space.lo[k] + u * (space.hi[k] - space.lo[k]);
        }
        pts.push_back(p);
    }
    return pts;
}

inline void require_invertible_omega(const mat& omega) {
    Eigen::SelfAdjointEigenSolver<mat> eig(omega);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues()[0] > 1e-12 * std::max(top, 1e-300)))
        throw rank_error("Omega = E[g g'] is singular at theta_hat");
}

} // namespace detail

// sup_t P_n m(theta, t) and the inner solution. value = +inf when the inner
// problem is unbounded (theta violates the qualification condition) or the
// solve failed; inner.status carries the reason.
inline profile_value profile_objective(const divergence_family& f, const moment_model& model,
                                       const weighted_sample& sample, const vec& theta,
                                       const dual_options& opt = {}) {
    detail::require_matching(model, sample);
    model.require_in_space(theta);
    return detail::profile_at(f, model, sample, theta, std::nullopt, opt);
}

// d/dtheta of the profile with t_hat held fixed (envelope theorem):
// -sum_i Q_i (dg/dtheta)(X_i)' t_{1:l}.
inline vec profile_gradient(const divergence_family&, const moment_model& model,
                            const weighted_sample& sample, const vec& theta, const dual_solution& inner) {
    if (!inner.converged()) throw estimation_failed("profile_gradient: inner solve did not converge");
    detail::require_matching(model, sample);
    model.require_in_space(theta);
    return detail::envelope_gradient(model, sample, theta, inner);
}

// Fills V, sigma^2, S, M, W at (theta_hat, t_hat).
inline void fill_variances(const divergence_family& f, const moment_model& model,
                           const weighted_sample& sample, estimation_result& r) {
    const int l = model.dims().l;
    const int d = model.dims().d;
    const int k = l + 1;
    const vec& theta = r.theta_hat;
    const vec& t = r.t_hat;
    const vec lambda = t.tail(l);
    const vec& w = sample.weights();

    r.G_hat = mat::Zero(l, d);
    r.Omega_hat = mat::Zero(l, l);
    r.S_hat = mat::Zero(k + d, k + d);
    r.M_hat = mat::Zero(k + d, k + d);
    double m1 = 0.0, m2 = 0.0;

    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        auto x = sample.point(i);
        vec gi = model.g(x, theta);
        mat ji = model.jacobian(x, theta);
        vec gb(k);
        gb[0] = 1.0;
        gb.tail(l) = gi;
        const double u = t.dot(gb);
        auto [p1, p2] = psi_derivs(f, u);
        const double mi = t[0] - psi(f, u);
        m1 += wi * mi;
        m2 += wi * mi * mi;

        r.G_hat += wi * ji;
        r.Omega_hat += wi * gi * gi.transpose();

        vec du = ji.transpose() * lambda; // d u / d theta
        mat dgb = mat::Zero(k, d);
        dgb.bottomRows(l) = ji;

        vec score(k + d);
        score.head(k) = -p1 * gb;
        score[0] += 1.0;
        score.tail(d) = -p1 * du;
        r.M_hat += wi * score * score.transpose();

        r.S_hat.topLeftCorner(k, k) += -wi * p2 * gb * gb.transpose();
        mat s12 = -p2 * gb * du.transpose() - p1 * dgb;
        r.S_hat.topRightCorner(k, d) += wi * s12;
        r.S_hat.bottomLeftCorner(d, k) += wi * s12.transpose();
        mat s22 = -p2 * du * du.transpose();
        if (p1 != 0.0) s22 -= p1 * model.curvature(x, theta, lambda);
        r.S_hat.bottomRightCorner(d, d) += wi * s22;
    }
    r.sigma2_hat = std::max(0.0, m2 - m1 * m1);

    detail::require_invertible_omega(r.Omega_hat);
    mat info = r.G_hat.transpose() * r.Omega_hat.ldlt().solve(r.G_hat);
    info = 0.5 * (info + info.transpose());
    Eigen::LDLT<mat> ldlt(info);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        (ldlt.vectorD().array() > 1e-12 * std::max(info.trace(), 1e-300)).all()) {
        r.V_hat = ldlt.solve(mat::Identity(d, d));
    } else {
        r.V_hat = info.completeOrthogonalDecomposition().pseudoInverse();
        r.diagnostics.v_pseudo_inverse = true;
    }
    r.V_hat = 0.5 * (r.V_hat + r.V_hat.transpose());

    Eigen::FullPivLU<mat> lu(r.S_hat);
    if (lu.isInvertible()) {
        mat s_inv = lu.inverse();
        r.W_hat = s_inv * r.M_hat * s_inv.transpose();
        r.W_hat = 0.5 * (r.W_hat + r.W_hat.transpose());
        r.diagnostics.w_available = true;
    } else {
        r.W_hat.resize(0, 0);
    }
}

// Minimum phi-divergence estimate. Start 0 minimizes the chi2 profile from
// the centre of Theta; its minimizer seeds the requested family. Remaining
// starts are Latin-hypercube points. Best objective wins; ties go to the
// lowest start index.
inline estimation_result estimate(const divergence_family& f, const moment_model& model,
                                  const weighted_sample& sample, const estimate_options& opt = {}) {
    detail::require_matching(model, sample);
    if (sample.size() <= model.dims().l)
        throw invalid_argument("estimate needs more observations than moment functions");
    if (opt.starts < 1) throw invalid_argument("estimate needs at least one start");

    estimation_result res;
    res.n = sample.size();
    double largest = 0.0;

    std::vector<vec> starts;
    const box& space = model.theta_space();
    {
        const auto chi2 = divergence_family::chi2();
        auto run = detail::minimize_profile(chi2, model, sample, space.midpoint(), opt, largest);
        starts.push_back(run.feasible ? run.theta : space.midpoint());
    }
    for (auto& p : detail::latin_hypercube(space, opt.starts - 1, opt.seed)) starts.push_back(p);

    std::optional<detail::outer_run> best;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        auto run = detail::minimize_profile(f, model, sample, starts[s], opt, largest);
        res.diagnostics.outer_iterations += run.iterations;
        res.diagnostics.starts.push_back(
            {starts[s], run.theta, run.feasible ? run.profile.value : inf, run.feasible, run.iterations});
        if (run.feasible && (!best || run.profile.value < best->profile.value)) {
            best = std::move(run);
            res.diagnostics.best_start = static_cast<int>(s);
        }
    }
    res.diagnostics.largest_finite_profile = largest;
    if (!best) {
        std::string msg = "all " + std::to_string(starts.size()) + " starts infeasible for family " + f.name();
        throw estimation_failed(msg);
    }

    res.theta_hat = best->theta;
    res.inner = best->profile.inner;
    res.t_hat = res.inner.t;
    res.divergence_hat = best->profile.value;
    fill_variances(f, model, sample, res);
    return res;
}

// Pseudo-true quantities (theta*, t*, D_phi(M, P0), sigma^2(theta*)) for a
// finite-support P0, e.g. a fine discretization of a continuous law.
inline estimation_result population_estimate(const divergence_family& f, const moment_model& model,
                                             const weighted_sample& p0, const estimate_options& opt = {}) {
    estimation_result r = estimate(f, model, p0, opt);
    r.population = true;
    return r;
}

// Midpoint discretization of U[lo, hi] with `atoms` equally weighted atoms.
inline weighted_sample discretize_uniform(double lo, double hi, int atoms) {
    if (!(hi > lo) || atoms < 1) throw invalid_argument("discretize_uniform: bad parameters");
    mat p(1, atoms);
    const double h = (hi - lo) / atoms;
    for (int i = 0; i < atoms; ++i) p(0, i) = lo + (i + 0.5) * h;
    return weighted_sample(std::move(p));
}

} // namespace phidiv
