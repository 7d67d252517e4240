#pragma once

// Inner problem: for fixed theta, maximize over t in R^{1+l}
//
//   P_n m(theta, t) = sum_i w_i [ t_0 - psi(t' gbar(X_i, theta)) ]
//
// over Lambda_theta^(n) = { t : a* < t' gbar(X_i, theta) < b* for all i }.
// At the optimum the projection of the sample on M_theta has weights
// Q_i = w_i psi'(t' gbar_i).

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "phidiv/divergence.hpp"
#include "phidiv/errors.hpp"
#include "phidiv/moment_model.hpp"
#include "phidiv/newton.hpp"

namespace phidiv {

enum class dual_status { converged, converged_boundary, unbounded, infeasible, max_iterations };

inline const char* to_string(dual_status s) {
    switch (s) {
    case dual_status::converged: return "converged";
    case dual_status::converged_boundary: return "converged-boundary";
    case dual_status::unbounded: return "unbounded";
    case dual_status::infeasible: return "infeasible";
    case dual_status::max_iterations: return "max-iterations";
    }
    return "unknown";
}

struct dual_diagnostics {
    int iterations = 0;
    double grad_norm = 0.0;
    int backtracks = 0;
    int regularizations = 0;
    bool warm_start = false;
    bool stalled = false;
};

struct dual_solution {
    vec t;              // (t_0, t_1, ..., t_l)
    double objective = 0.0;
    vec weights;        // projection weights Q_i, possibly negative
    dual_status status = dual_status::max_iterations;
    dual_diagnostics diagnostics;

    bool converged() const { return status == dual_status::converged; }
};

struct dual_options {
    newton_options newton{};
    // Absolute margin kept from finite endpoints of dom psi.
    double margin = 1e-10;
    // Converged solutions with some t'gbar_i this close to a finite endpoint
    // are reported as converged-boundary.
    double boundary_tol = 1e-7;
    bool chi2_warm_start = true;
};

namespace detail {

inline bool strictly_feasible(const interval& dom, const vec& u, double margin) {
    const double lo = std::isfinite(dom.lo) ? dom.lo + margin : -inf;
    const double hi = std::isfinite(dom.hi) ? dom.hi - margin : inf;
    for (Eigen::Index i = 0; i < u.size(); ++i)
        if (!(u[i] >= lo && u[i] <= hi)) return false;
    return true;
}

// The inner dual over a precomputed n x (1+l) matrix of gbar rows.
class dual_problem {
public:
    dual_problem(const divergence_family& f, const mat& gbar_rows, const vec& w, double margin)
        : f_(f), rows_(gbar_rows), w_(w), dom_(f.psi_domain()), margin_(margin) {}

    bool feasible(const vec& t) const { return strictly_feasible(dom_, rows_ * t, margin_); }

    double value(const vec& t) const {
        vec u = rows_ * t;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            if (w_[i] == 0.0) continue;
            double p = psi(f_, u[i]);
            if (p == inf) return -inf;
            acc += w_[i] * p;
        }
        return t[0] - acc;
    }

    void derivatives(const vec& t, vec& grad, mat& hess) const {
        vec u = rows_ * t;
        vec d1(u.size()), d2(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            auto [p1, p2] = psi_derivs(f_, u[i]);
            d1[i] = w_[i] * p1;
            d2[i] = w_[i] * p2;
        }
        grad = -rows_.transpose() * d1;
        grad[0] += 1.0;
        hess = -(rows_.transpose() * d2.asDiagonal() * rows_);
    }

private:
    const divergence_family& f_;
    const mat& rows_;
    const vec& w_;
    interval dom_;
    double margin_;
};

// Reduced empirical-likelihood dual: maximize sum_i w_i log(1 + lambda' g_i).
class el_problem {
public:
    el_problem(const mat& g_rows, const vec& w, double margin) : rows_(g_rows), w_(w), margin_(margin) {}

    bool feasible(const vec& lambda) const {
        vec u = rows_ * lambda;
        return (u.array() >= -1.0 + margin_).all();
    }

    double value(const vec& lambda) const {
        vec u = rows_ * lambda;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            if (w_[i] == 0.0) continue;
            if (!(u[i] > -1.0)) return -inf;
            acc += w_[i] * std::log1p(u[i]);
        }
        return acc;
    }

    void derivatives(const vec& lambda, vec& grad, mat& hess) const {
        vec r = (1.0 + (rows_ * lambda).array()).inverse().matrix();
        vec wr = w_.cwiseProduct(r);
        grad = rows_.transpose() * wr;
        hess = -(rows_.transpose() * wr.cwiseProduct(r).asDiagonal() * rows_);
    }

private:
    const mat& rows_;
    const vec& w_;
    double margin_;
};

inline void finish_solution(const divergence_family& f, const mat& rows, const vec& w,
                            const dual_options& opt, dual_solution& sol) {
    const interval dom = f.psi_domain();
    vec u = rows * sol.t;
    sol.weights.resize(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) sol.weights[i] = w[i] * phi_prime_inverse(f, u[i]);
    if (sol.status == dual_status::converged) {
        const double lo = std::isfinite(dom.lo) ? dom.lo : -inf;
        const double hi = std::isfinite(dom.hi) ? dom.hi : inf;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            if (u[i] - lo < opt.boundary_tol * (1.0 + std::abs(lo)) ||
                hi - u[i] < opt.boundary_tol * (1.0 + std::abs(hi))) {
                sol.status = dual_status::converged_boundary;
                break;
            }
        }
    }
}

inline dual_status from_newton(newton_status s) {
    switch (s) {
    case newton_status::converged: return dual_status::converged;
    case newton_status::unbounded: return dual_status::unbounded;
    case newton_status::non_finite: return dual_status::infeasible;
    case newton_status::max_iterations: return dual_status::max_iterations;
    }
    return dual_status::max_iterations;
}

inline void require_matching(const moment_model& model, const weighted_sample& sample) {
    if (sample.empty()) throw invalid_argument("empty sample");
    if (sample.dim() != model.dims().m)
        throw invalid_argument("sample dimension does not match model '" + model.name() + "'");
}

// Gram matrix sum_i w_i gbar_i gbar_i' and the explicit chi2 dual.
inline vec chi2_dual_vector(const mat& rows, const vec& w) {
    mat gram = rows.transpose() * w.asDiagonal() * rows;
    vec rhs = -(rows.transpose() * w);
    rhs[0] += 1.0;
    Eigen::SelfAdjointEigenSolver<mat> eig(gram);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues()[0] > 1e-12 * std::max(top, 1e-300))) {
        vec c = eig.eigenvectors().col(0);
        std::ostringstream msg;
        msg << "singular Gram matrix: the combination " << c[0] << "*1";
        for (Eigen::Index j = 1; j < c.size(); ++j) msg << " + " << c[j] << "*g" << j;
        msg << " vanishes on the sample";
        throw rank_error(msg.str());
    }
    return eig.eigenvectors() *
           (eig.eigenvectors().transpose() * rhs).cwiseQuotient(eig.eigenvalues());
}

} // namespace detail

// Sum_i w_i [t_0 - psi(t' gbar_i)]; -inf when some t' gbar_i leaves dom psi.
inline double dual_objective(const divergence_family& f, const moment_model& model,
                             const weighted_sample& sample, const vec& theta, const vec& t) {
    detail::require_matching(model, sample);
    mat rows = gbar_matrix(model, sample, theta);
    return detail::dual_problem(f, rows, sample.weights(), 0.0).value(t);
}

struct dual_derivatives {
    vec gradient;
    mat hessian;
};

inline dual_derivatives dual_grad_hess(const divergence_family& f, const moment_model& model,
                                       const weighted_sample& sample, const vec& theta, const vec& t) {
    detail::require_matching(model, sample);
    mat rows = gbar_matrix(model, sample, theta);
    vec u = rows * t;
    if (!detail::strictly_feasible(f.psi_domain(), u, 0.0) ||
        !(u.array() > f.psi_domain().lo).all() || !(u.array() < f.psi_domain().hi).all())
        throw domain_error("dual_grad_hess: t is not strictly feasible");
    dual_derivatives out;
    detail::dual_problem(f, rows, sample.weights(), 0.0).derivatives(t, out.gradient, out.hessian);
    return out;
}

// Explicit solution for the chi2 family: psi'(u) = 1 + u makes the first
// order system linear, (sum w gbar gbar') t = e_0 - sum w gbar.
inline dual_solution chi2_closed_form_rows(const mat& rows, const vec& w) {
    dual_solution sol;
    sol.t = detail::chi2_dual_vector(rows, w);
    const auto f = divergence_family::chi2();
    sol.objective = detail::dual_problem(f, rows, w, 0.0).value(sol.t);
    sol.status = dual_status::converged;
    detail::finish_solution(f, rows, w, {}, sol);
    return sol;
}

inline dual_solution chi2_closed_form(const moment_model& model, const weighted_sample& sample,
                                      const vec& theta) {
    detail::require_matching(model, sample);
    return chi2_closed_form_rows(gbar_matrix(model, sample, theta), sample.weights());
}

// Core inner solve on precomputed gbar rows.
inline dual_solution solve_inner_rows(const divergence_family& f, const mat& rows, const vec& w,
                                      const std::optional<vec>& init = std::nullopt,
                                      const dual_options& opt = {}) {
    const auto k = rows.cols();
    const interval dom = f.psi_domain();
    vec start = vec::Zero(k);
    bool warm = false;
    if (init) {
        if (init->size() != k) throw invalid_argument("initial dual vector has wrong size");
        start = *init;
        for (int s = 0; s < 60 && !detail::strictly_feasible(dom, rows * start, opt.margin); ++s)
            start *= 0.5;
        if (!detail::strictly_feasible(dom, rows * start, opt.margin)) start.setZero();
        warm = true;
    } else if (opt.chi2_warm_start) {
        try {
            vec c = detail::chi2_dual_vector(rows, w);
            for (int s = 0; s < 60 && !detail::strictly_feasible(dom, rows * c, opt.margin); ++s)
                c *= 0.5;
            if (detail::strictly_feasible(dom, rows * c, opt.margin)) {
                // Keep whichever of the warm start and 0 is better.
                detail::dual_problem p(f, rows, w, opt.margin);
                if (p.value(c) >= p.value(start)) {
                    start = c;
                    warm = true;
                }
            }
        } catch (const rank_error&) {
            // fall back to t = 0
        }
    }

    detail::dual_problem problem(f, rows, w, opt.margin);
    newton_result nr = maximize_concave(problem, start, opt.newton);

    dual_solution sol;
    sol.t = nr.x;
    sol.objective = nr.value;
    sol.status = detail::from_newton(nr.status);
    sol.diagnostics = {nr.iterations, nr.grad_norm, nr.backtracks, nr.regularizations, warm, nr.stalled};
    if (sol.status == dual_status::unbounded) sol.objective = inf;
    if (sol.status == dual_status::converged || sol.status == dual_status::max_iterations)
        detail::finish_solution(f, rows, w, opt, sol);
    return sol;
}

inline dual_solution solve_inner(const divergence_family& f, const moment_model& model,
                                 const weighted_sample& sample, const vec& theta,
                                 const std::optional<vec>& init = std::nullopt,
                                 const dual_options& opt = {}) {
    detail::require_matching(model, sample);
    mat rows = gbar_matrix(model, sample, theta);
    if (!rows.allFinite()) {
        dual_solution sol;
        sol.t = vec::Zero(rows.cols());
        sol.status = dual_status::infeasible;
        return sol;
    }
    return solve_inner_rows(f, rows, sample.weights(), init, opt);
}

// Empirical likelihood with t_0 eliminated: maximize
// sum_i w_i log(1 + lambda' g_i) subject to 1 + lambda' g_i > 0.
// The returned solution uses the full KLm parameterization,
// t = (0, -lambda), so its objective and weights match solve_inner(KLm).
inline dual_solution el_reduced_solve_rows(const mat& rows, const vec& w, const dual_options& opt = {}) {
    const auto l = rows.cols() - 1;
    mat g = rows.rightCols(l);
    detail::el_problem problem(g, w, opt.margin);
    newton_result nr = maximize_concave(problem, vec::Zero(l), opt.newton);

    dual_solution sol;
    sol.t = vec::Zero(l + 1);
    sol.t.tail(l) = -nr.x;
    sol.objective = nr.status == newton_status::unbounded ? inf : nr.value;
    sol.status = detail::from_newton(nr.status);
    sol.diagnostics = {nr.iterations, nr.grad_norm, nr.backtracks, nr.regularizations, false, nr.stalled};
    if (sol.status == dual_status::converged || sol.status == dual_status::max_iterations)
        detail::finish_solution(divergence_family::klm(), rows, w, opt, sol);
    return sol;
}

inline dual_solution el_reduced_solve(const moment_model& model, const weighted_sample& sample,
                                      const vec& theta, const dual_options& opt = {}) {
    detail::require_matching(model, sample);
    return el_reduced_solve_rows(gbar_matrix(model, sample, theta), sample.weights(), opt);
}

} // namespace phidiv
