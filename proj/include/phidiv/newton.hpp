#pragma once

// Damped Newton ascent for smooth concave objectives on an open convex set.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>

#include <Eigen/Dense>

namespace phidiv {

template <class P>
concept concave_problem = requires(const P& p, const Eigen::VectorXd& x, Eigen::VectorXd& g,
                                   Eigen::MatrixXd& h) {
    { p.feasible(x) } -> std::convertible_to<bool>;
    { p.value(x) } -> std::convertible_to<double>;
    p.derivatives(x, g, h);
};

enum class newton_status { converged, unbounded, max_iterations, non_finite };

struct newton_options {
    // Converged when the Newton decrement g'(-H)^{-1}g / 2, an estimate of the
    // remaining ascent, is at most tol * (1 + |value|).
    double tol = 1e-9;
    int max_iterations = 200;
    double armijo = 1e-4;
    double unbounded_value = 1e12;
    double unbounded_norm = 1e10;
    // Unbounded when the accepted step norm grew over this many consecutive
    // steps by at least `growth_factor` in total.
    int growth_window = 5;
    double growth_factor = 10.0;
};

struct newton_result {
    Eigen::VectorXd x;
    double value = -std::numeric_limits<double>::infinity();
    newton_status status = newton_status::max_iterations;
    int iterations = 0;
    double grad_norm = std::numeric_limits<double>::infinity();
    int backtracks = 0;
    int regularizations = 0;
    bool stalled = false;
};

namespace detail {

// Solves (-H + ridge I) d = g. Ridge starts at zero and escalates from
// 1e-12 * trace until the factorization is positive definite.
inline Eigen::VectorXd ascent_direction(const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad,
                                        int& regularizations) {
    Eigen::MatrixXd neg = -hess;
    neg = 0.5 * (neg + neg.transpose());
    const double trace = std::max(neg.trace(), 1e-300);
    double ridge = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
        Eigen::MatrixXd a = neg;
        if (ridge > 0.0) a.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            (ldlt.vectorD().array() > 1e-14 * trace).all()) {
            Eigen::VectorXd d = ldlt.solve(grad);
            if (d.allFinite()) return d;
        }
        ridge = ridge == 0.0 ? 1e-12 * trace : ridge * 100.0;
        ++regularizations;
    }
    return grad;
}

} // namespace detail

template <concave_problem P>
newton_result maximize_concave(const P& problem, Eigen::VectorXd x, const newton_options& opt = {}) {
    newton_result res;
    const auto k = x.size();
    Eigen::VectorXd grad(k);
    Eigen::MatrixXd hess(k, k);

    double value = problem.value(x);
    if (!std::isfinite(value)) {
        res.x = x;
        res.value = value;
        res.status = newton_status::non_finite;
        return res;
    }

    double prev_step = 0.0;
    double window_start = 0.0;
    int growing = 0;
    bool converged = false;

    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it;
        problem.derivatives(x, grad, hess);
        if (!grad.allFinite() || !hess.allFinite()) {
            res.status = newton_status::non_finite;
            break;
        }
        res.grad_norm = grad.lpNorm<Eigen::Infinity>();
        const double scale = 1.0 + std::abs(value);

        Eigen::VectorXd dir = detail::ascent_direction(hess, grad, res.regularizations);
        double slope = grad.dot(dir);
        if (!(slope > 0.0)) {
            dir = grad;
            slope = grad.squaredNorm();
        }
        if (converged || 0.5 * slope <= opt.tol * scale) {
            if (converged) break;
            converged = true;
            // One polishing step below; a failed line search just stops.
        }
        if (slope == 0.0) break;

        const double noise = 8.0 * std::numeric_limits<double>::epsilon() * scale;
        double s = 1.0;
        bool accepted = false;
        Eigen::VectorXd trial(k);
        double trial_value = value;
        for (int bt = 0; bt < 80; ++bt) {
            trial = x + s * dir;
            if (problem.feasible(trial)) {
                trial_value = problem.value(trial);
                if (std::isfinite(trial_value) &&
                    trial_value >= value + opt.armijo * s * slope - noise) {
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
            ++res.backtracks;
        }
        if (!accepted) {
            if (!converged) res.stalled = true;
            break;
        }

        const double step = (trial - x).norm();
        x = trial;
        value = trial_value;

        if (value > opt.unbounded_value || x.lpNorm<Eigen::Infinity>() > opt.unbounded_norm) {
            res.status = newton_status::unbounded;
            res.x = x;
            res.value = value;
            return res;
        }
        if (prev_step > 0.0 && step > prev_step) {
            if (growing == 0) window_start = prev_step;
            ++growing;
            if (growing >= opt.growth_window && step >= opt.growth_factor * window_start) {
                res.status = newton_status::unbounded;
                res.x = x;
                res.value = value;
                return res;
            }
        } else {
            growing = 0;
        }
        prev_step = step;
    }

    res.x = x;
    res.value = value;
    if (converged) {
        problem.derivatives(x, grad, hess);
        res.grad_norm = grad.lpNorm<Eigen::Infinity>();
        res.status = newton_status::converged;
    } else if (res.status != newton_status::non_finite) {
        res.status = newton_status::max_iterations;
    }
    return res;
}

} // namespace phidiv
