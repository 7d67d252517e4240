#pragma once

// Tests, confidence regions, power approximation and sample-size planning.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "phidiv/distributions.hpp"
#include "phidiv/estimator.hpp"

namespace phidiv {

enum class test_kind { model, simple_theta, composite_theta };

inline const char* to_string(test_kind k) {
    switch (k) {
    case test_kind::model: return "model-test";
    case test_kind::simple_theta: return "simple-theta-test";
    case test_kind::composite_theta: return "composite-theta-test";
    }
    return "unknown";
}

struct test_report {
    test_kind kind = test_kind::model;
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    double critical_value = 0.0;
    double alpha = 0.05;
    bool reject = false;
    std::optional<double> sigma2;
    std::optional<vec> theta;      // tested value (theta tests)
    std::optional<vec> theta_hat;  // unrestricted estimate, when computed
    double divergence = 0.0;       // the divergence estimate behind the statistic
    // Set when the inner dual was unbounded or the estimate failed; the test
    // then rejects with statistic +inf.
    bool boundary = false;
    std::string note;
};

namespace detail {

inline void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_argument("alpha must lie in (0, 1)");
}

inline void decide(test_report& r) {
    r.critical_value = chi2_quantile(1.0 - r.alpha, r.df);
    if (r.boundary) {
        r.statistic = inf;
        r.p_value = 0.0;
        r.reject = true;
        return;
    }
    r.p_value = 1.0 - chi2_cdf(std::max(r.statistic, 0.0), r.df);
    r.reject = r.statistic > r.critical_value;
}

inline double sample_n(const weighted_sample& s) { return static_cast<double>(s.size()); }

inline double m_variance(const divergence_family& f, const mat& rows, const vec& w, const vec& t) {
    vec u = rows * t;
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        double mi = t[0] - psi(f, u[i]);
        m1 += w[i] * mi;
        m2 += w[i] * mi * mi;
    }
    return std::max(0.0, m2 - m1 * m1);
}

} // namespace detail

// H0: P0 in M. Statistic 2n D_hat(M, P0) ~ chi2(l - d).
inline test_report test_model(const divergence_family& f, const moment_model& model,
                              const weighted_sample& sample, double alpha,
                              const estimate_options& opt = {}) {
    detail::require_alpha(alpha);
    const auto& dims = model.dims();
    if (dims.l <= dims.d)
        throw not_applicable("model test needs l > d (over-identification); the statistic is identically 0");
    test_report r;
    r.kind = test_kind::model;
    r.alpha = alpha;
    r.df = dims.l - dims.d;
    try {
        estimation_result est = estimate(f, model, sample, opt);
        r.divergence = est.divergence_hat;
        r.statistic = 2.0 * detail::sample_n(sample) * est.divergence_hat;
        r.sigma2 = est.sigma2_hat;
        r.theta_hat = est.theta_hat;
    } catch (const estimation_failed& e) {
        r.boundary = true;
        r.divergence = inf;
        r.note = std::string("estimation failed, rejecting: ") + e.what();
    }
    detail::decide(r);
    return r;
}

// H0: P0 in M_theta. Statistic 2n D_hat(M_theta, P0) ~ chi2(l).
inline test_report test_theta_simple(const divergence_family& f, const moment_model& model,
                                     const weighted_sample& sample, const vec& theta, double alpha,
                                     const dual_options& opt = {}) {
    detail::require_alpha(alpha);
    detail::require_matching(model, sample);
    model.require_in_space(theta);
    test_report r;
    r.kind = test_kind::simple_theta;
    r.alpha = alpha;
    r.df = model.dims().l;
    r.theta = theta;
    mat rows = gbar_matrix(model, sample, theta);
    dual_solution sol = solve_inner_rows(f, rows, sample.weights(), std::nullopt, opt);
    if (!sol.converged()) {
        r.boundary = true;
        r.divergence = inf;
        r.note = std::string("inner dual ") + to_string(sol.status) + " at theta, rejecting";
    } else {
        r.divergence = sol.objective;
        r.statistic = 2.0 * detail::sample_n(sample) * sol.objective;
        r.sigma2 = detail::m_variance(f, rows, sample.weights(), sol.t);
    }
    detail::decide(r);
    return r;
}

// Statistic 2n [D_hat(M_theta) - inf_theta D_hat(M_theta)] ~ chi2(d), given an
// unrestricted estimate.
inline test_report test_theta_composite(const divergence_family& f, const moment_model& model,
                                        const weighted_sample& sample, const vec& theta, double alpha,
                                        const estimation_result& unrestricted,
                                        const dual_options& opt = {}) {
    detail::require_alpha(alpha);
    detail::require_matching(model, sample);
    model.require_in_space(theta);
    test_report r;
    r.kind = test_kind::composite_theta;
    r.alpha = alpha;
    r.df = model.dims().d;
    r.theta = theta;
    r.theta_hat = unrestricted.theta_hat;
    mat rows = gbar_matrix(model, sample, theta);
    dual_solution sol = solve_inner_rows(f, rows, sample.weights(), std::nullopt, opt);
    if (!sol.converged()) {
        r.boundary = true;
        r.divergence = inf;
        r.note = std::string("inner dual ") + to_string(sol.status) + " at theta, rejecting";
    } else {
        // The restricted value bounds the infimum from above.
        const double inf_d = std::min(unrestricted.divergence_hat, sol.objective);
        r.divergence = sol.objective - inf_d;
        r.statistic = 2.0 * detail::sample_n(sample) * r.divergence;
        r.sigma2 = detail::m_variance(f, rows, sample.weights(), sol.t);
    }
    detail::decide(r);
    return r;
}

inline test_report test_theta_composite(const divergence_family& f, const moment_model& model,
                                        const weighted_sample& sample, const vec& theta, double alpha,
                                        const estimate_options& opt = {}) {
    estimation_result est = estimate(f, model, sample, opt);
    return test_theta_composite(f, model, sample, theta, alpha, est, opt.inner);
}

struct axis_grid {
    double lo = 0.0;
    double hi = 1.0;
    int steps = 101; // number of grid points, endpoints included

    double at(int k) const { return steps == 1 ? lo : lo + (hi - lo) * k / (steps - 1); }
};

struct confidence_result {
    double alpha = 0.05;
    int df = 0;
    double critical_value = 0.0;
    vec theta_hat;
    double divergence_hat = 0.0;
    // Grid points (d <= 2) with their statistic 2n S_n(theta).
    std::vector<vec> grid;
    std::vector<double> statistic;
    std::vector<bool> inside;
    // Per-coordinate [min, max] over the accepted points; for d > 2 the
    // profile interval of each coordinate.
    vec lower;
    vec upper;
    bool empty = false;

    std::vector<vec> region() const {
        std::vector<vec> out;
        for (std::size_t k = 0; k < grid.size(); ++k)
            if (inside[k]) out.push_back(grid[k]);
        return out;
    }
};

// { theta in grid : 2n S_n(theta) <= q_{1-alpha}(chi2(d)) }. For d <= 2 the
// full grid is scanned; for d > 2 each coordinate gets a profile interval
// (other coordinates re-optimized, chi2(1) calibration).
inline confidence_result confidence_region(const divergence_family& f, const moment_model& model,
                                           const weighted_sample& sample, double alpha,
                                           const std::vector<axis_grid>& grid,
                                           const estimate_options& opt = {}) {
    detail::require_alpha(alpha);
    const int d = model.dims().d;
    if (static_cast<int>(grid.size()) != d) throw invalid_argument("confidence grid needs one axis per parameter");
    for (const auto& ax : grid)
        if (ax.steps < 1 || !(ax.hi >= ax.lo)) throw invalid_argument("bad confidence grid axis");

    estimation_result est = estimate(f, model, sample, opt);
    confidence_result cr;
    cr.alpha = alpha;
    cr.theta_hat = est.theta_hat;
    cr.divergence_hat = est.divergence_hat;
    const double two_n = 2.0 * detail::sample_n(sample);
    const box& space = model.theta_space();
    cr.lower = vec::Constant(d, inf);
    cr.upper = vec::Constant(d, -inf);

    if (d <= 2) {
        cr.df = d;
        cr.critical_value = chi2_quantile(1.0 - alpha, d);
        double inf_d = est.divergence_hat;
        std::vector<double> values;
        const int n0 = grid[0].steps;
        const int n1 = d == 2 ? grid[1].steps : 1;
        for (int a = 0; a < n0; ++a) {
            for (int b = 0; b < n1; ++b) {
                vec th(d);
                th[0] = grid[0].at(a);
                if (d == 2) th[1] = grid[1].at(b);
                cr.grid.push_back(th);
                double v = inf;
                if (space.contains(th)) {
                    mat rows = gbar_matrix(model, sample, th);
                    if (rows.allFinite()) {
                        auto sol = solve_inner_rows(f, rows, sample.weights(), std::nullopt, opt.inner);
                        if (sol.converged()) v = sol.objective;
                    }
                }
                values.push_back(v);
                inf_d = std::min(inf_d, v);
            }
        }
        for (std::size_t k = 0; k < values.size(); ++k) {
            double stat = two_n * (values[k] - inf_d);
            bool in = std::isfinite(stat) && stat <= cr.critical_value;
            cr.statistic.push_back(stat);
            cr.inside.push_back(in);
            if (in) {
                cr.lower = cr.lower.cwiseMin(cr.grid[k]);
                cr.upper = cr.upper.cwiseMax(cr.grid[k]);
            }
        }
    } else {
        cr.df = 1;
        cr.critical_value = chi2_quantile(1.0 - alpha, 1);
        for (int k = 0; k < d; ++k) {
            for (int a = 0; a < grid[k].steps; ++a) {
                const double v = grid[k].at(a);
                if (v < space.lo[k] || v > space.hi[k]) continue;
                box pinned = space;
                pinned.lo[k] = v;
                pinned.hi[k] = v;
                moment_model restricted(model.name(), model.dims(),
                                        [&model](const moment_model::point& x, const vec& th) { return model.g(x, th); },
                                        [&model](const moment_model::point& x, const vec& th) { return model.jacobian(x, th); },
                                        pinned,
                                        [&model](const moment_model::point& x, const vec& th, const vec& lam) {
                                            return model.curvature(x, th, lam);
                                        });
                double dv = inf;
                try {
                    dv = estimate(f, restricted, sample, opt).divergence_hat;
                } catch (const estimation_failed&) {
                }
                double stat = two_n * (dv - est.divergence_hat);
                vec th = est.theta_hat;
                th[k] = v;
                cr.grid.push_back(th);
                cr.statistic.push_back(stat);
                bool in = std::isfinite(stat) && stat <= cr.critical_value;
                cr.inside.push_back(in);
                if (in) {
                    cr.lower[k] = std::min(cr.lower[k], v);
                    cr.upper[k] = std::max(cr.upper[k], v);
                }
            }
        }
    }
    cr.empty = std::none_of(cr.inside.begin(), cr.inside.end(), [](bool b) { return b; });
    return cr;
}

// beta ~ 1 - Phi( sqrt(n)/sigma * (q_{1-alpha}(df)/(2n) - D) )
inline double power_approx(double n, double alpha, int df, double divergence, double sigma) {
    detail::require_alpha(alpha);
    if (!(sigma > 0.0)) throw invalid_argument("power_approx: sigma must be positive");
    if (!(divergence >= 0.0)) throw invalid_argument("power_approx: divergence must be nonnegative");
    if (!(n >= 1.0)) throw invalid_argument("power_approx: n must be >= 1");
    const double q = chi2_quantile(1.0 - alpha, df);
    return 1.0 - normal_cdf(std::sqrt(n) / sigma * (q / (2.0 * n) - divergence));
}

// Real root n0 of beta = power_approx(n); the root on the side of
// q/(2D) that matches the sign of Phi^{-1}(1 - beta).
inline double sample_size_root(double beta, double alpha, int df, double divergence, double sigma) {
    detail::require_alpha(alpha);
    if (!(beta > 0.0 && beta < 1.0)) throw invalid_argument("sample_size: beta must lie in (0, 1)");
    if (!(divergence > 0.0))
        throw invalid_argument("sample_size: divergence must be positive (no n has power against a null point)");
    if (!(sigma > 0.0)) throw invalid_argument("sample_size: sigma must be positive");
    const double q = chi2_quantile(1.0 - alpha, df);
    const double z = normal_quantile(1.0 - beta);
    const double a = sigma * sigma * z * z;
    const double b = q * divergence;
    const double disc = std::sqrt(a * (a + 2.0 * b));
    const double root = beta > 0.5 ? (a + b) + disc : (a + b) - disc;
    return root / (2.0 * divergence * divergence);
}

inline long long sample_size(double beta, double alpha, int df, double divergence, double sigma) {
    return static_cast<long long>(std::floor(sample_size_root(beta, alpha, df, divergence, sigma))) + 1;
}

} // namespace phidiv
