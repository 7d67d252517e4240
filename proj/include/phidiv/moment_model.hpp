#pragma once

// Moment condition models E[g(X, theta)] = 0 and weighted samples.

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phidiv/errors.hpp"

namespace phidiv {

using vec = Eigen::VectorXd;
using mat = Eigen::MatrixXd;

struct model_dims {
    int m = 1; // data dimension
    int d = 1; // parameter dimension
    int l = 1; // number of moment functions
};

// Axis-aligned box standing in for the compact parameter space.
struct box {
    vec lo;
    vec hi;

    static box uniform(int d, double lo, double hi) {
        return {vec::Constant(d, lo), vec::Constant(d, hi)};
    }

    int dim() const { return static_cast<int>(lo.size()); }

    bool contains(const vec& theta) const {
        if (theta.size() != lo.size()) return false;
        for (Eigen::Index k = 0; k < theta.size(); ++k)
            if (!(theta[k] >= lo[k] && theta[k] <= hi[k])) return false;
        return true;
    }

    vec clamp(const vec& theta) const { return theta.cwiseMax(lo).cwiseMin(hi); }

    vec midpoint() const { return 0.5 * (lo + hi); }
};

class moment_model {
public:
    using point = Eigen::Ref<const vec>;
    // g(x, theta) in R^l
    using moment_fn = std::function<vec(const point&, const vec&)>;
    // dg/dtheta in R^{l x d}
    using jacobian_fn = std::function<mat(const point&, const vec&)>;
    // sum_j lambda_j d^2 g_j / dtheta^2 in R^{d x d}
    using curvature_fn = std::function<mat(const point&, const vec&, const vec&)>;

    moment_model(std::string name, model_dims dims, moment_fn g, jacobian_fn jac, box theta_space,
                 curvature_fn curvature = {})
        : name_(std::move(name)), dims_(dims), g_(std::move(g)), jac_(std::move(jac)),
          curvature_(std::move(curvature)), space_(std::move(theta_space)) {
        if (dims_.m < 1 || dims_.d < 1 || dims_.l < 1)
            throw invalid_argument("model dimensions must be positive");
        if (dims_.l < dims_.d)
            throw invalid_argument("model '" + name_ + "' has fewer moments than parameters");
        if (space_.dim() != dims_.d || space_.hi.size() != dims_.d)
            throw invalid_argument("parameter box has wrong dimension");
        if ((space_.lo.array() > space_.hi.array()).any())
            throw invalid_argument("parameter box has lo > hi");
        if (!g_ || !jac_) throw invalid_argument("model needs both g and its jacobian");
    }

    const std::string& name() const { return name_; }
    const model_dims& dims() const { return dims_; }
    const box& theta_space() const { return space_; }
    bool has_curvature() const { return static_cast<bool>(curvature_); }

    vec g(const point& x, const vec& theta) const { return g_(x, theta); }
    mat jacobian(const point& x, const vec& theta) const { return jac_(x, theta); }

    // Second-derivative contraction; central differences of the jacobian
    // when no analytic curvature was registered.
    mat curvature(const point& x, const vec& theta, const vec& lambda) const {
        if (curvature_) return curvature_(x, theta, lambda);
        const int d = dims_.d;
        mat out(d, d);
        for (int k = 0; k < d; ++k) {
            double h = 1e-5 * (1.0 + std::abs(theta[k]));
            vec tp = theta, tm = theta;
            tp[k] += h;
            tm[k] -= h;
            mat djac = (jac_(x, tp) - jac_(x, tm)) / (2.0 * h); // l x d, column k of the hessians
            out.col(k) = djac.transpose() * lambda;
        }
        return 0.5 * (out + out.transpose());
    }

    void require_in_space(const vec& theta) const {
        if (!space_.contains(theta))
            throw parameter_space_error("theta outside the parameter box of model '" + name_ + "'");
    }

private:
    std::string name_;
    model_dims dims_;
    moment_fn g_;
    jacobian_fn jac_;
    curvature_fn curvature_;
    box space_;
};

// Finite-support measure: columns of `points` are the support points,
// `weights` their probabilities. Uniform weights represent P_n.
class weighted_sample {
public:
    weighted_sample() = default;

    explicit weighted_sample(mat points)
        : points_(std::move(points)),
          weights_(vec::Constant(points_.cols(), points_.cols() ? 1.0 / points_.cols() : 0.0)) {}

    weighted_sample(mat points, vec weights) : points_(std::move(points)), weights_(std::move(weights)) {
        if (weights_.size() != points_.cols())
            throw invalid_argument("weights and points disagree in count");
        if ((weights_.array() < 0.0).any() || !weights_.allFinite())
            throw invalid_argument("weights must be finite and nonnegative");
        if (points_.cols() > 0 && std::abs(weights_.sum() - 1.0) > 1e-9)
            throw invalid_argument("weights must sum to one");
    }

    // One-dimensional convenience constructor.
    static weighted_sample from_values(const std::vector<double>& xs) {
        mat p(1, static_cast<Eigen::Index>(xs.size()));
        for (std::size_t i = 0; i < xs.size(); ++i) p(0, static_cast<Eigen::Index>(i)) = xs[i];
        return weighted_sample(std::move(p));
    }

    Eigen::Index size() const { return points_.cols(); }
    Eigen::Index dim() const { return points_.rows(); }
    bool empty() const { return points_.cols() == 0; }

    const mat& points() const { return points_; }
    const vec& weights() const { return weights_; }
    auto point(Eigen::Index i) const { return points_.col(i); }

    // Same points, rows permuted.
    weighted_sample permuted(const std::vector<Eigen::Index>& order) const {
        mat p(points_.rows(), points_.cols());
        vec w(weights_.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            p.col(static_cast<Eigen::Index>(k)) = points_.col(order[k]);
            w[static_cast<Eigen::Index>(k)] = weights_[order[k]];
        }
        return weighted_sample(std::move(p), std::move(w));
    }

private:
    mat points_;
    vec weights_;
};

// (1, g(x, theta)) in R^{1+l}.
inline vec gbar(const moment_model& model, const moment_model::point& x, const vec& theta) {
    model.require_in_space(theta);
    vec out(model.dims().l + 1);
    out[0] = 1.0;
    out.tail(model.dims().l) = model.g(x, theta);
    return out;
}

// n x (1+l) matrix whose row i is gbar(X_i, theta).
inline mat gbar_matrix(const moment_model& model, const weighted_sample& sample, const vec& theta) {
    model.require_in_space(theta);
    const int l = model.dims().l;
    mat out(sample.size(), l + 1);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        out(i, 0) = 1.0;
        out.row(i).tail(l) = model.g(sample.point(i), theta).transpose();
    }
    return out;
}

// sum_i w_i g(X_i, theta)
inline vec moment_mean(const moment_model& model, const weighted_sample& sample, const vec& theta) {
    if (sample.empty()) throw invalid_argument("moment_mean: empty sample");
    model.require_in_space(theta);
    vec acc = vec::Zero(model.dims().l);
    for (Eigen::Index i = 0; i < sample.size(); ++i)
        acc += sample.weights()[i] * model.g(sample.point(i), theta);
    return acc;
}

struct builtin_options {
    int m = 1;            // data dimension for the vector mean model
    double theta_lo = -100.0;
    double theta_hi = 100.0;
};

// g(x, theta) = x - theta, theta in R^m. Exactly identified.
inline moment_model mean_model(const builtin_options& opt = {}) {
    const int m = opt.m;
    return moment_model(
        "mean", {m, m, m},
        [](const moment_model::point& x, const vec& theta) -> vec { return x - theta; },
        [m](const moment_model::point&, const vec&) -> mat { return -mat::Identity(m, m); },
        box::uniform(m, opt.theta_lo, opt.theta_hi),
        [m](const moment_model::point&, const vec&, const vec&) -> mat { return mat::Zero(m, m); });
}

// g(x, theta) = (x, x^2 - theta): zero mean with unknown second moment.
inline moment_model mean_variance_model(const builtin_options& opt = {}) {
    return moment_model(
        "mean-variance", {1, 1, 2},
        [](const moment_model::point& x, const vec& theta) -> vec {
            vec out(2);
            out << x[0], x[0] * x[0] - theta[0];
            return out;
        },
        [](const moment_model::point&, const vec&) -> mat {
            mat j(2, 1);
            j << 0.0, -1.0;
            return j;
        },
        box::uniform(1, opt.theta_lo, opt.theta_hi),
        [](const moment_model::point&, const vec&, const vec&) -> mat { return mat::Zero(1, 1); });
}

using model_factory = std::function<moment_model(const builtin_options&)>;

namespace detail {

struct model_registry {
    std::mutex mu;
    std::map<std::string, model_factory> factories{
        {"mean", [](const builtin_options& o) { return mean_model(o); }},
        {"mean-variance", [](const builtin_options& o) { return mean_variance_model(o); }},
    };

    static model_registry& instance() {
        static model_registry r;
        return r;
    }
};

} // namespace detail

// Registers a user model under `name`; later lookups through builtin_model
// (and hence the CLI / config files) resolve it.
inline void register_model(const std::string& name, model_factory factory) {
    auto& reg = detail::model_registry::instance();
    std::lock_guard lock(reg.mu);
    reg.factories[name] = std::move(factory);
}

inline std::vector<std::string> registered_models() {
    auto& reg = detail::model_registry::instance();
    std::lock_guard lock(reg.mu);
    std::vector<std::string> names;
    for (const auto& [k, v] : reg.factories) names.push_back(k);
    return names;
}

inline moment_model builtin_model(const std::string& name, const builtin_options& opt = {}) {
    model_factory factory;
    {
        auto& reg = detail::model_registry::instance();
        std::lock_guard lock(reg.mu);
        auto it = reg.factories.find(name);
        if (it == reg.factories.end()) throw invalid_argument("unknown model '" + name + "'");
        factory = it->second;
    }
    return factory(opt);
}

} // namespace phidiv
