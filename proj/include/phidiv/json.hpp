#pragma once

// JSON views of solver, estimator and test results (nlohmann/json).
// Non-finite reals are written as the strings "inf", "-inf" and "nan".

#include <json.hpp>

#include "phidiv/dual_solver.hpp"
#include "phidiv/estimator.hpp"
#include "phidiv/inference.hpp"

namespace phidiv {

using json = nlohmann::ordered_json;

inline json real_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline json to_json(const vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(real_json(v[i]));
    return a;
}

inline json to_json(const mat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(real_json(m(i, j)));
        a.push_back(std::move(row));
    }
    return a;
}

inline json to_json(const dual_diagnostics& d) {
    return {{"iterations", d.iterations},
            {"gradient_norm", real_json(d.grad_norm)},
            {"backtracks", d.backtracks},
            {"regularizations", d.regularizations},
            {"warm_start", d.warm_start},
            {"stalled", d.stalled}};
}

inline json to_json(const dual_solution& s, bool with_weights = false) {
    json j = {{"status", to_string(s.status)},
              {"t", to_json(s.t)},
              {"objective", real_json(s.objective)},
              {"diagnostics", to_json(s.diagnostics)}};
    if (with_weights) j["weights"] = to_json(s.weights);
    return j;
}

inline json to_json(const estimation_result& r, bool verbose = false) {
    json j = {{"theta_hat", to_json(r.theta_hat)},
              {"divergence_hat", real_json(r.divergence_hat)},
              {"standard_errors", to_json(r.standard_errors())},
              {"sigma2_hat", real_json(r.sigma2_hat)},
              {"V_hat", to_json(r.V_hat)},
              {"t_hat", to_json(r.t_hat)},
              {"n", r.n},
              {"population", r.population}};
    if (r.W_hat.size() > 0) j["W_hat"] = to_json(r.W_hat);
    json starts = json::array();
    for (const auto& s : r.diagnostics.starts)
        starts.push_back({{"start", to_json(s.start)},
                          {"theta", to_json(s.theta)},
                          {"objective", real_json(s.objective)},
                          {"feasible", s.feasible},
                          {"iterations", s.iterations}});
    j["diagnostics"] = {{"best_start", r.diagnostics.best_start},
                        {"outer_iterations", r.diagnostics.outer_iterations},
                        {"v_pseudo_inverse", r.diagnostics.v_pseudo_inverse},
                        {"w_plugin", "empirical moments at (theta_hat, t_hat)"},
                        {"inner", to_json(r.inner)},
                        {"starts", starts}};
    if (verbose) {
        j["G_hat"] = to_json(r.G_hat);
        j["Omega_hat"] = to_json(r.Omega_hat);
        j["projection_weights"] = to_json(r.inner.weights);
    }
    return j;
}

inline json to_json(const test_report& r) {
    json j = {{"kind", to_string(r.kind)},
              {"statistic", real_json(r.statistic)},
              {"df", r.df},
              {"p_value", real_json(r.p_value)},
              {"critical_value", real_json(r.critical_value)},
              {"alpha", r.alpha},
              {"decision", r.reject ? "reject" : "accept"},
              {"divergence", real_json(r.divergence)},
              {"boundary", r.boundary}};
    if (r.sigma2) j["variance_sigma2"] = real_json(*r.sigma2);
    if (r.theta) j["theta"] = to_json(*r.theta);
    if (r.theta_hat) j["theta_hat"] = to_json(*r.theta_hat);
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

inline json to_json(const confidence_result& c) {
    json region = json::array();
    for (const auto& p : c.region()) region.push_back(to_json(p));
    return {{"alpha", c.alpha},
            {"df", c.df},
            {"critical_value", real_json(c.critical_value)},
            {"theta_hat", to_json(c.theta_hat)},
            {"divergence_hat", real_json(c.divergence_hat)},
            {"lower", to_json(c.lower)},
            {"upper", to_json(c.upper)},
            {"empty", c.empty},
            {"grid_points", c.grid.size()},
            {"region", region}};
}

} // namespace phidiv
