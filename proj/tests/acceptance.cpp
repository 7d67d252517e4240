// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "phidiv/phidiv.hpp"

using namespace phidiv;

namespace {

using clock_type = std::chrono::steady_clock;

struct outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<outcome()>& body) {
    auto start = clock_type::now();
    outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(clock_type::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

vec scalar(double v) {
    vec out(1);
    out << v;
    return out;
}

int worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<divergence_family> all_families() {
    return {divergence_family::klm(),      divergence_family::kl(),       divergence_family::chi2m(),
            divergence_family::chi2(),     divergence_family::hellinger(), divergence_family::power(-2.0),
            divergence_family::power(0.3), divergence_family::power(1.5),  divergence_family::power(3.0)};
}

std::vector<double> interior_grid(const divergence_family& f, int count) {
    interval dom = f.psi_domain();
    double lo = std::max(dom.lo, -3.0);
    double hi = dom.hi < 3.0 ? dom.hi - 0.05 * (dom.hi - lo) : 3.0;
    std::vector<double> ts;
    for (int k = 1; k <= count; ++k) ts.push_back(lo + (hi - lo) * k / (count + 1));
    return ts;
}

outcome conjugates() {
    double worst = 0.0, worst_norm = 0.0, worst_coherence = 0.0;
    const conjugate_grid grid{-50.0, 500.0, 201, 12};
    for (const auto& f : all_families()) {
        for (double t : interior_grid(f, 200)) {
            double numeric = numeric_conjugate(f, t, grid);
            worst = std::max(worst, std::abs(psi(f, t) - numeric) / (1.0 + std::abs(numeric)));
        }
        auto [d1, d2] = psi_derivs(f, 0.0);
        worst_norm = std::max({worst_norm, std::abs(d1 - 1.0), std::abs(d2 - 1.0)});
    }
    const std::pair<double, divergence_family> named[] = {{-1.0, divergence_family::chi2m()},
                                                          {0.0, divergence_family::klm()},
                                                          {0.5, divergence_family::hellinger()},
                                                          {1.0, divergence_family::kl()},
                                                          {2.0, divergence_family::chi2()}};
    for (const auto& [g, f] : named) {
        auto p = divergence_family::power(g);
        for (double x : {0.1, 0.5, 1.0, 2.0, 7.0}) worst_coherence = std::max(worst_coherence, std::abs(phi(p, x) - phi(f, x)));
        for (double t : interior_grid(f, 50)) worst_coherence = std::max(worst_coherence, std::abs(psi(p, t) - psi(f, t)));
    }
    bool pass = worst <= 1e-6 && worst_norm <= 1e-10 && worst_coherence <= 1e-12;
    return {pass, fmt("max |psi - numeric| %.2e, max |psi'(0)-1|,|psi''(0)-1| %.2e, coherence %.2e", worst,
                      worst_norm, worst_coherence)};
}

outcome primal_dual() {
    std::mt19937_64 rng(2024);
    double worst_chi2 = 0.0, worst_other = 0.0;
    int instances = 0, unconverged = 0;
    const divergence_family others[] = {divergence_family::klm(), divergence_family::kl(),
                                        divergence_family::hellinger()};
    for (int rep = 0; rep < 100; ++rep) {
        const bool mv = rep % 2 == 0;
        const int l = mv ? 2 : 1;
        const int n = (l + 1) + 1 + (rep / 2) % 2; // null space of dimension 1 or 2
        auto inst = oracle::random_instance(rng, n, mv);
        auto model = mv ? mean_variance_model() : mean_model();
        mat A = oracle::constraints(model, inst.sample, inst.theta);
        const vec& w = inst.sample.weights();
        ++instances;
        auto c = solve_inner(divergence_family::chi2(), model, inst.sample, inst.theta);
        if (!c.converged()) ++unconverged;
        worst_chi2 = std::max(worst_chi2, std::abs(c.objective - oracle::chi2_primal(A, w)));
        // six-point instances for the quadratic primal
        auto big = oracle::random_instance(rng, 6, mv);
        auto c6 = solve_inner(divergence_family::chi2(), model, big.sample, big.theta);
        if (!c6.converged()) ++unconverged;
        worst_chi2 = std::max(worst_chi2, std::abs(c6.objective - oracle::chi2_primal(
                                                                      oracle::constraints(model, big.sample, big.theta),
                                                                      big.sample.weights())));
        for (const auto& f : others) {
            auto s = solve_inner(f, model, inst.sample, inst.theta);
            if (!s.converged()) ++unconverged;
            worst_other = std::max(worst_other, std::abs(s.objective - oracle::primal_min(f, A, w, inst.q0)));
        }
    }
    bool pass = unconverged == 0 && worst_chi2 <= 1e-8 && worst_other <= 1e-4;
    return {pass, fmt("%g instances, chi2 max gap %.2e, KLm/KL/Hellinger max gap %.2e", instances, worst_chi2,
                      worst_other) +
                      (unconverged ? ", " + std::to_string(unconverged) + " unconverged" : std::string())};
}

outcome worked_example() {
    auto s = weighted_sample::from_values({0.0, 1.0});
    auto sol = solve_inner(divergence_family::chi2(), mean_model(), s, scalar(1.0));
    auto r = test_theta_simple(divergence_family::chi2(), mean_model(), s, scalar(1.0), 0.05);
    double err = std::max({std::abs(sol.t[0] - 1.0), std::abs(sol.t[1] - 2.0), std::abs(sol.objective - 0.5),
                           std::abs(sol.weights[0]), std::abs(sol.weights[1] - 1.0), std::abs(r.statistic - 2.0)});
    return {sol.converged() && err <= 1e-10,
            fmt("t=(%.12g, %.12g), statistic %.12g", sol.t[0], sol.t[1], r.statistic) + fmt(", max error %.2e", err)};
}

outcome el_structure() {
    std::mt19937_64 rng(77);
    double worst_t0 = 0.0, worst_gap = 0.0;
    int converged = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const bool mv = rep % 2 == 0;
        auto inst = oracle::random_instance(rng, 4 + rep % 20, mv);
        auto model = mv ? mean_variance_model() : mean_model();
        auto full = solve_inner(divergence_family::klm(), model, inst.sample, inst.theta);
        auto reduced = el_reduced_solve(model, inst.sample, inst.theta);
        if (!full.converged() || !reduced.converged()) continue;
        ++converged;
        worst_t0 = std::max(worst_t0, std::abs(full.t[0]));
        worst_gap = std::max(worst_gap, std::abs(full.objective - reduced.objective));
    }
    auto edge = solve_inner(divergence_family::klm(), mean_model(), weighted_sample::from_values({0.0, 1.0}),
                            scalar(1.0));
    bool unbounded = edge.status == dual_status::unbounded && edge.objective == inf;
    bool pass = converged == 200 && worst_t0 <= 1e-8 && worst_gap <= 1e-8 && unbounded;
    return {pass, fmt("%g/200 converged, max |t0| %.2e, reduced gap %.2e", converged, worst_t0, worst_gap) +
                      ", hull-edge status " + to_string(edge.status)};
}

outcome envelope() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0), th(0.25, 0.4);
    auto model = mean_variance_model();
    const divergence_family fams[] = {divergence_family::klm(), divergence_family::kl(),
                                      divergence_family::chi2(), divergence_family::hellinger(),
                                      divergence_family::power(3.0)};
    double worst = 0.0;
    const double h = 1e-6;
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> xs(20 + rep);
        for (auto& x : xs) x = u(rng);
        auto s = weighted_sample::from_values(xs);
        const auto& f = fams[rep % 5];
        vec theta = scalar(th(rng));
        auto pv = profile_objective(f, model, s, theta);
        vec g = profile_gradient(f, model, s, theta, pv.inner);
        double fd = (profile_objective(f, model, s, theta + scalar(h)).value -
                     profile_objective(f, model, s, theta - scalar(h)).value) / (2 * h);
        worst = std::max(worst, std::abs(g[0] - fd));
    }
    return {worst <= 1e-5, fmt("50 instances, max |envelope - central difference| %.2e", worst)};
}

simulation_plan null_plan(const divergence_family& f) {
    simulation_plan p;
    p.family = f;
    p.n_list = {200};
    p.epsilon_grid = {0.0};
    p.runs = 1000;
    p.seed = 20240601;
    p.threads = worker_count();
    return p;
}

outcome null_model_test() {
    double klm = mc_power(null_plan(divergence_family::klm()))[0].rejection_rate;
    double chi2 = mc_power(null_plan(divergence_family::chi2()))[0].rejection_rate;
    bool pass = klm >= 0.03 && klm <= 0.09 && chi2 >= 0.03 && chi2 <= 0.09;
    return {pass, fmt("model test rejection KLm %.3f, chi2 %.3f (band [0.03, 0.09])", klm, chi2)};
}

outcome null_theta_tests() {
    const auto plan = null_plan(divergence_family::klm());
    const auto model = mean_variance_model();
    const auto f = divergence_family::klm();
    const vec theta0 = scalar(1.0 / 3.0);
    const int runs = plan.runs;
    // grid centred on theta0: the middle point is theta0
    const axis_grid axis{1.0 / 3.0 - 0.15, 1.0 / 3.0 + 0.15, 61};
    std::vector<signed char> simple(runs), ratio(runs), covered(runs);
    detail::parallel_for(runs, plan.threads, [&](int rep) {
        weighted_sample s = generate(plan, 0, rep);
        estimate_options opt = plan.estimate;
        simple[rep] = test_theta_simple(f, model, s, theta0, 0.05).reject;
        estimation_result est = estimate(f, model, s, opt);
        ratio[rep] = test_theta_composite(f, model, s, theta0, 0.05, est).reject;
        auto cr = confidence_region(f, model, s, 0.05, {axis}, opt);
        covered[rep] = cr.inside[30];
    });
    auto rate = [&](const std::vector<signed char>& v) {
        return static_cast<double>(std::count(v.begin(), v.end(), 1)) / runs;
    };
    double rs = rate(simple), rr = rate(ratio), cov = rate(covered);
    bool pass = rs >= 0.03 && rs <= 0.09 && rr >= 0.03 && rr <= 0.09 && cov >= 0.91 && cov <= 0.98;
    return {pass, fmt("simple (df=2) %.3f, ratio (df=1) %.3f, region coverage %.3f", rs, rr, cov)};
}

outcome asymptotic_variance() {
    const auto model = mean_variance_model();
    const auto f = divergence_family::klm();
    const double theta0 = 1.0 / 3.0;
    // reference V at theta0 from a large sample
    auto ref = draw(generator_spec::uniform(-1.0, 1.0), 0.0, 1000000, 5);
    estimation_result at0;
    at0.theta_hat = scalar(theta0);
    at0.t_hat = vec::Zero(model.dims().l + 1);
    at0.n = ref.size();
    fill_variances(f, model, ref, at0);
    const double v_ref = at0.V_hat(0, 0);

    simulation_plan plan = null_plan(f);
    plan.n_list = {500};
    plan.seed = 8;
    std::vector<double> z(plan.runs, std::nan(""));
    detail::parallel_for(plan.runs, plan.threads, [&](int rep) {
        weighted_sample s = generate(plan, 0, rep);
        try {
            z[rep] = std::sqrt(500.0) * (estimate(f, model, s, plan.estimate).theta_hat[0] - theta0);
        } catch (const error&) {
        }
    });
    std::vector<double> ok;
    for (double v : z)
        if (std::isfinite(v)) ok.push_back(v);
    double mean = 0.0;
    for (double v : ok) mean += v;
    mean /= ok.size();
    double var = 0.0;
    for (double v : ok) var += (v - mean) * (v - mean);
    var /= ok.size() - 1;
    double rel = std::abs(var - v_ref) / v_ref;
    bool pass = ok.size() == z.size() && rel <= 0.25;
    return {pass, fmt("MC variance %.4f vs reference V %.4f, relative error %.3f", var, v_ref, rel)};
}

outcome figure() {
    simulation_plan plan;
    plan.threads = worker_count();
    auto rows = reproduce_figure1(plan);
    std::ofstream("figure1.csv") << figure_csv(rows);
    double worst = 0.0;
    int violations = 0;
    for (int n : plan.n_list) {
        std::vector<figure_row> curve;
        for (const auto& r : rows)
            if (r.n == n) curve.push_back(r);
        for (std::size_t k = 0; k < curve.size(); ++k) {
            if (n >= 100) worst = std::max(worst, std::abs(curve[k].mc_power - curve[k].approx_power));
            if (k == 0) continue;
            double slack = 3.0 * std::max(curve[k].mc_stderr, curve[k - 1].mc_stderr);
            if (curve[k].mc_power < curve[k - 1].mc_power - slack) ++violations;
            if (curve[k].approx_power < curve[k - 1].approx_power - slack) ++violations;
        }
    }
    bool pass = worst <= 0.15 && violations == 0;
    return {pass, fmt("max |mc - approx| over n in {100,200,500}: %.3f, monotonicity violations %g", worst,
                      violations) +
                      ", table in figure1.csv"};
}

outcome sample_size_round_trip() {
    double worst_short = 0.0;
    int cases = 0;
    for (double beta : {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99})
        for (double D : {0.005, 0.02, 0.05, 0.1, 0.3})
            for (double sigma : {0.2, 0.5, 1.0, 3.0})
                for (double alpha : {0.01, 0.05, 0.1})
                    for (int df : {1, 2, 5}) {
                        long long n = sample_size(beta, alpha, df, D, sigma);
                        double p = power_approx(static_cast<double>(n), alpha, df, D, sigma);
                        worst_short = std::max(worst_short, beta - p);
                        ++cases;
                    }
    double worst_collapse = 0.0;
    for (double D : {0.005, 0.1, 0.7})
        for (double alpha : {0.01, 0.05})
            for (int df : {1, 3}) {
                double q = chi2_quantile(1.0 - alpha, df);
                double n0 = sample_size_root(0.5, alpha, df, D, 1.3);
                worst_collapse = std::max(worst_collapse, std::abs(n0 - q / (2.0 * D)) / (q / (2.0 * D)));
            }
    bool pass = worst_short <= 0.01 && worst_collapse <= 4 * std::numeric_limits<double>::epsilon();
    return {pass, fmt("%g cases, max shortfall beta - power %.2e, beta=0.5 collapse relative error %.1e", cases,
                      std::max(worst_short, 0.0), worst_collapse)};
}

outcome determinism() {
    simulation_plan plan;
    plan.runs = 100;
    plan.threads = 1;
    std::string a = figure_csv(reproduce_figure1(plan));
    plan.threads = std::max(4, worker_count());
    std::string b = figure_csv(reproduce_figure1(plan));
    return {a == b, fmt("threads 1 vs %g: %g-byte CSVs ", plan.threads, static_cast<double>(a.size())) +
                        (a == b ? "identical" : "differ")};
}

} // namespace

int main() {
    report(1, "conjugate suite", [] {
        auto start = clock_type::now();
        outcome o = conjugates();
        double secs = std::chrono::duration<double>(clock_type::now() - start).count();
        o.pass = o.pass && secs < 1.0;
        return o;
    });
    report(2, "primal-dual oracle", primal_dual);
    report(3, "worked example", worked_example);
    report(4, "empirical likelihood structure", el_structure);
    report(5, "envelope gradient", envelope);
    report(6, "null calibration, model test", null_model_test);
    report(7, "null calibration, theta tests and coverage", null_theta_tests);
    report(8, "asymptotic variance", asymptotic_variance);
    report(9, "power curve reproduction", figure);
    report(10, "sample-size round trip", sample_size_round_trip);
    report(11, "thread-count determinism", determinism);
    std::printf("%d of 11 criteria passed\n", 11 - failures);
    return failures == 0 ? 0 : 1;
}
