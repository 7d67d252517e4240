#pragma once

// Seeded Monte Carlo harness: null calibration, empirical power and the
// comparison against the normal power approximation.
//
// Every replicate draws from its own generator seeded by hashing
// (seed, cell, replicate), so results do not depend on scheduling or on the
// number of worker threads.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "phidiv/distributions.hpp"
#include "phidiv/estimator.hpp"
#include "phidiv/inference.hpp"

namespace phidiv {

enum class generator_kind { uniform, normal, atoms };

// Base law P; the alternative with parameter eps is
//   uniform(lo, hi)  -> U[lo, hi + eps]
//   normal(mu, sd)   -> N(mu + eps, sd)
//   atoms            -> the atoms shifted by eps, resampled by weight
struct generator_spec {
    generator_kind kind = generator_kind::uniform;
    double a = -1.0;
    double b = 1.0;
    weighted_sample atoms;

    static generator_spec uniform(double lo, double hi) {
        if (!(hi > lo)) throw invalid_argument("uniform generator needs lo < hi");
        return {generator_kind::uniform, lo, hi, {}};
    }
    static generator_spec normal(double mu, double sd) {
        if (!(sd > 0.0)) throw invalid_argument("normal generator needs sd > 0");
        return {generator_kind::normal, mu, sd, {}};
    }
    static generator_spec from_atoms(weighted_sample s) {
        if (s.empty() || s.dim() != 1) throw invalid_argument("atom generator needs one-dimensional atoms");
        return {generator_kind::atoms, 0.0, 0.0, std::move(s)};
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        switch (kind) {
        case generator_kind::uniform: os << "uniform(" << a << "," << b << ")"; break;
        case generator_kind::normal: os << "normal(" << a << "," << b << ")"; break;
        case generator_kind::atoms: os << "atoms(" << atoms.size() << ")"; break;
        }
        return os.str();
    }
};

// Parses "uniform:lo:hi" or "normal:mu:sd".
inline generator_spec parse_generator(const std::string& text) {
    auto parts = std::vector<std::string>{};
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
    auto num = [&](const std::string& s) {
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw invalid_argument("bad number '" + s + "' in generator '" + text + "'");
        return v;
    };
    if (parts.size() == 3 && parts[0] == "uniform") return generator_spec::uniform(num(parts[1]), num(parts[2]));
    if (parts.size() == 3 && parts[0] == "normal") return generator_spec::normal(num(parts[1]), num(parts[2]));
    throw invalid_argument("unknown generator '" + text + "'");
}

struct simulation_plan {
    generator_spec generator = generator_spec::uniform(-1.0, 1.0);
    std::string model = "mean-variance";
    builtin_options model_options{};
    divergence_family family = divergence_family::klm();
    std::vector<int> n_list{50, 100, 200, 500};
    int runs = 1000;
    double alpha = 0.05;
    std::vector<double> epsilon_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::uint64_t seed = 42;
    // Monte Carlo fits use the chi2-seeded start only.
    estimate_options estimate{1};
    int atoms = 10000;
    int threads = 1;

    int cells() const { return static_cast<int>(n_list.size() * epsilon_grid.size()); }
    // cell = epsilon index * |n_list| + n index
    double epsilon_of(int cell) const { return epsilon_grid.at(cell / n_list.size()); }
    int n_of(int cell) const { return n_list.at(cell % n_list.size()); }

    void validate() const {
        if (runs < 1) throw invalid_argument("simulation needs runs >= 1");
        if (n_list.empty() || epsilon_grid.empty()) throw invalid_argument("simulation needs n and epsilon values");
        for (int n : n_list)
            if (n < 2) throw invalid_argument("sample sizes must be >= 2");
        if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_argument("alpha must lie in (0, 1)");
        if (threads < 1) throw invalid_argument("threads must be >= 1");
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t replicate) {
    return splitmix64(splitmix64(splitmix64(seed) ^ cell) ^ replicate);
}

// Runs body(i) for i in [0, count) on `threads` workers with a static
// interleaved partition.
template <class Body>
void parallel_for(int count, int threads, Body&& body) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < count; i += threads) body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace detail

// n i.i.d. draws from the alternative with parameter eps, uniform weights.
inline weighted_sample draw(const generator_spec& gen, double eps, int n, std::uint64_t stream_seed) {
    if (n < 1) throw invalid_argument("draw: n must be >= 1");
    std::mt19937_64 rng(stream_seed);
    mat p(1, n);
    switch (gen.kind) {
    case generator_kind::uniform: {
        if (!(gen.b + eps > gen.a)) throw invalid_argument("uniform alternative is empty");
        std::uniform_real_distribution<double> u(gen.a, gen.b + eps);
        for (int i = 0; i < n; ++i) p(0, i) = u(rng);
        break;
    }
    case generator_kind::normal: {
        std::normal_distribution<double> z(gen.a + eps, gen.b);
        for (int i = 0; i < n; ++i) p(0, i) = z(rng);
        break;
    }
    case generator_kind::atoms: {
        const vec& w = gen.atoms.weights();
        std::discrete_distribution<Eigen::Index> pick(w.data(), w.data() + w.size());
        for (int i = 0; i < n; ++i) p(0, i) = gen.atoms.points()(0, pick(rng)) + eps;
        break;
    }
    }
    return weighted_sample(std::move(p));
}

inline weighted_sample generate(const simulation_plan& plan, int cell, int replicate) {
    return draw(plan.generator, plan.epsilon_of(cell), plan.n_of(cell),
                detail::substream_seed(plan.seed, static_cast<std::uint64_t>(cell),
                                       static_cast<std::uint64_t>(replicate)));
}

// Finite-support version of the alternative law, for population quantities.
inline weighted_sample discretize(const generator_spec& gen, double eps, int atoms) {
    switch (gen.kind) {
    case generator_kind::uniform: return discretize_uniform(gen.a, gen.b + eps, atoms);
    case generator_kind::normal: {
        mat p(1, atoms);
        for (int i = 0; i < atoms; ++i) p(0, i) = gen.a + eps + gen.b * normal_quantile((i + 0.5) / atoms);
        return weighted_sample(std::move(p));
    }
    case generator_kind::atoms: {
        mat p = gen.atoms.points().array() + eps;
        return weighted_sample(std::move(p), gen.atoms.weights());
    }
    }
    throw invalid_argument("unknown generator");
}

struct power_row {
    double epsilon = 0.0;
    int n = 0;
    double rejection_rate = 0.0;
    double mc_stderr = 0.0;
    int failed = 0;        // replicates whose estimate failed (counted as rejections)
    bool unreliable = false; // more than 5% failed replicates
};

// Empirical rejection rate of the model test for every (epsilon, n) cell.
inline std::vector<power_row> mc_power(const simulation_plan& plan) {
    plan.validate();
    const moment_model model = builtin_model(plan.model, plan.model_options);
    const int cells = plan.cells();
    const int total = cells * plan.runs;
    std::vector<signed char> outcome(static_cast<std::size_t>(total), 0); // 1 reject, 2 failed

    detail::parallel_for(total, plan.threads, [&](int item) {
        const int cell = item / plan.runs;
        const int rep = item % plan.runs;
        weighted_sample s = generate(plan, cell, rep);
        signed char o = 0;
        try {
            test_report r = test_model(plan.family, model, s, plan.alpha, plan.estimate);
            o = r.boundary ? 2 : (r.reject ? 1 : 0);
        } catch (const error&) {
            o = 2;
        }
        outcome[static_cast<std::size_t>(item)] = o;
    });

    std::vector<power_row> rows;
    for (int cell = 0; cell < cells; ++cell) {
        power_row r;
        r.epsilon = plan.epsilon_of(cell);
        r.n = plan.n_of(cell);
        int rejects = 0;
        for (int rep = 0; rep < plan.runs; ++rep) {
            signed char o = outcome[static_cast<std::size_t>(cell * plan.runs + rep)];
            if (o != 0) ++rejects;
            if (o == 2) ++r.failed;
        }
        r.rejection_rate = static_cast<double>(rejects) / plan.runs;
        r.mc_stderr = std::sqrt(r.rejection_rate * (1.0 - r.rejection_rate) / plan.runs);
        r.unreliable = r.failed > 0.05 * plan.runs;
        rows.push_back(r);
    }
    return rows;
}

struct approx_row {
    double epsilon = 0.0;
    int n = 0;
    double approx_power = 0.0;
    double divergence = 0.0; // D_phi(M, P0)
    double sigma = 0.0;      // sigma(theta*)
    bool available = true;
};

// Normal power approximation with D_phi(M, P0) and sigma(theta*) from the
// discretized alternative. D = 0 (a null point) reports the level alpha.
inline std::vector<approx_row> approx_power_curve(const simulation_plan& plan, int atoms) {
    plan.validate();
    const moment_model model = builtin_model(plan.model, plan.model_options);
    const int df = model.dims().l - model.dims().d;
    if (df < 1) throw not_applicable("power curve of the model test needs l > d");

    std::vector<approx_row> rows;
    for (double eps : plan.epsilon_grid) {
        double D = 0.0, sigma = 0.0;
        bool ok = true;
        try {
            weighted_sample p0 = discretize(plan.generator, eps, atoms);
            estimate_options opt = plan.estimate;
            estimation_result pop = population_estimate(plan.family, model, p0, opt);
            D = pop.divergence_hat;
            sigma = std::sqrt(pop.sigma2_hat);
        } catch (const error&) {
            ok = false;
        }
        for (int n : plan.n_list) {
            approx_row r;
            r.epsilon = eps;
            r.n = n;
            r.divergence = D;
            r.sigma = sigma;
            r.available = ok;
            if (!ok) {
                r.approx_power = std::nan("");
            } else if (D <= 1e-12 || sigma <= 1e-12) {
                r.approx_power = plan.alpha;
            } else {
                r.approx_power = power_approx(n, plan.alpha, df, D, sigma);
            }
            rows.push_back(r);
        }
    }
    return rows;
}

struct figure_row {
    int n = 0;
    double epsilon = 0.0;
    double mc_power = 0.0;
    double mc_stderr = 0.0;
    double approx_power = 0.0;
};

// Monte Carlo power vs. the approximation, one row per (n, epsilon), n-major.
inline std::vector<figure_row> reproduce_figure1(const simulation_plan& plan) {
    auto mc = mc_power(plan);
    auto ap = approx_power_curve(plan, plan.atoms);
    std::vector<figure_row> rows;
    const auto ne = plan.epsilon_grid.size();
    const auto nn = plan.n_list.size();
    for (std::size_t k = 0; k < nn; ++k) {
        for (std::size_t e = 0; e < ne; ++e) {
            const auto& m = mc[e * nn + k];
            const auto& a = ap[e * nn + k];
            rows.push_back({m.n, m.epsilon, m.rejection_rate, m.mc_stderr, a.approx_power});
        }
    }
    return rows;
}

inline std::string figure_csv(const std::vector<figure_row>& rows) {
    std::string out = "n,epsilon,mc_power,mc_stderr,approx_power\n";
    for (const auto& r : rows) {
        out += std::to_string(r.n) + "," + detail::format_real(r.epsilon) + "," +
               detail::format_real(r.mc_power) + "," + detail::format_real(r.mc_stderr) + "," +
               detail::format_real(r.approx_power) + "\n";
    }
    return out;
}

} // namespace phidiv
