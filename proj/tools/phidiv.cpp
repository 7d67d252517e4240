// phidiv command-line front end.
//
// Exit codes: 0 success, 1 usage, 2 I/O or parse, 3 numeric.

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "phidiv/json.hpp"
#include "phidiv/phidiv.hpp"

namespace {

using phidiv::json;

enum exit_code { ok = 0, usage = 1, io = 2, numeric = 3 };

struct run_config {
    std::string command;
    std::string model = "mean-variance";
    std::string family = "KLm";
    std::string data;
    bool header = false;
    char delimiter = ',';
    double alpha = 0.05;
    std::uint64_t seed = 42;
    int starts = 5;
    double theta_lo = -100.0;
    double theta_hi = 100.0;
    int threads = 1;
    bool verbose = false;
    std::string out;

    // test
    std::string test_kind = "model";
    std::string theta;
    // power / samplesize
    std::optional<double> n;
    std::optional<double> beta;
    std::optional<int> df;
    std::optional<double> divergence;
    std::optional<double> sigma;
    std::string p0_uniform;
    int atoms = 10000;
    // confidence
    std::vector<std::string> grid;
    // simulate
    bool figure1 = false;
    int runs = 1000;
    std::string generator = "uniform:-1:1";
    std::vector<int> n_list{50, 100, 200, 500};
    std::vector<double> eps_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double parse_real(const std::string& text) {
    auto slash = text.find('/');
    auto num = [&](std::string_view s) {
        double v = 0.0;
        if (!s.empty() && s.front() == '+') s.remove_prefix(1);
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw usage_error("'" + text + "' is not a number");
        return v;
    };
    if (slash == std::string::npos) return num(text);
    double den = num(std::string_view(text).substr(slash + 1));
    if (den == 0.0) throw usage_error("'" + text + "' divides by zero");
    return num(std::string_view(text).substr(0, slash)) / den;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, sep);) parts.push_back(item);
    return parts;
}

phidiv::vec parse_theta(const std::string& text) {
    auto parts = split(text, ',');
    if (parts.empty()) throw usage_error("--theta is empty");
    phidiv::vec v(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_real(parts[i]);
    return v;
}

phidiv::axis_grid parse_grid(const std::string& text) {
    auto parts = split(text, ':');
    if (parts.size() != 3) throw usage_error("--grid expects lo:hi:steps, got '" + text + "'");
    phidiv::axis_grid g{parse_real(parts[0]), parse_real(parts[1]), 0};
    double steps = parse_real(parts[2]);
    if (steps < 1 || steps != static_cast<int>(steps)) throw usage_error("--grid steps must be a positive integer");
    g.steps = static_cast<int>(steps);
    if (!(g.hi >= g.lo)) throw usage_error("--grid needs lo <= hi");
    return g;
}

std::pair<double, double> parse_interval(const std::string& text, const char* flag) {
    auto parts = split(text, ':');
    if (parts.size() != 2) throw usage_error(std::string(flag) + " expects lo:hi");
    return {parse_real(parts[0]), parse_real(parts[1])};
}

json config_json(const run_config& c) {
    json j = {{"command", c.command},
              {"model", c.model},
              {"family", phidiv::parse_family(c.family).name()},
              {"data", c.data},
              {"header", c.header},
              {"alpha", c.alpha},
              {"seed", c.seed},
              {"starts", c.starts},
              {"theta_lo", c.theta_lo},
              {"theta_hi", c.theta_hi},
              {"threads", c.threads},
              {"verbose", c.verbose},
              {"out", c.out}};
    if (c.command == "test") {
        j["test"] = c.test_kind;
        j["theta"] = c.theta;
    } else if (c.command == "power" || c.command == "samplesize") {
        auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
        j["n"] = opt(c.n);
        j["beta"] = opt(c.beta);
        j["df"] = opt(c.df);
        j["D"] = opt(c.divergence);
        j["sigma"] = opt(c.sigma);
        j["p0_uniform"] = c.p0_uniform;
        j["atoms"] = c.atoms;
    } else if (c.command == "confidence") {
        j["grid"] = c.grid;
    } else if (c.command == "simulate") {
        j["figure1"] = c.figure1;
        j["runs"] = c.runs;
        j["generator"] = c.generator;
        j["n_list"] = c.n_list;
        j["epsilon_grid"] = c.eps_grid;
        j["atoms"] = c.atoms;
    }
    return j;
}

phidiv::estimate_options estimate_opts(const run_config& c) {
    phidiv::estimate_options o;
    o.starts = c.starts;
    o.seed = c.seed;
    return o;
}

phidiv::weighted_sample load(const run_config& c) {
    if (c.data.empty()) throw usage_error("--data is required for '" + c.command + "'");
    return phidiv::read_csv(c.data, c.header, c.delimiter);
}

phidiv::moment_model make_model(const run_config& c, int m) {
    phidiv::builtin_options o;
    o.m = m;
    o.theta_lo = c.theta_lo;
    o.theta_hi = c.theta_hi;
    return phidiv::builtin_model(c.model, o);
}

void print_table(std::ostream& os, const json& result) {
    for (const auto& [key, value] : result.items()) {
        if (value.is_structured()) continue;
        os << key << '\t' << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
    }
}

// JSON to stdout, or to --out with a plain summary on stdout.
void emit(const run_config& c, json result) {
    json doc = {{"config", config_json(c)}, {"result", std::move(result)}};
    if (c.out.empty()) {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::ofstream f(c.out, std::ios::binary);
    if (!f) throw phidiv::io_error("cannot write '" + c.out + "'");
    f << doc.dump(2) << '\n';
    print_table(std::cout, doc["result"]);
}

int cmd_estimate(const run_config& c) {
    auto sample = load(c);
    auto model = make_model(c, sample.dim());
    auto est = phidiv::estimate(phidiv::parse_family(c.family), model, sample, estimate_opts(c));
    emit(c, phidiv::to_json(est, c.verbose));
    return ok;
}

int cmd_test(const run_config& c) {
    auto sample = load(c);
    auto model = make_model(c, sample.dim());
    auto f = phidiv::parse_family(c.family);
    phidiv::test_report r;
    if (c.test_kind == "model") {
        r = phidiv::test_model(f, model, sample, c.alpha, estimate_opts(c));
    } else {
        if (c.theta.empty()) throw usage_error("--theta is required for 'test " + c.test_kind + "'");
        phidiv::vec theta = parse_theta(c.theta);
        if (c.test_kind == "theta")
            r = phidiv::test_theta_simple(f, model, sample, theta, c.alpha, estimate_opts(c).inner);
        else
            r = phidiv::test_theta_composite(f, model, sample, theta, c.alpha, estimate_opts(c));
    }
    emit(c, phidiv::to_json(r));
    return ok;
}

struct power_inputs {
    int df = 0;
    double divergence = 0.0;
    double sigma = 0.0;
    std::string mode;
};

// Direct values, plug-in from --data, or population from --p0-uniform.
power_inputs resolve_power_inputs(const run_config& c) {
    power_inputs p;
    const bool from_data = !c.data.empty();
    const bool from_p0 = !c.p0_uniform.empty();
    if (from_data && from_p0) throw usage_error("--data and --p0-uniform are mutually exclusive");
    if (from_data || from_p0) {
        if (c.divergence || c.sigma) throw usage_error("--D/--sigma cannot be combined with --data or --p0-uniform");
        phidiv::weighted_sample s;
        if (from_data) {
            s = load(c);
        } else {
            auto [lo, hi] = parse_interval(c.p0_uniform, "--p0-uniform");
            s = phidiv::discretize_uniform(lo, hi, c.atoms);
        }
        auto model = make_model(c, s.dim());
        auto est = phidiv::estimate(phidiv::parse_family(c.family), model, s, estimate_opts(c));
        p.df = c.df.value_or(model.dims().l - model.dims().d);
        p.divergence = est.divergence_hat;
        p.sigma = std::sqrt(est.sigma2_hat);
        p.mode = from_data ? "plug-in" : "population";
        return p;
    }
    if (!c.df || !c.divergence || !c.sigma)
        throw usage_error("direct mode needs --df, --D and --sigma (or use --data / --p0-uniform)");
    return {*c.df, *c.divergence, *c.sigma, "direct"};
}

json inputs_json(const power_inputs& p) {
    return {{"mode", p.mode}, {"df", p.df}, {"D", phidiv::real_json(p.divergence)},
            {"sigma", phidiv::real_json(p.sigma)}};
}

int cmd_power(const run_config& c) {
    if (!c.n) throw usage_error("--n is required for 'power'");
    auto p = resolve_power_inputs(c);
    json r = inputs_json(p);
    r["n"] = *c.n;
    r["alpha"] = c.alpha;
    r["power"] = phidiv::real_json(phidiv::power_approx(*c.n, c.alpha, p.df, p.divergence, p.sigma));
    emit(c, r);
    return ok;
}

int cmd_samplesize(const run_config& c) {
    if (!c.beta) throw usage_error("--beta is required for 'samplesize'");
    auto p = resolve_power_inputs(c);
    json r = inputs_json(p);
    r["beta"] = *c.beta;
    r["alpha"] = c.alpha;
    r["n0"] = phidiv::real_json(phidiv::sample_size_root(*c.beta, c.alpha, p.df, p.divergence, p.sigma));
    r["n"] = phidiv::sample_size(*c.beta, c.alpha, p.df, p.divergence, p.sigma);
    emit(c, r);
    return ok;
}

int cmd_confidence(const run_config& c) {
    auto sample = load(c);
    auto model = make_model(c, sample.dim());
    std::vector<phidiv::axis_grid> axes;
    for (const auto& g : c.grid) axes.push_back(parse_grid(g));
    if (axes.empty())
        for (int k = 0; k < model.dims().d; ++k) axes.push_back({c.theta_lo, c.theta_hi, 201});
    auto cr = phidiv::confidence_region(phidiv::parse_family(c.family), model, sample, c.alpha, axes,
                                        estimate_opts(c));
    json r = phidiv::to_json(cr);
    if (!c.verbose) r.erase("region");
    emit(c, r);
    return ok;
}

std::string power_csv(const std::vector<phidiv::power_row>& rows) {
    using phidiv::detail::format_real;
    std::string out = "n,epsilon,rejection_rate,mc_stderr,failed,unreliable\n";
    for (const auto& r : rows)
        out += std::to_string(r.n) + "," + format_real(r.epsilon) + "," + format_real(r.rejection_rate) + "," +
               format_real(r.mc_stderr) + "," + std::to_string(r.failed) + "," + (r.unreliable ? "1" : "0") + "\n";
    return out;
}

int cmd_simulate(const run_config& c) {
    phidiv::simulation_plan plan;
    plan.generator = phidiv::parse_generator(c.generator);
    plan.model = c.model;
    plan.model_options.theta_lo = c.theta_lo;
    plan.model_options.theta_hi = c.theta_hi;
    plan.family = phidiv::parse_family(c.family);
    plan.n_list = c.n_list;
    plan.runs = c.runs;
    plan.alpha = c.alpha;
    plan.epsilon_grid = c.eps_grid;
    plan.seed = c.seed;
    plan.atoms = c.atoms;
    plan.threads = c.threads;
    plan.validate();

    std::string csv = c.figure1 ? phidiv::figure_csv(phidiv::reproduce_figure1(plan))
                                : power_csv(phidiv::mc_power(plan));
    json echo = {{"config", config_json(c)}};
    if (c.out.empty()) {
        std::cout << csv;
        std::cerr << echo.dump(2) << '\n';
        return ok;
    }
    std::ofstream f(c.out, std::ios::binary);
    if (!f) throw phidiv::io_error("cannot write '" + c.out + "'");
    f << csv;
    std::ofstream side(c.out + ".config.json", std::ios::binary);
    if (!side) throw phidiv::io_error("cannot write '" + c.out + ".config.json'");
    side << echo.dump(2) << '\n';
    std::cout << "wrote " << c.out << " and " << c.out << ".config.json\n";
    return ok;
}

int fail(int code, const std::string& kind, const std::string& message) {
    json e = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
    std::cerr << e.dump(2) << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv) {
    run_config c;
    unsigned hw = std::thread::hardware_concurrency();
    c.threads = hw == 0 ? 1 : static_cast<int>(hw);

    CLI::App app{"Minimum phi-divergence estimation and testing for moment condition models"};
    app.set_config("--config", "", "Read options from a key=value (INI/TOML) file; flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--model", c.model, "Registered model name (mean, mean-variance)")->capture_default_str();
    app.add_option("--family", c.family, "Divergence: KLm, KL, chi2, chi2m, hellinger, power:gamma")
        ->capture_default_str();
    app.add_option("--data", c.data, "CSV file, one row per observation");
    app.add_flag("--header", c.header, "CSV has a header row");
    app.add_option("--alpha", c.alpha, "Test level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    app.add_option("--seed", c.seed, "Seed for multistart and simulation")->capture_default_str();
    app.add_option("--starts", c.starts, "Outer multistart count")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--theta-lo", c.theta_lo, "Lower bound of the parameter box")->capture_default_str();
    app.add_option("--theta-hi", c.theta_hi, "Upper bound of the parameter box")->capture_default_str();
    app.add_option("--threads", c.threads, "Worker threads")
        ->envname("PHIDIV_THREADS")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_flag("--verbose", c.verbose, "Include solver diagnostics");
    app.add_option("--out", c.out, "Write the artifact to this file");

    auto* est = app.add_subcommand("estimate", "Minimum divergence estimate");

    auto* test = app.add_subcommand("test", "Model test, simple theta test or ratio test");
    test->add_option("kind", c.test_kind, "model | theta | ratio")
        ->required()
        ->check(CLI::IsMember({"model", "theta", "ratio"}));
    test->add_option("--theta", c.theta, "Hypothesized theta, comma-separated; a/b fractions allowed");

    auto add_power_opts = [&](CLI::App* sub) {
        sub->add_option("--df", c.df, "Degrees of freedom")->check(CLI::PositiveNumber);
        sub->add_option("--D", c.divergence, "Divergence D under the alternative");
        sub->add_option("--sigma", c.sigma, "Standard deviation sigma");
        sub->add_option("--p0-uniform", c.p0_uniform, "Population mode: discretized U[lo,hi] as lo:hi");
        sub->add_option("--atoms", c.atoms, "Atoms in the discretized population")->capture_default_str();
    };
    auto* power = app.add_subcommand("power", "Approximate power of a divergence test");
    power->add_option("--n", c.n, "Sample size")->check(CLI::PositiveNumber);
    add_power_opts(power);
    auto* ss = app.add_subcommand("samplesize", "Sample size for a target power");
    ss->add_option("--beta", c.beta, "Target power")->check(CLI::Range(0.0, 1.0));
    add_power_opts(ss);

    auto* conf = app.add_subcommand("confidence", "Confidence region by grid scan");
    conf->add_option("--grid", c.grid, "Axis grid lo:hi:steps, one per parameter");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo power of the model test");
    sim->add_flag("--figure1", c.figure1, "Add the normal power approximation to each cell");
    sim->add_option("--runs", c.runs, "Replicates per cell")->capture_default_str()->check(CLI::PositiveNumber);
    sim->add_option("--generator", c.generator, "uniform:lo:hi or normal:mu:sd")->capture_default_str();
    sim->add_option("--n-list", c.n_list, "Sample sizes")->delimiter(',')->capture_default_str();
    sim->add_option("--eps-grid", c.eps_grid, "Alternative shifts epsilon")->delimiter(',')->capture_default_str();
    sim->add_option("--atoms", c.atoms, "Atoms for the population approximation")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        return fail(usage, "usage", e.what());
    }

    try {
        if (est->parsed()) c.command = "estimate";
        else if (test->parsed()) c.command = "test";
        else if (power->parsed()) c.command = "power";
        else if (ss->parsed()) c.command = "samplesize";
        else if (conf->parsed()) c.command = "confidence";
        else c.command = "simulate";
        phidiv::parse_family(c.family);

        if (c.command == "estimate") return cmd_estimate(c);
        if (c.command == "test") return cmd_test(c);
        if (c.command == "power") return cmd_power(c);
        if (c.command == "samplesize") return cmd_samplesize(c);
        if (c.command == "confidence") return cmd_confidence(c);
        (void)sim;
        return cmd_simulate(c);
    } catch (const usage_error& e) {
        std::cerr << app.help();
        return fail(usage, "usage", e.what());
    } catch (const phidiv::invalid_argument& e) {
        return fail(usage, "invalid-argument", e.what());
    } catch (const phidiv::io_error& e) {
        return fail(io, "io", e.what());
    } catch (const phidiv::parse_error& e) {
        return fail(io, "parse", e.what());
    } catch (const phidiv::not_applicable& e) {
        return fail(numeric, "not-applicable", e.what());
    } catch (const phidiv::error& e) {
        return fail(numeric, "numeric", e.what());
    } catch (const std::exception& e) {
        return fail(numeric, "internal", e.what());
    }
}
