#pragma once

// phi-divergence generators and their Fenchel-Legendre conjugates.
//
// Every family is a member of the Cressie-Read power class phi_gamma:
//
//   phi_gamma(x) = (x^gamma - gamma x + gamma - 1) / (gamma (gamma - 1))
//
// with the log limits at gamma = 0 (KLm) and gamma = 1 (KL). Outside the
// natural domain phi is +inf, except for gamma = 2 (chi2) which is a finite
// convex function on the whole real line. psi(t) = sup_x { t x - phi(x) }.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <utility>

#include "phidiv/errors.hpp"

namespace phidiv {

inline constexpr double inf = std::numeric_limits<double>::infinity();

enum class family_kind { klm, kl, chi2m, chi2, hellinger, power };

// An interval (lo, hi) of the extended real line. Closed ends are flagged.
struct interval {
    double lo = -inf;
    double hi = inf;
    bool lo_closed = false;
    bool hi_closed = false;

    bool contains(double x) const {
        return (x > lo || (lo_closed && x == lo)) && (x < hi || (hi_closed && x == hi));
    }
    bool interior_contains(double x) const { return x > lo && x < hi; }
};

class divergence_family {
public:
    static divergence_family klm() { return {family_kind::klm, 0.0}; }
    static divergence_family kl() { return {family_kind::kl, 1.0}; }
    static divergence_family chi2m() { return {family_kind::chi2m, -1.0}; }
    static divergence_family chi2() { return {family_kind::chi2, 2.0}; }
    static divergence_family hellinger() { return {family_kind::hellinger, 0.5}; }
    static divergence_family power(double gamma) {
        if (!std::isfinite(gamma))
            throw invalid_argument("power family index must be finite");
        if (gamma == 0.0) return klm();
        if (gamma == 1.0) return kl();
        if (gamma == -1.0) return chi2m();
        if (gamma == 2.0) return chi2();
        if (gamma == 0.5) return hellinger();
        return {family_kind::power, gamma};
    }

    family_kind kind() const { return kind_; }
    double gamma() const { return gamma_; }

    std::string name() const {
        switch (kind_) {
        case family_kind::klm: return "KLm";
        case family_kind::kl: return "KL";
        case family_kind::chi2m: return "chi2m";
        case family_kind::chi2: return "chi2";
        case family_kind::hellinger: return "hellinger";
        case family_kind::power: break;
        }
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof(buf), gamma_);
        return "power:" + std::string(buf, res.ptr);
    }

    // dom phi with endpoints (a, b).
    interval phi_domain() const {
        if (gamma_ == 2.0) return {-inf, inf, false, false};
        // phi(0) is finite iff gamma > 0.
        return {0.0, inf, gamma_ > 0.0, false};
    }

    // dom psi with endpoints (a*, b*).
    interval psi_domain() const {
        if (gamma_ < 1.0) {
            double b_star = 1.0 / (1.0 - gamma_);
            // Closure value psi(b*) is finite iff gamma < 0.
            return {-inf, b_star, false, gamma_ < 0.0};
        }
        return {-inf, inf, false, false};
    }

    friend bool operator==(const divergence_family&, const divergence_family&) = default;

private:
    divergence_family(family_kind k, double g) : kind_(k), gamma_(g) {}

    family_kind kind_;
    double gamma_;
};

// Parses "KLm" | "KL" | "chi2" | "chi2m" | "hellinger" | "power:<gamma>"
// (case-insensitive names).
inline divergence_family parse_family(std::string_view text) {
    std::string s(text);
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "klm" || lower == "el") return divergence_family::klm();
    if (lower == "kl") return divergence_family::kl();
    if (lower == "chi2") return divergence_family::chi2();
    if (lower == "chi2m") return divergence_family::chi2m();
    if (lower == "hellinger") return divergence_family::hellinger();
    if (lower.rfind("power:", 0) == 0) {
        std::string_view num = std::string_view(s).substr(6);
        double g = 0.0;
        auto res = std::from_chars(num.data(), num.data() + num.size(), g);
        if (res.ec != std::errc{} || res.ptr != num.data() + num.size() || num.empty())
            throw invalid_argument("bad power index in family '" + s + "'");
        return divergence_family::power(g);
    }
    throw invalid_argument("unknown divergence family '" + s + "'");
}

namespace detail {

inline bool is_log0(const divergence_family& f) { return f.gamma() == 0.0; }
inline bool is_log1(const divergence_family& f) { return f.gamma() == 1.0; }
inline bool is_quadratic(const divergence_family& f) { return f.gamma() == 2.0; }

} // namespace detail

// phi(x), +inf outside dom phi.
inline double phi(const divergence_family& f, double x) {
    if (std::isnan(x)) throw domain_error("phi: NaN argument");
    if (detail::is_quadratic(f)) return 0.5 * (x - 1.0) * (x - 1.0);
    if (x < 0.0 || x == inf) return inf;
    switch (f.kind()) {
    case family_kind::klm:
        return x == 0.0 ? inf : -std::log(x) + x - 1.0;
    case family_kind::kl:
        return x == 0.0 ? 1.0 : x * std::log(x) - x + 1.0;
    case family_kind::chi2m:
        return x == 0.0 ? inf : 0.5 * (x - 1.0) * (x - 1.0) / x;
    case family_kind::hellinger: {
        double r = std::sqrt(x) - 1.0;
        return 2.0 * r * r;
    }
    default:
        break;
    }
    const double g = f.gamma();
    if (detail::is_log0(f)) return x == 0.0 ? inf : -std::log(x) + x - 1.0;
    if (detail::is_log1(f)) return x == 0.0 ? 1.0 : x * std::log(x) - x + 1.0;
    // pow(0, g) is +inf for g < 0, which is the right closure.
    return (std::pow(x, g) - g * x + g - 1.0) / (g * (g - 1.0));
}

// (phi'(x), phi''(x)) on the interior of dom phi.
inline std::pair<double, double> phi_derivs(const divergence_family& f, double x) {
    if (!f.phi_domain().interior_contains(x))
        throw domain_error("phi_derivs: x outside int dom phi for " + f.name());
    if (detail::is_quadratic(f)) return {x - 1.0, 1.0};
    switch (f.kind()) {
    case family_kind::klm: return {1.0 - 1.0 / x, 1.0 / (x * x)};
    case family_kind::kl: return {std::log(x), 1.0 / x};
    case family_kind::chi2m: return {0.5 * (1.0 - 1.0 / (x * x)), 1.0 / (x * x * x)};
    case family_kind::hellinger: {
        double s = std::sqrt(x);
        return {2.0 * (1.0 - 1.0 / s), 1.0 / (x * s)};
    }
    default:
        break;
    }
    const double g = f.gamma();
    if (detail::is_log0(f)) return {1.0 - 1.0 / x, 1.0 / (x * x)};
    if (detail::is_log1(f)) return {std::log(x), 1.0 / x};
    return {(std::pow(x, g - 1.0) - 1.0) / (g - 1.0), std::pow(x, g - 2.0)};
}

// psi(t) = sup_x { t x - phi(x) }; +inf outside dom psi, closure value at a
// finite endpoint.
inline double psi(const divergence_family& f, double t) {
    if (std::isnan(t)) throw domain_error("psi: NaN argument");
    if (detail::is_quadratic(f)) return 0.5 * t * t + t;
    switch (f.kind()) {
    case family_kind::klm:
        return t < 1.0 ? -std::log1p(-t) : inf;
    case family_kind::kl:
        return std::expm1(t);
    case family_kind::chi2m:
        return t <= 0.5 ? 1.0 - std::sqrt(1.0 - 2.0 * t) : inf;
    case family_kind::hellinger:
        return t < 2.0 ? 2.0 * t / (2.0 - t) : inf;
    default:
        break;
    }
    const double g = f.gamma();
    if (detail::is_log0(f)) return t < 1.0 ? -std::log1p(-t) : inf;
    if (detail::is_log1(f)) return std::expm1(t);
    const double base = (g - 1.0) * t + 1.0;
    if (g < 1.0) {
        if (base < 0.0) return inf;
    } else if (base <= 0.0) {
        // phi is +inf on the negatives and phi'(0) = -1/(g-1) is finite:
        // the sup sits at x = 0 and psi is flat.
        return -1.0 / g;
    }
    return std::pow(base, g / (g - 1.0)) / g - 1.0 / g;
}

// (psi'(t), psi''(t)) on the interior of dom psi. psi' = (phi')^{-1} and
// psi'' = 1 / phi''((phi')^{-1}). For gamma > 1 other than 2 the conjugate is
// flat below -1/(gamma-1) and both derivatives are 0 there.
inline std::pair<double, double> psi_derivs(const divergence_family& f, double t) {
    if (!f.psi_domain().interior_contains(t))
        throw domain_error("psi_derivs: t outside int dom psi for " + f.name());
    if (detail::is_quadratic(f)) return {t + 1.0, 1.0};
    switch (f.kind()) {
    case family_kind::klm: {
        double r = 1.0 / (1.0 - t);
        return {r, r * r};
    }
    case family_kind::kl: {
        double e = std::exp(t);
        return {e, e};
    }
    case family_kind::chi2m: {
        double s = std::sqrt(1.0 - 2.0 * t);
        return {1.0 / s, 1.0 / (s * s * s)};
    }
    case family_kind::hellinger: {
        double r = 2.0 / (2.0 - t);
        return {r * r, r * r * r};
    }
    default:
        break;
    }
    const double g = f.gamma();
    if (detail::is_log0(f)) {
        double r = 1.0 / (1.0 - t);
        return {r, r * r};
    }
    if (detail::is_log1(f)) {
        double e = std::exp(t);
        return {e, e};
    }
    const double base = (g - 1.0) * t + 1.0;
    if (base <= 0.0) return {0.0, 0.0};
    return {std::pow(base, 1.0 / (g - 1.0)), std::pow(base, (2.0 - g) / (g - 1.0))};
}

// psi'(t) = (phi')^{-1}(t): the density ratio of the projection at dual value t.
inline double phi_prime_inverse(const divergence_family& f, double t) {
    return psi_derivs(f, t).first;
}

struct conjugate_grid {
    double lo = -50.0;
    double hi = 50.0;
    int points = 2001;
    // Each refinement zooms onto the two cells around the current best point.
    int refinements = 30;
};

// Brute-force conjugate: max over a grid of t x - phi(x), refined by
// repeated zooming. Valid because t x - phi(x) is concave in x.
inline double numeric_conjugate(const divergence_family& f, double t, const conjugate_grid& grid) {
    if (grid.points < 3 || !(grid.hi > grid.lo))
        throw invalid_argument("numeric_conjugate: degenerate grid");
    double lo = grid.lo;
    double hi = grid.hi;
    double best = -inf;
    for (int r = 0; r <= grid.refinements; ++r) {
        const double h = (hi - lo) / (grid.points - 1);
        int best_k = 0;
        double best_here = -inf;
        for (int k = 0; k < grid.points; ++k) {
            double x = lo + h * k;
            double p = phi(f, x);
            double v = p == inf ? -inf : t * x - p;
            if (v > best_here) {
                best_here = v;
                best_k = k;
            }
        }
        best = std::max(best, best_here);
        if (best_here == -inf) break;
        double new_lo = lo + h * std::max(best_k - 1, 0);
        double new_hi = lo + h * std::min(best_k + 1, grid.points - 1);
        lo = new_lo;
        hi = new_hi;
        if (hi - lo <= 0.0) break;
    }
    return best;
}

} // namespace phidiv
