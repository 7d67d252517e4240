#pragma once

// Chi-square and standard normal distribution functions.

#include <cmath>
#include <limits>

#include "phidiv/errors.hpp"

namespace phidiv {

namespace detail {

// Regularized lower incomplete gamma P(a, x) by its power series; x < a + 1.
inline double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by modified Lentz continued
// fraction; x >= a + 1.
inline double gamma_q_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-17) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x == std::numeric_limits<double>::infinity()) return 1.0;
    return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_fraction(a, x);
}

inline double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x == std::numeric_limits<double>::infinity()) return 0.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_fraction(a, x);
}

inline void require_df(double k) {
    if (!(k >= 1.0) || !std::isfinite(k)) throw invalid_argument("degrees of freedom must be >= 1");
}

inline void require_open_unit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw invalid_argument("probability must lie in (0, 1)");
}

} // namespace detail

inline double chi2_cdf(double x, double k) {
    detail::require_df(k);
    if (std::isnan(x)) throw invalid_argument("chi2_cdf: NaN argument");
    return detail::gamma_p(0.5 * k, 0.5 * x);
}

// Upper tail 1 - F(x), accurate far in the tail.
inline double chi2_sf(double x, double k) {
    detail::require_df(k);
    if (std::isnan(x)) throw invalid_argument("chi2_sf: NaN argument");
    return detail::gamma_q(0.5 * k, 0.5 * x);
}

inline double chi2_pdf(double x, double k) {
    if (x <= 0.0) return k == 2.0 && x == 0.0 ? 0.5 : 0.0;
    double a = 0.5 * k;
    return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a));
}

inline double chi2_quantile(double p, double k) {
    detail::require_df(k);
    detail::require_open_unit(p);
    // Bracket, then safeguarded Newton.
    double lo = 0.0;
    double hi = std::max(1.0, k);
    while (chi2_cdf(hi, k) < p) {
        lo = hi;
        hi *= 2.0;
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double f = chi2_cdf(x, k) - p;
        if (f == 0.0) return x;
        if (f < 0.0) lo = x; else hi = x;
        double dens = chi2_pdf(x, k);
        double next = dens > 0.0 ? x - f / dens : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * std::max(1.0, x)) return next;
        x = next;
    }
    return x;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Acklam's rational approximation polished with Halley steps.
inline double normal_quantile(double p) {
    detail::require_open_unit(p);
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    for (int it = 0; it < 3; ++it) {
        double e = normal_cdf(x) - p;
        double u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

} // namespace phidiv
