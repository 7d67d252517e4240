#include <gtest/gtest.h>

#include <random>

#include "phidiv/inference.hpp"

using namespace phidiv;

namespace {

vec scalar(double v) {
    vec out(1);
    out << v;
    return out;
}

weighted_sample uniform_draws(std::uint64_t seed, int n, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> xs(n);
    for (auto& x : xs) x = u(rng);
    return weighted_sample::from_values(xs);
}

void expect_consistent(const test_report& r) {
    if (r.boundary) {
        EXPECT_TRUE(r.reject);
        return;
    }
    EXPECT_DOUBLE_EQ(r.p_value, 1.0 - chi2_cdf(r.statistic, r.df));
    EXPECT_DOUBLE_EQ(r.critical_value, chi2_quantile(1.0 - r.alpha, r.df));
    EXPECT_EQ(r.reject, r.statistic > r.critical_value);
}

} // namespace

TEST(Inference, WorkedExampleStatistic) {
    auto s = weighted_sample::from_values({0.0, 1.0});
    auto r = test_theta_simple(divergence_family::chi2(), mean_model(), s, scalar(1.0), 0.05);
    EXPECT_NEAR(r.divergence, 0.5, 1e-10);
    EXPECT_NEAR(r.statistic, 2.0, 1e-10);
    EXPECT_EQ(r.df, 1);
    EXPECT_FALSE(r.reject);
    expect_consistent(r);
}

TEST(Inference, DegreesOfFreedomPerTest) {
    auto s = uniform_draws(1, 200);
    auto model = mean_variance_model();
    auto f = divergence_family::klm();
    auto m = test_model(f, model, s, 0.05);
    auto simple = test_theta_simple(f, model, s, scalar(1.0 / 3.0), 0.05);
    auto ratio = test_theta_composite(f, model, s, scalar(1.0 / 3.0), 0.05);
    EXPECT_EQ(m.df, 1);
    EXPECT_EQ(simple.df, 2);
    EXPECT_EQ(ratio.df, 1);
    EXPECT_EQ(std::string(to_string(m.kind)), "model-test");
    for (const auto& r : {m, simple, ratio}) expect_consistent(r);
    ASSERT_TRUE(simple.sigma2.has_value());
    EXPECT_GE(*simple.sigma2, 0.0);
    // the ratio statistic never exceeds the simple one at the same theta
    EXPECT_LE(ratio.statistic, simple.statistic + 1e-9);
    EXPECT_GE(ratio.statistic, 0.0);
}

TEST(Inference, ModelTestOnExactFit) {
    auto s = weighted_sample::from_values({-2.0, -1.0, 1.0, 2.0});
    auto r = test_model(divergence_family::klm(), mean_variance_model(), s, 0.05);
    EXPECT_NEAR(r.statistic, 0.0, 1e-12);
    EXPECT_FALSE(r.reject);
    ASSERT_TRUE(r.theta_hat.has_value());
    EXPECT_NEAR((*r.theta_hat)[0], 2.5, 1e-8);
}

TEST(Inference, ModelTestNeedsOveridentification) {
    auto s = uniform_draws(2, 50);
    EXPECT_THROW(test_model(divergence_family::kl(), mean_model(), s, 0.05), phidiv::not_applicable);
}

TEST(Inference, BoundaryIsRejection) {
    auto s = weighted_sample::from_values({0.0, 1.0, 0.5});
    auto r = test_theta_simple(divergence_family::klm(), mean_model(), s, scalar(1.0), 0.05);
    EXPECT_TRUE(r.boundary);
    EXPECT_TRUE(r.reject);
    EXPECT_EQ(r.statistic, inf);
    EXPECT_EQ(r.p_value, 0.0);
    EXPECT_FALSE(r.note.empty());
}

TEST(Inference, RejectsBadAlpha) {
    auto s = uniform_draws(3, 20);
    EXPECT_THROW(test_theta_simple(divergence_family::kl(), mean_variance_model(), s, scalar(0.3), 1.5),
                 phidiv::invalid_argument);
}

TEST(Inference, ConfidenceRegionScan) {
    auto s = uniform_draws(4, 300);
    auto cr = confidence_region(divergence_family::klm(), mean_variance_model(), s, 0.05, {{0.2, 0.5, 301}});
    EXPECT_FALSE(cr.empty);
    EXPECT_EQ(cr.df, 1);
    EXPECT_LE(cr.lower[0], cr.theta_hat[0]);
    EXPECT_GE(cr.upper[0], cr.theta_hat[0]);
    // every accepted point passes the ratio test at the same level
    for (std::size_t k = 0; k < cr.grid.size(); k += 25) {
        auto r = test_theta_composite(divergence_family::klm(), mean_variance_model(), s, cr.grid[k], 0.05);
        EXPECT_EQ(cr.inside[k], !r.reject) << cr.grid[k][0];
    }
    // region is an interval for this convex profile
    bool seen = false, left = false;
    for (bool in : cr.inside) {
        if (in && left) ADD_FAILURE() << "region is not connected";
        if (in) seen = true;
        if (!in && seen) left = true;
    }
    EXPECT_EQ(cr.region().size(),
              static_cast<std::size_t>(std::count(cr.inside.begin(), cr.inside.end(), true)));
}

TEST(Inference, WiderAtHigherConfidence) {
    auto s = uniform_draws(5, 150);
    auto a = confidence_region(divergence_family::kl(), mean_variance_model(), s, 0.10, {{0.1, 0.6, 201}});
    auto b = confidence_region(divergence_family::kl(), mean_variance_model(), s, 0.01, {{0.1, 0.6, 201}});
    EXPECT_LE(b.lower[0], a.lower[0]);
    EXPECT_GE(b.upper[0], a.upper[0]);
}

TEST(Inference, PowerApproximation) {
    const double q = chi2_quantile(0.95, 1);
    // at n = q / (2D) the approximation is exactly one half
    EXPECT_NEAR(power_approx(q / 0.2, 0.05, 1, 0.1, 1.0), 0.5, 1e-15);
    EXPECT_GT(power_approx(200, 0.05, 1, 0.1, 1.0), power_approx(100, 0.05, 1, 0.1, 1.0));
    EXPECT_GT(power_approx(100, 0.05, 1, 0.2, 1.0), power_approx(100, 0.05, 1, 0.1, 1.0));
    EXPECT_THROW(power_approx(100, 0.05, 1, 0.1, 0.0), phidiv::invalid_argument);
}

TEST(Inference, SampleSize) {
    EXPECT_EQ(sample_size(0.5, 0.05, 1, 0.1, 1.0), 20);
    EXPECT_NEAR(sample_size_root(0.5, 0.05, 1, 0.1, 1.0), chi2_quantile(0.95, 1) / 0.2, 1e-12);
    EXPECT_THROW(sample_size(0.8, 0.05, 1, 0.0, 1.0), phidiv::invalid_argument);
    EXPECT_THROW(sample_size(1.0, 0.05, 1, 0.1, 1.0), phidiv::invalid_argument);
}

TEST(Inference, SampleSizeRoundTrip) {
    for (double beta : {0.2, 0.5, 0.7, 0.8, 0.9, 0.95})
        for (double D : {0.01, 0.05, 0.2})
            for (double sigma : {0.3, 1.0, 2.0})
                for (double alpha : {0.01, 0.05, 0.1})
                    for (int df : {1, 3}) {
                        long long n = sample_size(beta, alpha, df, D, sigma);
                        double root = sample_size_root(beta, alpha, df, D, sigma);
                        if (root >= 1.0) {
                            EXPECT_NEAR(power_approx(root, alpha, df, D, sigma), beta, 1e-9);
                        }
                        EXPECT_GE(power_approx(static_cast<double>(n), alpha, df, D, sigma), beta - 0.01);
                    }
}
