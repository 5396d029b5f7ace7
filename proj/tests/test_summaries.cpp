#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "metaepi/mcmc.hpp"
#include "metaepi/summaries.hpp"
#include "support.hpp"

using namespace metaepi;

namespace {

std::vector<double> normals(std::uint64_t seed, std::size_t n, double mean, double sd) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(mean, sd);
    std::vector<double> x(n);
    for (auto& v : x) v = z(rng);
    return x;
}

}  // namespace

TEST(SummarizeParam, ConstantDraws) {
    const std::vector<double> x(200, -0.7);
    const auto s = summarize_param(x);
    EXPECT_EQ(s.median, -0.7);
    EXPECT_EQ(s.sd, 0.0);
    EXPECT_EQ(s.ci_lo, -0.7);
    EXPECT_EQ(s.ci_hi, -0.7);
}

TEST(SummarizeParam, OrderStatisticInterpolation) {
    std::vector<double> x(1000);
    std::iota(x.begin(), x.end(), 1.0);
    std::shuffle(x.begin(), x.end(), std::mt19937_64(4));
    const auto s = summarize_param(x);
    // Position (n - 1) q between order statistics: 24.975 -> 25.975.
    EXPECT_NEAR(s.median, 500.5, 1e-12);
    EXPECT_NEAR(s.ci_lo, 25.975, 1e-9);
    EXPECT_NEAR(s.ci_hi, 975.025, 1e-9);
}

TEST(SummarizeParam, StandardNormal) {
    const auto s = summarize_param(normals(1, 1000000, 0.0, 1.0));
    EXPECT_NEAR(s.median, 0.0, 0.01);
    EXPECT_NEAR(s.sd, 1.0, 0.01);
    EXPECT_NEAR(s.ci_lo, -1.96, 0.01);
    EXPECT_NEAR(s.ci_hi, 1.96, 0.01);
}

TEST(SummarizeParam, Errors) {
    EXPECT_THROW(summarize_param(std::vector<double>{}), SummaryError);
    EXPECT_THROW(summarize_param(std::vector<double>(99, 1.0)), SummaryError);
}

TEST(Ror, Anchors) {
    EXPECT_NEAR(ror(std::vector<double>(100, -0.16)).median, 0.852, 5e-4);
    EXPECT_EQ(ror(std::vector<double>(100, 0.0)).median, 1.0);
}

TEST(Ror, QuantilesAreExponentiatedExactly) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto b0 = normals(seed, 1001 + seed, -0.1, 0.3);
        const auto s = summarize_param(b0);
        const auto r = ror(b0);
        EXPECT_EQ(r.median, std::exp(s.median));
        EXPECT_EQ(r.ci_lo, std::exp(s.ci_lo));
        EXPECT_EQ(r.ci_hi, std::exp(s.ci_hi));
        EXPECT_GT(r.sd, 0.0);
    }
}

TEST(CombinedBias, SingletonMatchesMarginal) {
    const std::vector<std::vector<double>> b{normals(1, 500, 0, 1), normals(2, 500, 0, 1), normals(3, 500, 0, 1)};
    const std::vector<std::size_t> sub{2};
    EXPECT_EQ(combined_bias(b, sub), summarize_param(b[2]));
}

TEST(CombinedBias, AccountsForCorrelation) {
    auto a = normals(5, 1000, -0.1, 0.2);
    std::vector<double> neg(a.size());
    std::transform(a.begin(), a.end(), neg.begin(), [](double x) { return -x; });
    const std::vector<std::vector<double>> b{a, neg};
    const std::vector<std::size_t> sub{0, 1};
    const auto s = combined_bias(b, sub);
    EXPECT_NEAR(s.sd, 0.0, 1e-15);
    EXPECT_GT(summarize_param(a).sd, 0.1);
}

TEST(CombinedBias, ThreeCharacteristicAnchor) {
    // Independent normal marginals with the medians and SDs of the three
    // fitted characteristics.
    const std::vector<std::vector<double>> b{normals(11, 200000, -0.05, 0.05), normals(12, 200000, -0.04, 0.04),
                                             normals(13, 200000, -0.09, 0.04)};
    const std::vector<std::size_t> all{0, 1, 2};
    const auto s = combined_bias(b, all);
    EXPECT_NEAR(s.median, -0.18, 0.005);
    EXPECT_NEAR(std::exp(s.median), 0.84, 0.005);
    // Reordering the characteristics gives the same summary.
    const std::vector<std::vector<double>> rb{b[2], b[0], b[1]};
    const auto r = combined_bias(rb, all);
    EXPECT_NEAR(r.median, s.median, 1e-12);
    EXPECT_NEAR(r.sd, s.sd, 1e-12);
    EXPECT_NEAR(r.ci_lo, s.ci_lo, 1e-12);
    EXPECT_NEAR(r.ci_hi, s.ci_hi, 1e-12);
}

TEST(CombinedBias, Errors) {
    const std::vector<std::vector<double>> b{std::vector<double>(200, 0.0), std::vector<double>(201, 0.0)};
    const std::vector<std::size_t> both{0, 1}, none{}, bad{5};
    EXPECT_THROW(combined_bias(b, both), SummaryError);
    EXPECT_THROW(combined_bias(b, none), SummaryError);
    EXPECT_THROW(combined_bias(b, bad), SummaryError);
}

TEST(PredictiveTau, DegenerateSigma) {
    const std::vector<double> mu(1000, -2.94), sigma(1000, 0.0);
    const auto p = predictive_tau(mu, sigma, 1);
    EXPECT_NEAR(p.meanlog, -2.94, 1e-12);
    EXPECT_NEAR(p.sdlog, 0.0, 1e-12);
    EXPECT_NEAR(p.median, 0.053, 5e-4);
}

TEST(PredictiveTau, FittedLogNormalAnchor) {
    const auto p = fitted_lognormal(-2.94, 1.69);
    EXPECT_NEAR(p.median, 0.05, 0.005);
    EXPECT_NEAR(p.range_lo, 0.002, 0.0005);
    EXPECT_NEAR(p.range_hi, 1.45, 0.01);
    EXPECT_NEAR(p.range_hi, 1.42, 0.05);
    EXPECT_DOUBLE_EQ(p.range_lo, std::exp(-2.94 - 1.96 * 1.69));
}

TEST(PredictiveTau, MonotoneInDispersion) {
    const auto mu = normals(3, 5000, -3.0, 0.2);
    std::vector<double> sigma(5000, 0.5), wider(5000, 0.8);
    const auto a = predictive_tau(mu, sigma, 9);
    const auto b = predictive_tau(mu, wider, 9);
    EXPECT_GT(b.sdlog, a.sdlog);
    EXPECT_GT(b.range_hi, a.range_hi);
    EXPECT_LT(b.range_lo, a.range_lo);
    // Same seed, same answer.
    EXPECT_EQ(predictive_tau(mu, sigma, 9).meanlog, a.meanlog);
    EXPECT_THROW(predictive_tau(mu, std::vector<double>(10, 1.0), 1), SummaryError);
}

TEST(ReportedQuantities, RowsAndPointMass) {
    for (auto structure : {VarianceStructure::Additive, VarianceStructure::LabelInvariant}) {
        const Model model(make_spec(structure, {0}, true), testsupport::small_grid_dataset());
        McmcConfig cfg;
        cfg.n_chains = 2;
        cfg.burn_in = 200;
        cfg.iterations = 300;
        const auto draws = run(model, cfg);
        const auto rows = reported_quantities(draws, model);
        std::vector<std::string> names;
        for (const auto& r : rows) names.push_back(r.name);
        const std::vector<std::string> expected =
            structure == VarianceStructure::Additive
                ? std::vector<std::string>{"b0", "phi", "phi_sq", "kappa", "kappa_sq", "p0", "mu", "sigma"}
                : std::vector<std::string>{"b0", "phi", "phi_sq", "lambda", "p0", "mu", "sigma"};
        EXPECT_EQ(names, expected);
        const auto& L = model.layout();
        for (std::size_t c = 0; c < 2; ++c) {
            const auto& phi = rows[1].chains[c];
            const auto& phi_sq = rows[2].chains[c];
            const auto& z = draws.chains[c].indicators[L.z_phi(0)];
            ASSERT_EQ(phi.size(), 300u);
            for (std::size_t i = 0; i < phi.size(); ++i) {
                EXPECT_NEAR(phi[i] * phi[i], phi_sq[i], 1e-12);
                if (!z[i]) {
                    EXPECT_EQ(phi[i], 0.0);
                }
            }
        }
        EXPECT_EQ(meta_quantities(draws, model).size(), 2 * model.meta_count());
        EXPECT_EQ(meta_quantities(draws, model)[0].name, "d[m1]");
    }
}
