#pragma once

// Posterior summaries: median / SD / 95% interval, relative odds ratios,
// implied combined bias and the fitted predictive distribution of tau^2_new.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaepi {

class Model;
struct PosteriorDraws;

class SummaryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Summary {
    double median = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0;  // 2.5%
    double ci_hi = 0.0;  // 97.5%
    double mean = 0.0;
    double mc_error = 0.0;  // batch means, of the mean

    bool operator==(const Summary&) const = default;
};

// Linear interpolation between order statistics. Needs >= 100 draws.
Summary summarize_param(std::span<const double> draws);

// Quantiles of exp(b0) are exp of the b0 quantiles; SD and mean are taken
// over the exponentiated draws.
Summary ror(std::span<const double> b0_draws);

// Per-iteration sum of the selected characteristics' draws, then summarised.
Summary combined_bias(std::span<const std::vector<double>> b0_draws, std::span<const std::size_t> subset);

struct PredictiveTau {
    double meanlog = 0.0;
    double sdlog = 0.0;
    double median = 0.0;
    double range_lo = 0.0;
    double range_hi = 0.0;
    // Quantiles of the raw tau^2_new samples, for comparison.
    double raw_median = 0.0;
    double raw_lo = 0.0;
    double raw_hi = 0.0;
};

// Median and 95% range of log-normal(meanlog, sdlog^2).
PredictiveTau fitted_lognormal(double meanlog, double sdlog);

// Samples log tau^2_new ~ N(mu_t, sigma_t^2) once per draw, fits a
// log-normal by the mean and SD of those samples.
PredictiveTau predictive_tau(std::span<const double> mu, std::span<const double> sigma, std::uint64_t seed);

// A named posterior quantity, as reported in tables.
struct ReportedQuantity {
    std::string name;
    std::string characteristic;  // empty for non-characteristic rows
    std::vector<std::vector<double>> chains;
};

// b0, phi, phi^2, kappa, kappa^2 (additive) or lambda, p0, then mu, sigma
// when the tau hierarchy is on. phi and kappa include the point mass at 0.
std::vector<ReportedQuantity> reported_quantities(const PosteriorDraws& draws, const Model& model);

// d and tau per meta-analysis.
std::vector<ReportedQuantity> meta_quantities(const PosteriorDraws& draws, const Model& model);

}  // namespace metaepi
