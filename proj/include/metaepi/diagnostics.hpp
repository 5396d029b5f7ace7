#pragma once

// Convergence and fit diagnostics: Brooks-Gelman-Rubin R-hat, batch-means
// Monte Carlo error, residual deviance and DIC.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaepi {

class Model;
struct PosteriorDraws;

class DiagnosticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RhatResult {
    double value = 1.0;
    bool degenerate = false;  // zero within-chain variance
};

// Potential scale reduction sqrt((W (n - 1) / n + B / n) / W). With `split`
// each chain is halved first. Needs >= 2 chains of >= 10 draws of equal
// length.
RhatResult rhat(std::span<const std::vector<double>> chains, bool split = false);

// Batch-means standard error of the mean: SD of batch means / sqrt(batches).
// Trailing draws that do not fill a batch are dropped.
double mc_error(std::span<const double> draws, std::size_t batch_count = 50);

// Same construction for the q-quantile (batch quantiles instead of means).
double mc_error_quantile(std::span<const double> draws, double q, std::size_t batch_count = 50);

// Batch-means error of the sample SD.
double mc_error_sd(std::span<const double> draws, std::size_t batch_count = 50);

// Saturated-vs-fitted binomial deviance
//   sum 2 [r log(r / (n p)) + (n - r) log((n - r) / (n - n p))], 0 log 0 = 0.
// Throws DiagnosticError if any fitted probability is outside (0, 1).
double residual_deviance(std::span<const double> fitted, std::span<const double> events,
                         std::span<const double> sizes);
double arm_deviance(double events, double size, double fitted);

struct FitStatistics {
    double d_res = 0.0;    // posterior mean residual deviance
    double d_hat = 0.0;    // deviance at posterior-mean fitted probabilities
    double p_d = 0.0;      // d_res - d_hat
    double dic = 0.0;      // d_res + p_d
    bool p_d_negative = false;
};

FitStatistics fit_statistics(double mean_deviance, double plugin_deviance);

// D_res from the per-draw deviances, plug-in deviance at the posterior mean
// of each arm's fitted probability.
FitStatistics dic(const PosteriorDraws& draws, const Model& model);

// |delta| < 5 is not a meaningful DIC difference.
bool dic_difference_meaningful(double delta);

struct ParameterConvergence {
    std::string name;
    double rhat = 1.0;
    bool degenerate = false;
    double mc_error = 0.0;
    double sd = 0.0;
};

struct ConvergenceReport {
    std::vector<ParameterConvergence> parameters;
    double max_rhat = 1.0;
    double threshold = 1.05;
    bool converged = true;
};

// `series[i]` holds per-chain draws of the quantity named `names[i]`.
ConvergenceReport convergence_report(const std::vector<std::string>& names,
                                     const std::vector<std::vector<std::vector<double>>>& series,
                                     double threshold = 1.05, bool split = false);

}  // namespace metaepi
