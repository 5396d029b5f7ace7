#pragma once

// Prior families used by the meta-epidemiological models.
//
// Hyperparameter conventions: Normal takes a variance; LogNormal and
// TruncatedLogNormal are parameterised by the mean and SD of log(x);
// UniformOnLog bounds are on the log scale. InverseGammaZeroMixture describes
// the slab of a point-mass-at-zero mixture; the atom weight is a separate
// sampled quantity (see ModelSpec).

#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace metaepi {

class PriorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NormalPrior {
    double mean = 0.0;
    double variance = 1000.0;
    bool operator==(const NormalPrior&) const = default;
};

struct InverseGammaZeroMixture {
    double shape = 0.001;
    double rate = 0.001;
    bool operator==(const InverseGammaZeroMixture&) const = default;
};

struct UniformPrior {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const UniformPrior&) const = default;
};

struct LogNormalPrior {
    double meanlog = 0.0;
    double sdlog = 1.0;
    bool operator==(const LogNormalPrior&) const = default;
};

struct TruncatedLogNormalPrior {
    double meanlog = 0.0;
    double sdlog = 1.0;
    double lower = 1.0;
    bool operator==(const TruncatedLogNormalPrior&) const = default;
};

struct UniformOnLogPrior {
    double lo = -1.0;
    double hi = 1.0;
    bool operator==(const UniformOnLogPrior&) const = default;
};

using PriorSpec = std::variant<NormalPrior, InverseGammaZeroMixture, UniformPrior, LogNormalPrior,
                               TruncatedLogNormalPrior, UniformOnLogPrior>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Throws PriorError if hyperparameters violate the family's constraints.
void validate(const PriorSpec& prior);

std::string family_name(const PriorSpec& prior);

// Log density on the natural scale; kNegInf outside the support. For the
// zero mixture this is the inverse-gamma slab density of the variance.
double log_density(const PriorSpec& prior, double x);

bool in_support(const PriorSpec& prior, double x);

// Quantiles on the natural scale. Throws PriorError for the zero mixture
// (its atom weight is not part of the spec) and for probs outside (0, 1).
std::vector<double> prior_quantiles(const PriorSpec& prior, std::span<const double> probs);
double prior_quantile(const PriorSpec& prior, double prob);

// The five candidate priors for the heterogeneity-variance ratio.
struct NamedPrior {
    std::string name;
    PriorSpec prior;
};
std::vector<NamedPrior> default_lambda_prior_set();

}  // namespace metaepi
