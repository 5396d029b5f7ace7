#include "metaepi/priors.hpp"

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>

namespace metaepi {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_logpdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double std_normal_quantile(double p) {
    static const boost::math::normal_distribution<double> unit;
    return boost::math::quantile(unit, p);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

void validate(const PriorSpec& prior) {
    std::visit(overloaded{
                   [](const NormalPrior& p) {
                       if (!(p.variance > 0.0)) throw PriorError("normal prior needs variance > 0");
                   },
                   [](const InverseGammaZeroMixture& p) {
                       if (!(p.shape > 0.0) || !(p.rate > 0.0)) {
                           throw PriorError("inverse-gamma mixture needs shape > 0 and rate > 0");
                       }
                   },
                   [](const UniformPrior& p) {
                       if (!(p.lo < p.hi)) throw PriorError("uniform prior needs lo < hi");
                   },
                   [](const LogNormalPrior& p) {
                       if (!(p.sdlog > 0.0)) throw PriorError("log-normal prior needs sdlog > 0");
                   },
                   [](const TruncatedLogNormalPrior& p) {
                       if (!(p.sdlog > 0.0)) throw PriorError("truncated log-normal needs sdlog > 0");
                       if (!(p.lower >= 0.0)) throw PriorError("truncated log-normal needs lower >= 0");
                   },
                   [](const UniformOnLogPrior& p) {
                       if (!(p.lo < p.hi)) throw PriorError("uniform-on-log prior needs lo < hi");
                   },
               },
               prior);
}

std::string family_name(const PriorSpec& prior) {
    return std::visit(overloaded{
                          [](const NormalPrior&) { return std::string("normal"); },
                          [](const InverseGammaZeroMixture&) {
                              return std::string("inverse-gamma-zero-mixture");
                          },
                          [](const UniformPrior&) { return std::string("uniform"); },
                          [](const LogNormalPrior&) { return std::string("log-normal"); },
                          [](const TruncatedLogNormalPrior&) {
                              return std::string("truncated-log-normal");
                          },
                          [](const UniformOnLogPrior&) { return std::string("uniform-on-log"); },
                      },
                      prior);
}

bool in_support(const PriorSpec& prior, double x) {
    if (std::isnan(x)) return false;
    return std::visit(overloaded{
                          [&](const NormalPrior&) { return std::isfinite(x); },
                          [&](const InverseGammaZeroMixture&) { return x > 0.0 && std::isfinite(x); },
                          [&](const UniformPrior& p) { return x >= p.lo && x <= p.hi; },
                          [&](const LogNormalPrior&) { return x > 0.0 && std::isfinite(x); },
                          [&](const TruncatedLogNormalPrior& p) {
                              return x > 0.0 && x >= p.lower && std::isfinite(x);
                          },
                          [&](const UniformOnLogPrior& p) {
                              if (!(x > 0.0)) return false;
                              const double l = std::log(x);
                              return l >= p.lo && l <= p.hi;
                          },
                      },
                      prior);
}

double log_density(const PriorSpec& prior, double x) {
    if (!in_support(prior, x)) return kNegInf;
    return std::visit(
        overloaded{
            [&](const NormalPrior& p) { return normal_logpdf(x, p.mean, std::sqrt(p.variance)); },
            [&](const InverseGammaZeroMixture& p) {
                return p.shape * std::log(p.rate) - std::lgamma(p.shape) - (p.shape + 1.0) * std::log(x) -
                       p.rate / x;
            },
            [&](const UniformPrior& p) { return -std::log(p.hi - p.lo); },
            [&](const LogNormalPrior& p) {
                const double l = std::log(x);
                return normal_logpdf(l, p.meanlog, p.sdlog) - l;
            },
            [&](const TruncatedLogNormalPrior& p) {
                const double l = std::log(x);
                // Mass of the untruncated law above `lower`.
                const double tail =
                    p.lower > 0.0 ? 1.0 - std_normal_cdf((std::log(p.lower) - p.meanlog) / p.sdlog) : 1.0;
                return normal_logpdf(l, p.meanlog, p.sdlog) - l - std::log(tail);
            },
            [&](const UniformOnLogPrior& p) { return -std::log(p.hi - p.lo) - std::log(x); },
        },
        prior);
}

double prior_quantile(const PriorSpec& prior, double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw PriorError("quantile probability must lie in (0, 1)");
    validate(prior);
    return std::visit(
        overloaded{
            [&](const NormalPrior& p) { return p.mean + std::sqrt(p.variance) * std_normal_quantile(prob); },
            [&](const InverseGammaZeroMixture&) -> double {
                throw PriorError("quantiles are not defined for the zero-mixture family");
            },
            [&](const UniformPrior& p) { return p.lo + prob * (p.hi - p.lo); },
            [&](const LogNormalPrior& p) { return std::exp(p.meanlog + p.sdlog * std_normal_quantile(prob)); },
            [&](const TruncatedLogNormalPrior& p) {
                // Invert Phi on the retained region [Phi(a), 1).
                const double base =
                    p.lower > 0.0 ? std_normal_cdf((std::log(p.lower) - p.meanlog) / p.sdlog) : 0.0;
                const double u = base + prob * (1.0 - base);
                return std::exp(p.meanlog + p.sdlog * std_normal_quantile(u));
            },
            [&](const UniformOnLogPrior& p) { return std::exp(p.lo + prob * (p.hi - p.lo)); },
        },
        prior);
}

std::vector<double> prior_quantiles(const PriorSpec& prior, std::span<const double> probs) {
    std::vector<double> out;
    out.reserve(probs.size());
    for (double q : probs) out.push_back(prior_quantile(prior, q));
    return out;
}

std::vector<NamedPrior> default_lambda_prior_set() {
    // Priors 1-4 are centred on a ratio of 1; prior 5 only supports ratios
    // above 1.
    return {
        {"prior1", LogNormalPrior{0.0, 0.5}},
        {"prior2", LogNormalPrior{0.0, 1.0}},
        {"prior3", UniformOnLogPrior{std::log(0.2), std::log(5.0)}},
        {"prior4", UniformOnLogPrior{std::log(0.1), std::log(10.0)}},
        {"prior5", TruncatedLogNormalPrior{0.0, 1.0, 1.0}},
    };
}

}  // namespace metaepi
