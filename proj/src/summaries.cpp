#include "metaepi/summaries.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "metaepi/diagnostics.hpp"
#include "metaepi/mcmc.hpp"
#include "metaepi/model.hpp"
#include "metaepi/stats.hpp"

namespace metaepi {

namespace {

constexpr std::size_t kMinDraws = 100;
constexpr double kZ975 = 1.96;

}  // namespace

Summary summarize_param(std::span<const double> draws) {
    if (draws.empty()) throw SummaryError("cannot summarise an empty draw set");
    if (draws.size() < kMinDraws) {
        throw SummaryError("need at least " + std::to_string(kMinDraws) + " draws, got " +
                           std::to_string(draws.size()));
    }
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    Summary s;
    s.median = stats::quantile_sorted(sorted, 0.5);
    s.ci_lo = stats::quantile_sorted(sorted, 0.025);
    s.ci_hi = stats::quantile_sorted(sorted, 0.975);
    s.sd = stats::sd(draws);
    s.mean = stats::mean(draws);
    s.mc_error = draws.size() >= 500 ? mc_error(draws) : s.sd / std::sqrt(static_cast<double>(draws.size()));
    return s;
}

Summary ror(std::span<const double> b0_draws) {
    Summary s = summarize_param(b0_draws);
    std::vector<double> e(b0_draws.size());
    std::transform(b0_draws.begin(), b0_draws.end(), e.begin(), [](double x) { return std::exp(x); });
    const Summary se = summarize_param(e);
    s.median = std::exp(s.median);
    s.ci_lo = std::exp(s.ci_lo);
    s.ci_hi = std::exp(s.ci_hi);
    s.sd = se.sd;
    s.mean = se.mean;
    s.mc_error = se.mc_error;
    return s;
}

Summary combined_bias(std::span<const std::vector<double>> b0_draws, std::span<const std::size_t> subset) {
    if (subset.empty()) throw SummaryError("combined_bias needs a non-empty subset");
    for (auto j : subset) {
        if (j >= b0_draws.size()) throw SummaryError("combined_bias: characteristic index out of range");
        if (b0_draws[j].size() != b0_draws[subset.front()].size()) {
            throw SummaryError("combined_bias: draw vectors are not aligned");
        }
    }
    std::vector<double> total(b0_draws[subset.front()].size(), 0.0);
    for (auto j : subset) {
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += b0_draws[j][i];
    }
    return summarize_param(total);
}

PredictiveTau fitted_lognormal(double meanlog, double sdlog) {
    PredictiveTau p;
    p.meanlog = meanlog;
    p.sdlog = sdlog;
    p.median = std::exp(meanlog);
    p.range_lo = std::exp(meanlog - kZ975 * sdlog);
    p.range_hi = std::exp(meanlog + kZ975 * sdlog);
    p.raw_median = p.median;
    p.raw_lo = p.range_lo;
    p.raw_hi = p.range_hi;
    return p;
}

PredictiveTau predictive_tau(std::span<const double> mu, std::span<const double> sigma, std::uint64_t seed) {
    if (mu.size() != sigma.size()) throw SummaryError("predictive_tau: mu and sigma draws are not aligned");
    if (mu.empty()) throw SummaryError("predictive_tau: no draws");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> log_tau_sq(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) log_tau_sq[i] = mu[i] + sigma[i] * normal(rng);
    PredictiveTau p = fitted_lognormal(stats::mean(log_tau_sq), stats::sd(log_tau_sq));
    std::sort(log_tau_sq.begin(), log_tau_sq.end());
    p.raw_median = std::exp(stats::quantile_sorted(log_tau_sq, 0.5));
    p.raw_lo = std::exp(stats::quantile_sorted(log_tau_sq, 0.025));
    p.raw_hi = std::exp(stats::quantile_sorted(log_tau_sq, 0.975));
    return p;
}

std::vector<ReportedQuantity> reported_quantities(const PosteriorDraws& draws, const Model& model) {
    const auto& L = model.layout();
    std::vector<ReportedQuantity> out;
    const auto map_chains = [&](std::size_t k, auto fn, std::size_t z) {
        std::vector<std::vector<double>> res;
        for (std::size_t c = 0; c < draws.chains.size(); ++c) {
            const auto& v = draws.chain(c, k);
            const auto& ind = draws.chains[c].indicators.at(z);
            std::vector<double> r(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) r[i] = fn(ind[i] ? v[i] : 0.0);
            res.push_back(std::move(r));
        }
        return res;
    };
    const auto ident = [](double x) { return x; };
    const auto root = [](double x) { return std::sqrt(x); };
    for (std::size_t j = 0; j < L.characteristic_count(); ++j) {
        const std::string ch = model.characteristic_name(j);
        out.push_back({"b0", ch, draws.by_chain(L.b0(j))});
        out.push_back({"phi", ch, map_chains(L.phi_var(j), root, L.z_phi(j))});
        out.push_back({"phi_sq", ch, map_chains(L.phi_var(j), ident, L.z_phi(j))});
        if (L.additive()) {
            out.push_back({"kappa", ch, map_chains(L.scale(j), root, L.z_kappa(j))});
            out.push_back({"kappa_sq", ch, map_chains(L.scale(j), ident, L.z_kappa(j))});
        } else {
            out.push_back({"lambda", ch, draws.by_chain(L.scale(j))});
        }
        out.push_back({"p0", ch, draws.by_chain(L.p0(j))});
    }
    if (L.tau_hierarchy()) {
        out.push_back({"mu", "", draws.by_chain(L.mu())});
        out.push_back({"sigma", "", draws.by_chain(L.sigma())});
    }
    return out;
}

std::vector<ReportedQuantity> meta_quantities(const PosteriorDraws& draws, const Model& model) {
    const auto& L = model.layout();
    std::vector<ReportedQuantity> out;
    for (std::size_t m = 0; m < L.meta_count(); ++m) {
        const std::string id = model.dataset().meta_analyses[m].meta_id;
        out.push_back({"d[" + id + "]", "", draws.by_chain(L.d(m))});
        out.push_back({"tau[" + id + "]", "", draws.by_chain(L.tau(m))});
    }
    return out;
}

}  // namespace metaepi
