#include "metaepi/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "metaepi/mcmc.hpp"
#include "metaepi/model.hpp"
#include "metaepi/stats.hpp"

namespace metaepi {

namespace {

double xlogy_ratio(double x, double y) {
    // x log(x / y) with 0 log 0 = 0
    if (x == 0.0) return 0.0;
    return x * std::log(x / y);
}

std::vector<std::vector<double>> split_halves(std::span<const std::vector<double>> chains) {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

template <class Stat>
double batch_error(std::span<const double> draws, std::size_t batch_count, Stat stat) {
    if (batch_count < 10) throw DiagnosticError("batch-means MC error needs at least 10 batches");
    const std::size_t len = draws.size() / batch_count;
    if (len < 1) {
        throw DiagnosticError("too few draws (" + std::to_string(draws.size()) + ") for " +
                              std::to_string(batch_count) + " batches");
    }
    std::vector<double> values(batch_count);
    for (std::size_t b = 0; b < batch_count; ++b) values[b] = stat(draws.subspan(b * len, len));
    return stats::sd(values) / std::sqrt(static_cast<double>(batch_count));
}

}  // namespace

RhatResult rhat(std::span<const std::vector<double>> chains_in, bool split) {
    std::vector<std::vector<double>> halves;
    std::span<const std::vector<double>> chains = chains_in;
    if (split) {
        halves = split_halves(chains_in);
        chains = halves;
    }
    if (chains_in.size() < 2) throw DiagnosticError("R-hat needs at least 2 chains");
    const std::size_t n = chains.front().size();
    for (const auto& c : chains_in) {
        if (c.size() < 10) throw DiagnosticError("R-hat needs at least 10 draws per chain");
        if (c.size() != chains_in.front().size()) throw DiagnosticError("R-hat chains differ in length");
    }
    const double m = static_cast<double>(chains.size());
    const double nd = static_cast<double>(n);
    std::vector<double> means;
    double w = 0.0;
    for (const auto& c : chains) {
        means.push_back(stats::mean(c));
        const double s = stats::sd(c);
        w += s * s;
    }
    w /= m;
    const double sdm = stats::sd(means);
    const double b = nd * sdm * sdm;
    const double scale = std::max(1.0, std::abs(stats::mean(means)));
    if (!(w > 1e-26 * scale * scale)) {
        return {1.0, true};
    }
    const double var_plus = w * (nd - 1.0) / nd + b / nd;
    return {std::sqrt(var_plus / w), false};
}

double mc_error(std::span<const double> draws, std::size_t batch_count) {
    return batch_error(draws, batch_count, [](std::span<const double> s) { return stats::mean(s); });
}

double mc_error_quantile(std::span<const double> draws, double q, std::size_t batch_count) {
    return batch_error(draws, batch_count,
                       [q](std::span<const double> s) { return stats::quantile({s.begin(), s.end()}, q); });
}

double mc_error_sd(std::span<const double> draws, std::size_t batch_count) {
    return batch_error(draws, batch_count, [](std::span<const double> s) { return stats::sd(s); });
}

double arm_deviance(double r, double n, double p) {
    if (!(p > 0.0 && p < 1.0)) throw DiagnosticError("fitted probability outside (0, 1)");
    const double dev = 2.0 * (xlogy_ratio(r, n * p) + xlogy_ratio(n - r, n - n * p));
    // Tiny negative values are rounding at the saturated fit.
    return std::max(dev, 0.0);
}

double residual_deviance(std::span<const double> fitted, std::span<const double> events,
                         std::span<const double> sizes) {
    if (fitted.size() != events.size() || sizes.size() != events.size()) {
        throw DiagnosticError("residual_deviance: fitted, events and sizes differ in length");
    }
    double total = 0.0;
    for (std::size_t a = 0; a < fitted.size(); ++a) total += arm_deviance(events[a], sizes[a], fitted[a]);
    return total;
}

FitStatistics fit_statistics(double mean_deviance, double plugin_deviance) {
    FitStatistics f;
    f.d_res = mean_deviance;
    f.d_hat = plugin_deviance;
    f.p_d = mean_deviance - plugin_deviance;
    f.dic = f.d_res + f.p_d;
    f.p_d_negative = f.p_d < 0.0;
    return f;
}

FitStatistics dic(const PosteriorDraws& draws, const Model& model) {
    const std::size_t total = draws.total_draws();
    if (total == 0) throw DiagnosticError("dic needs at least one draw");
    std::vector<double> deviances;
    deviances.reserve(total);
    std::vector<double> mean_fitted(model.arm_count(), 0.0);
    for (const auto& c : draws.chains) {
        if (c.fitted_sum.size() != mean_fitted.size()) throw DiagnosticError("dic: draws do not match the model");
        deviances.insert(deviances.end(), c.deviance.begin(), c.deviance.end());
        for (std::size_t a = 0; a < mean_fitted.size(); ++a) mean_fitted[a] += c.fitted_sum[a];
    }
    for (auto& p : mean_fitted) p /= static_cast<double>(total);
    // Sort so the result does not depend on chain order.
    std::sort(deviances.begin(), deviances.end());
    return fit_statistics(stats::mean(deviances),
                          residual_deviance(mean_fitted, model.arm_events(), model.arm_sizes()));
}

bool dic_difference_meaningful(double delta) { return std::abs(delta) >= 5.0; }

ConvergenceReport convergence_report(const std::vector<std::string>& names,
                                     const std::vector<std::vector<std::vector<double>>>& series,
                                     double threshold, bool split) {
    if (names.size() != series.size()) throw DiagnosticError("convergence_report: names and series differ");
    ConvergenceReport rep;
    rep.threshold = threshold;
    rep.max_rhat = 1.0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        ParameterConvergence pc;
        pc.name = names[i];
        const auto r = rhat(series[i], split);
        pc.rhat = r.value;
        pc.degenerate = r.degenerate;
        std::vector<double> pooled;
        for (const auto& c : series[i]) pooled.insert(pooled.end(), c.begin(), c.end());
        pc.sd = stats::sd(pooled);
        pc.mc_error = pooled.size() >= 50 ? mc_error(pooled) : pc.sd;
        rep.max_rhat = std::max(rep.max_rhat, pc.rhat);
        rep.parameters.push_back(std::move(pc));
    }
    rep.converged = rep.max_rhat < threshold;
    return rep;
}

}  // namespace metaepi
