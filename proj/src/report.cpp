#include "metaepi/report.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "metaepi/model_config.hpp"

namespace metaepi {

using nlohmann::json;

namespace {

std::vector<double> pool(const std::vector<std::vector<double>>& chains) {
    std::vector<double> out;
    for (const auto& c : chains) out.insert(out.end(), c.begin(), c.end());
    return out;
}

json optional_summary(const std::optional<Summary>& s) { return s ? summary_to_json(*s) : json(nullptr); }

Summary summary_from_json(const json& j) {
    Summary s;
    s.median = j.at("median").get<double>();
    s.sd = j.at("sd").get<double>();
    s.ci_lo = j.at("ci_lo").get<double>();
    s.ci_hi = j.at("ci_hi").get<double>();
    s.mean = j.at("mean").get<double>();
    s.mc_error = j.at("mc_error").get<double>();
    return s;
}

std::optional<Summary> optional_summary_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return summary_from_json(j);
}

json rows_to_json(const std::vector<SummaryRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"label", r.label}, {"characteristic", r.characteristic}, {"summary", optional_summary(r.summary)}});
    }
    return out;
}

std::vector<SummaryRow> rows_from_json(const json& j) {
    std::vector<SummaryRow> out;
    for (const auto& r : j) {
        out.push_back({r.at("label").get<std::string>(), r.at("characteristic").get<std::string>(),
                       optional_summary_from_json(r.at("summary"))});
    }
    return out;
}

json mcmc_to_json(const McmcConfig& c) {
    return {{"n_chains", c.n_chains},         {"burn_in", c.burn_in},
            {"iterations", c.iterations},     {"thin", c.thin},
            {"seed", c.seed},                 {"adapt_window", c.adapt_window},
            {"target_accept", c.target_accept}, {"initial_scale", c.initial_scale},
            {"chain_seeds", c.chain_seeds},   {"monitor_trials", c.monitor_trials}};
}

McmcConfig mcmc_from_json(const json& j) {
    McmcConfig c;
    c.n_chains = j.at("n_chains").get<std::size_t>();
    c.burn_in = j.at("burn_in").get<std::size_t>();
    c.iterations = j.at("iterations").get<std::size_t>();
    c.thin = j.at("thin").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.adapt_window = j.at("adapt_window").get<std::size_t>();
    c.target_accept = j.at("target_accept").get<double>();
    c.initial_scale = j.at("initial_scale").get<double>();
    c.chain_seeds = j.at("chain_seeds").get<std::vector<std::uint64_t>>();
    c.monitor_trials = j.at("monitor_trials").get<bool>();
    return c;
}

std::string cell(double v) {
    // Avoid printing -0.00.
    std::string s = fmt::format("{:.2f}", v);
    if (s == "-0.00") s = "0.00";
    return s;
}

std::string row_name(const SummaryRow& r) {
    return r.characteristic.empty() ? r.label : r.label + "[" + r.characteristic + "]";
}

std::string render_row(const std::string& name, const std::optional<Summary>& s, std::size_t width) {
    if (!s) return fmt::format("{:<{}}{:>9}\n", name, width, "n/a");
    return fmt::format("{:<{}}{:>9}{:>9}{:>9}{:>9}\n", name, width, cell(s->median), cell(s->sd), cell(s->ci_lo),
                       cell(s->ci_hi));
}

}  // namespace

std::uint64_t predictive_seed(const McmcConfig& mcmc) { return derive_seed(mcmc.seed, 0x7461755FULL); }

RunReport make_report(const Model& model, const PosteriorDraws& draws, double rhat_threshold) {
    RunReport rep;
    rep.spec = model.spec();
    rep.dataset = summarize(model.dataset());
    rep.input_meta_count = model.meta_count();
    rep.mcmc = draws.config;
    for (const auto& c : draws.chains) rep.chain_seeds.push_back(c.seed);

    const bool additive = model.layout().additive();
    const auto quantities = reported_quantities(draws, model);
    std::vector<std::string> conv_names;
    std::vector<std::vector<std::vector<double>>> conv_series;
    std::vector<std::vector<double>> b0_pooled;

    const auto find = [&](const std::string& name, const std::string& ch) -> const ReportedQuantity* {
        for (const auto& q : quantities) {
            if (q.name == name && q.characteristic == ch) return &q;
        }
        return nullptr;
    };
    const auto summary_of = [&](const ReportedQuantity* q) -> std::optional<Summary> {
        if (!q) return std::nullopt;
        return summarize_param(pool(q->chains));
    };

    for (std::size_t j = 0; j < model.characteristic_count(); ++j) {
        const std::string ch = model.characteristic_name(j);
        const auto* b0 = find("b0", ch);
        b0_pooled.push_back(pool(b0->chains));
        rep.rows.push_back({"b0", ch, summarize_param(b0_pooled.back())});
        rep.rows.push_back({"ROR", ch, ror(b0_pooled.back())});
        rep.rows.push_back({"kappa", ch, summary_of(find("kappa", ch))});
        rep.rows.push_back({"kappa_sq", ch, summary_of(find("kappa_sq", ch))});
        rep.rows.push_back({"lambda", ch, summary_of(find("lambda", ch))});
        rep.rows.push_back({"phi", ch, summary_of(find("phi", ch))});
        rep.rows.push_back({"phi_sq", ch, summary_of(find("phi_sq", ch))});
        rep.rows.push_back({"p0", ch, summary_of(find("p0", ch))});
        for (const char* name : {"b0", "phi_sq", additive ? "kappa_sq" : "lambda", "p0"}) {
            conv_names.push_back(std::string(name) + "[" + ch + "]");
            conv_series.push_back(find(name, ch)->chains);
        }
    }
    if (model.characteristic_count() > 1) {
        std::vector<std::size_t> all(model.characteristic_count());
        for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
        rep.combined_bias = combined_bias(b0_pooled, all);
        std::vector<double> total(b0_pooled.front().size(), 0.0);
        for (const auto& b : b0_pooled) {
            for (std::size_t i = 0; i < total.size(); ++i) total[i] += b[i];
        }
        rep.combined_bias_ror = ror(total);
    }
    if (model.layout().tau_hierarchy()) {
        const auto* mu = find("mu", "");
        const auto* sigma = find("sigma", "");
        rep.rows.push_back({"mu", "", summary_of(mu)});
        rep.rows.push_back({"sigma", "", summary_of(sigma)});
        conv_names.push_back("mu");
        conv_series.push_back(mu->chains);
        conv_names.push_back("sigma");
        conv_series.push_back(sigma->chains);
        rep.predictive_tau = predictive_tau(pool(mu->chains), pool(sigma->chains), predictive_seed(draws.config));
    }
    for (const auto& q : meta_quantities(draws, model)) {
        rep.meta_rows.push_back({q.name, "", summarize_param(pool(q.chains))});
        conv_names.push_back(q.name);
        conv_series.push_back(q.chains);
    }
    if (draws.chains.size() >= 2) {
        rep.convergence = convergence_report(conv_names, conv_series, rhat_threshold);
    } else {
        rep.convergence.threshold = rhat_threshold;
        rep.convergence.converged = false;
        rep.warnings.push_back("R-hat needs at least two chains; convergence not assessed");
    }
    rep.fit = dic(draws, model);
    if (rep.fit.p_d_negative) rep.warnings.push_back("negative p_D: the plug-in deviance exceeds D_res");
    return rep;
}

FitResult fit_dataset(const Dataset& dataset, const ModelSpec& spec, const McmcConfig& mcmc, double rhat_threshold) {
    validate(spec);
    std::string warning;
    const Dataset subset = spec.require_all_informative
                               ? informative_subset(dataset, spec.characteristics, &warning)
                               : dataset;
    if (subset.meta_analyses.empty()) {
        throw ModelError(warning.empty() ? "no meta-analyses to fit" : warning);
    }
    const Model model(spec, subset);
    FitResult out;
    out.draws = run(model, mcmc);
    out.report = make_report(model, out.draws, rhat_threshold);
    out.report.input_meta_count = dataset.meta_analyses.size();
    if (subset.meta_analyses.size() < dataset.meta_analyses.size()) {
        out.report.warnings.push_back(fmt::format("{} of {} meta-analyses are not informative and were left out",
                                                  dataset.meta_analyses.size() - subset.meta_analyses.size(),
                                                  dataset.meta_analyses.size()));
    }
    return out;
}

json summary_to_json(const Summary& s) {
    return {{"median", s.median}, {"sd", s.sd},       {"ci_lo", s.ci_lo},
            {"ci_hi", s.ci_hi},   {"mean", s.mean},   {"mc_error", s.mc_error}};
}

json report_to_json(const RunReport& r) {
    json j;
    j["schema"] = kReportSchema;
    j["model"] = spec_to_json(r.spec);
    j["dataset"] = {{"path", r.dataset_path},
                    {"input_meta_count", r.input_meta_count},
                    {"meta_count", r.dataset.meta_count},
                    {"trial_count", r.dataset.trial_count},
                    {"trials_per_meta",
                     {{"min", r.dataset.trials_min},
                      {"q1", r.dataset.trials_q1},
                      {"median", r.dataset.trials_median},
                      {"q3", r.dataset.trials_q3},
                      {"max", r.dataset.trials_max}}},
                    {"characteristic_names", r.dataset.characteristic_names},
                    {"flagged_trials", r.dataset.flagged_trials},
                    {"trials_all_flags", r.dataset.trials_all_flags},
                    {"trials_no_flags", r.dataset.trials_no_flags},
                    {"quantile_rule", r.dataset.quantile_rule}};
    j["mcmc"] = mcmc_to_json(r.mcmc);
    j["chain_seeds"] = r.chain_seeds;
    j["parameters"] = rows_to_json(r.rows);
    j["combined_bias"] = optional_summary(r.combined_bias);
    j["combined_bias_ror"] = optional_summary(r.combined_bias_ror);
    if (r.predictive_tau) {
        const auto& p = *r.predictive_tau;
        j["predictive_tau_sq"] = {{"meanlog", p.meanlog},   {"sdlog", p.sdlog},       {"median", p.median},
                                  {"range_lo", p.range_lo}, {"range_hi", p.range_hi}, {"raw_median", p.raw_median},
                                  {"raw_lo", p.raw_lo},     {"raw_hi", p.raw_hi}};
    } else {
        j["predictive_tau_sq"] = nullptr;
    }
    j["meta_parameters"] = rows_to_json(r.meta_rows);
    json conv;
    conv["threshold"] = r.convergence.threshold;
    conv["max_rhat"] = r.convergence.max_rhat;
    conv["converged"] = r.convergence.converged;
    conv["parameters"] = json::array();
    for (const auto& p : r.convergence.parameters) {
        conv["parameters"].push_back(
            {{"name", p.name}, {"rhat", p.rhat}, {"degenerate", p.degenerate}, {"mc_error", p.mc_error}, {"sd", p.sd}});
    }
    j["convergence"] = conv;
    j["fit"] = {{"d_res", r.fit.d_res},
                {"d_hat", r.fit.d_hat},
                {"p_d", r.fit.p_d},
                {"dic", r.fit.dic},
                {"p_d_negative", r.fit.p_d_negative}};
    j["warnings"] = r.warnings;
    if (!r.timestamp.empty()) j["timestamp"] = r.timestamp;
    return j;
}

RunReport report_from_json(const json& j) {
    if (j.value("schema", std::string()) != kReportSchema) {
        throw std::runtime_error("not a " + std::string(kReportSchema) + " document");
    }
    RunReport r;
    r.spec = spec_from_json(j.at("model"));
    const auto& d = j.at("dataset");
    r.dataset_path = d.at("path").get<std::string>();
    r.input_meta_count = d.at("input_meta_count").get<std::size_t>();
    r.dataset.meta_count = d.at("meta_count").get<std::size_t>();
    r.dataset.trial_count = d.at("trial_count").get<std::size_t>();
    const auto& tp = d.at("trials_per_meta");
    r.dataset.trials_min = tp.at("min").get<double>();
    r.dataset.trials_q1 = tp.at("q1").get<double>();
    r.dataset.trials_median = tp.at("median").get<double>();
    r.dataset.trials_q3 = tp.at("q3").get<double>();
    r.dataset.trials_max = tp.at("max").get<double>();
    r.dataset.characteristic_names = d.at("characteristic_names").get<std::vector<std::string>>();
    r.dataset.flagged_trials = d.at("flagged_trials").get<std::vector<std::size_t>>();
    r.dataset.trials_all_flags = d.at("trials_all_flags").get<std::size_t>();
    r.dataset.trials_no_flags = d.at("trials_no_flags").get<std::size_t>();
    r.dataset.quantile_rule = d.at("quantile_rule").get<std::string>();
    r.mcmc = mcmc_from_json(j.at("mcmc"));
    r.chain_seeds = j.at("chain_seeds").get<std::vector<std::uint64_t>>();
    r.rows = rows_from_json(j.at("parameters"));
    r.combined_bias = optional_summary_from_json(j.at("combined_bias"));
    r.combined_bias_ror = optional_summary_from_json(j.at("combined_bias_ror"));
    if (!j.at("predictive_tau_sq").is_null()) {
        const auto& p = j.at("predictive_tau_sq");
        PredictiveTau t;
        t.meanlog = p.at("meanlog").get<double>();
        t.sdlog = p.at("sdlog").get<double>();
        t.median = p.at("median").get<double>();
        t.range_lo = p.at("range_lo").get<double>();
        t.range_hi = p.at("range_hi").get<double>();
        t.raw_median = p.at("raw_median").get<double>();
        t.raw_lo = p.at("raw_lo").get<double>();
        t.raw_hi = p.at("raw_hi").get<double>();
        r.predictive_tau = t;
    }
    r.meta_rows = rows_from_json(j.at("meta_parameters"));
    const auto& c = j.at("convergence");
    r.convergence.threshold = c.at("threshold").get<double>();
    r.convergence.max_rhat = c.at("max_rhat").get<double>();
    r.convergence.converged = c.at("converged").get<bool>();
    for (const auto& p : c.at("parameters")) {
        r.convergence.parameters.push_back({p.at("name").get<std::string>(), p.at("rhat").get<double>(),
                                            p.at("degenerate").get<bool>(), p.at("mc_error").get<double>(),
                                            p.at("sd").get<double>()});
    }
    const auto& f = j.at("fit");
    r.fit.d_res = f.at("d_res").get<double>();
    r.fit.d_hat = f.at("d_hat").get<double>();
    r.fit.p_d = f.at("p_d").get<double>();
    r.fit.dic = f.at("dic").get<double>();
    r.fit.p_d_negative = f.at("p_d_negative").get<bool>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.timestamp = j.value("timestamp", std::string());
    return r;
}

std::string render_report_text(const RunReport& r) {
    std::string out;
    std::string chars;
    for (auto j : r.spec.characteristics) {
        if (!chars.empty()) chars += ", ";
        chars += j < r.dataset.characteristic_names.size() ? r.dataset.characteristic_names[j] : std::to_string(j);
    }
    out += fmt::format("Model: {} variance, characteristics: {}, tau hierarchy: {}\n", to_string(r.spec.structure),
                       chars, r.spec.tau_hierarchy ? "on" : "off");
    out += fmt::format("Data: {} meta-analyses ({} supplied), {} trials\n", r.dataset.meta_count,
                       r.input_meta_count, r.dataset.trial_count);
    out += fmt::format("MCMC: {} chains, burn-in {}, {} iterations, thin {}, seed {}\n\n", r.mcmc.n_chains,
                       r.mcmc.burn_in, r.mcmc.iterations, r.mcmc.thin, r.mcmc.seed);
    std::size_t width = 20;
    for (const auto& row : r.rows) width = std::max(width, row_name(row).size() + 2);
    out += fmt::format("{:<{}}{:>9}{:>9}{:>9}{:>9}\n", "Parameter", width, "Median", "SD", "2.5%", "97.5%");
    for (const auto& row : r.rows) out += render_row(row_name(row), row.summary, width);
    if (r.combined_bias) {
        out += render_row("combined bias", r.combined_bias, width);
        out += render_row("combined bias ROR", r.combined_bias_ror, width);
    }
    out += "\n";
    if (r.predictive_tau) {
        const auto& p = *r.predictive_tau;
        out += fmt::format("Predictive tau^2_new: log-normal({:.2f}, {:.2f}^2), median {:.3g}, 95% range {:.3g} to {:.3g}\n",
                           p.meanlog, p.sdlog, p.median, p.range_lo, p.range_hi);
    } else {
        out += "Predictive tau^2_new: n/a (tau hierarchy off)\n";
    }
    out += fmt::format("D_res {:.2f}  p_D {:.2f}  DIC {:.2f}{}\n", r.fit.d_res, r.fit.p_d, r.fit.dic,
                       r.fit.p_d_negative ? "  (negative p_D)" : "");
    out += fmt::format("Convergence: max R-hat {:.3f} (threshold {:.2f}): {}\n", r.convergence.max_rhat,
                       r.convergence.threshold, r.convergence.converged ? "converged" : "NOT converged");
    for (const auto& w : r.warnings) out += "warning: " + w + "\n";
    if (!r.timestamp.empty()) out += "Generated " + r.timestamp + "\n";
    return out;
}

}  // namespace metaepi
