#include "metaepi/commands.hpp"

#include <chrono>
#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "metaepi/model_config.hpp"
#include "metaepi/simulate.hpp"

namespace metaepi {

using nlohmann::json;

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const json& j, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << j.dump(2) << '\n';
}

std::size_t characteristic_from_text(const Dataset& ds, const std::string& s) {
    const auto it = std::find(ds.characteristic_names.begin(), ds.characteristic_names.end(), s);
    if (it != ds.characteristic_names.end()) return static_cast<std::size_t>(it - ds.characteristic_names.begin());
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const std::size_t j = std::stoul(s);
        if (j < ds.characteristic_count()) return j;
    }
    throw DataError("unknown characteristic '" + s + "'");
}

// Runs `body`, turning library exceptions into a message on `err` with the
// failing stage named.
template <class F>
int guarded(std::ostream& err, F body) {
    try {
        return body();
    } catch (const ParseError& e) {
        err << "error: dataset: " << e.what() << '\n';
    } catch (const DataError& e) {
        err << "error: dataset: " << e.what() << '\n';
    } catch (const PriorError& e) {
        err << "error: prior: " << e.what() << '\n';
    } catch (const ModelError& e) {
        err << "error: model: " << e.what() << '\n';
    } catch (const NumericError& e) {
        err << "error: model: " << e.what() << '\n';
    } catch (const McmcError& e) {
        err << "error: mcmc: " << e.what() << '\n';
    } catch (const DiagnosticError& e) {
        err << "error: diagnostics: " << e.what() << '\n';
    } catch (const SummaryError& e) {
        err << "error: summaries: " << e.what() << '\n';
    } catch (const SimulationError& e) {
        err << "error: simulate: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return kExitError;
}

json sensitivity_row(const std::string& prior, const SummaryRow& row) {
    return {{"prior", prior}, {"label", row.label}, {"characteristic", row.characteristic},
            {"summary", row.summary ? summary_to_json(*row.summary) : json(nullptr)}};
}

}  // namespace

ModelSpec resolve_spec(const Dataset& dataset, const SpecOptions& o) {
    ModelSpec spec = o.config_path.empty() ? make_spec(VarianceStructure::LabelInvariant, {0}, true)
                                           : load_spec(o.config_path);
    if (o.structure && *o.structure != spec.structure) {
        const ModelSpec fresh = make_spec(*o.structure, spec.characteristics, spec.tau_hierarchy);
        spec.structure = *o.structure;
        spec.priors.kappa_sq = fresh.priors.kappa_sq;
        spec.priors.lambda = fresh.priors.lambda;
    }
    if (!o.characteristics.empty()) {
        spec.characteristics.clear();
        for (const auto& c : o.characteristics) spec.characteristics.push_back(characteristic_from_text(dataset, c));
    }
    if (o.tau_hierarchy) spec.tau_hierarchy = *o.tau_hierarchy;
    for (auto j : spec.characteristics) {
        if (j >= dataset.characteristic_count()) {
            throw ModelError("characteristic index " + std::to_string(j) + " is not a dataset column");
        }
    }
    validate(spec);
    return spec;
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Dataset ds = load_dataset(a.dataset_path);
        const ModelSpec spec = resolve_spec(ds, a.spec);
        FitResult res = fit_dataset(ds, spec, a.mcmc, a.rhat_threshold);
        res.report.dataset_path = a.dataset_path;
        if (a.timestamp) res.report.timestamp = utc_timestamp();
        if (!a.dump_draws.empty()) dump_draws(res.draws, a.dump_draws);
        if (!a.output.empty()) write_json(report_to_json(res.report), a.output);
        out << render_report_text(res.report);
        if (!res.report.convergence.converged && !a.allow_unconverged) {
            err << fmt::format("error: chains have not converged (max R-hat {:.3f} >= {:.2f}); "
                               "rerun with more iterations or pass --allow-unconverged\n",
                               res.report.convergence.max_rhat, res.report.convergence.threshold);
            return static_cast<int>(kExitUnconverged);
        }
        return static_cast<int>(kExitOk);
    });
}

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Dataset ds = load_dataset(a.dataset_path);
        SpecOptions first = a.first;
        SpecOptions second = a.second;
        if (first.config_path.empty() && !first.structure) first.structure = VarianceStructure::Additive;
        if (second.config_path.empty() && !second.structure) second.structure = VarianceStructure::LabelInvariant;
        const ModelSpec specs[2] = {resolve_spec(ds, first), resolve_spec(ds, second)};
        RunReport reports[2];
        for (int i = 0; i < 2; ++i) {
            McmcConfig mc = a.mcmc;
            mc.seed = derive_seed(a.mcmc.seed, static_cast<std::uint64_t>(i));
            mc.chain_seeds.clear();
            reports[i] = fit_dataset(ds, specs[i], mc, a.rhat_threshold).report;
            reports[i].dataset_path = a.dataset_path;
        }
        const double delta = reports[1].fit.dic - reports[0].fit.dic;
        const bool meaningful = dic_difference_meaningful(delta);

        for (int i = 0; i < 2; ++i) {
            out << fmt::format("== Model {} (seed {}) ==\n", i == 0 ? "A" : "B", reports[i].mcmc.seed);
            out << render_report_text(reports[i]) << '\n';
        }
        out << fmt::format("DIC A {:.2f}, DIC B {:.2f}, difference (B - A) {:.2f}: {}\n", reports[0].fit.dic,
                           reports[1].fit.dic, delta,
                           meaningful ? (delta < 0 ? "B preferred" : "A preferred")
                                      : "not meaningful (|difference| < 5)");
        if (!a.output.empty()) {
            json j;
            j["schema"] = "metaepi-compare/1";
            j["base_seed"] = a.mcmc.seed;
            j["models"] = {report_to_json(reports[0]), report_to_json(reports[1])};
            j["delta_dic"] = delta;
            j["meaningful"] = meaningful;
            write_json(j, a.output);
        }
        return static_cast<int>(kExitOk);
    });
}

std::string sensitivity_table_header() { return "prior,parameter,characteristic,median,sd,ci_lo,ci_hi,status"; }

int cmd_sensitivity(const SensitivityArgs& a, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Dataset ds = load_dataset(a.dataset_path);
        const ModelSpec base = resolve_spec(ds, a.spec);
        if (base.structure != VarianceStructure::LabelInvariant) {
            throw ModelError("sensitivity analysis varies the lambda prior and needs a label-invariant model");
        }
        const auto priors = a.priors_path.empty() ? default_lambda_prior_set() : load_prior_set(a.priors_path);

        std::string table = sensitivity_table_header() + "\n";
        json runs = json::array();
        json rows = json::array();
        out << fmt::format("{:<12}{:<20}{:>9}{:>9}{:>9}{:>9}\n", "Prior", "Parameter", "Median", "SD", "2.5%",
                           "97.5%");
        for (const auto& np : priors) {
            ModelSpec spec = base;
            spec.priors.lambda = np.prior;
            json run_j = {{"name", np.name}, {"prior", prior_to_json(np.prior)}};
            try {
                const auto res = fit_dataset(ds, spec, a.mcmc, a.rhat_threshold);
                run_j["ok"] = true;
                run_j["converged"] = res.report.convergence.converged;
                run_j["max_rhat"] = res.report.convergence.max_rhat;
                for (const auto& row : res.report.rows) {
                    if (row.label != "b0" && row.label != "phi" && row.label != "lambda") continue;
                    const auto& s = *row.summary;
                    table += fmt::format("{},{},{},{},{},{},{},ok\n", np.name, row.label, row.characteristic, s.median,
                                         s.sd, s.ci_lo, s.ci_hi);
                    rows.push_back(sensitivity_row(np.name, row));
                    out << fmt::format("{:<12}{:<20}{:>9.2f}{:>9.2f}{:>9.2f}{:>9.2f}\n", np.name,
                                       row.label + "[" + row.characteristic + "]", s.median, s.sd, s.ci_lo, s.ci_hi);
                }
                if (!res.report.convergence.converged) {
                    out << fmt::format("{:<12}warning: not converged (max R-hat {:.3f})\n", np.name,
                                       res.report.convergence.max_rhat);
                }
            } catch (const std::exception& e) {
                run_j["ok"] = false;
                run_j["error"] = e.what();
                table += fmt::format("{},,,,,,,failed\n", np.name);
                out << fmt::format("{:<12}FAILED: {}\n", np.name, e.what());
            }
            runs.push_back(run_j);
        }
        if (!a.table.empty()) {
            std::ofstream f(a.table, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write '" + a.table + "'");
            f << table;
        }
        if (!a.output.empty()) {
            json j;
            j["schema"] = "metaepi-sensitivity/1";
            j["model"] = spec_to_json(base);
            j["dataset"] = a.dataset_path;
            j["seed"] = a.mcmc.seed;
            j["runs"] = runs;
            j["rows"] = rows;
            write_json(j, a.output);
        }
        return static_cast<int>(kExitOk);
    });
}

std::vector<NamedPrior> load_prior_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PriorError("cannot open prior set '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw PriorError("prior set '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_array() || j.empty()) throw PriorError("prior set must be a non-empty JSON array");
    std::vector<NamedPrior> out;
    for (const auto& e : j) out.push_back({e.at("name").get<std::string>(), prior_from_json(e.at("prior"))});
    return out;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        TruthConfig truth = load_truth_config(a.truth_path);
        if (a.seed) truth.seed = *a.seed;
        const Simulated sim = generate(truth);
        const std::string sidecar = write_simulation(sim, a.output);
        out << fmt::format("wrote {} ({} meta-analyses, {} trials) and {}\n", a.output,
                           sim.dataset.meta_analyses.size(), sim.dataset.trial_count(), sidecar);
        return static_cast<int>(kExitOk);
    });
}

int cmd_report(const std::string& path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open report '" + path + "'");
        out << render_report_text(report_from_json(json::parse(in)));
        return static_cast<int>(kExitOk);
    });
}

int cmd_summarize(const std::string& path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Dataset ds = load_dataset(path);
        const DatasetSummary s = summarize(ds);
        const auto cls = classify(ds);
        out << fmt::format("{} meta-analyses, {} trials\n", s.meta_count, s.trial_count);
        out << fmt::format("trials per meta-analysis: min {:g}, Q1 {:g}, median {:g}, Q3 {:g}, max {:g}\n",
                           s.trials_min, s.trials_q1, s.trials_median, s.trials_q3, s.trials_max);
        for (std::size_t j = 0; j < s.characteristic_names.size(); ++j) {
            std::size_t informative = 0, eligible = 0;
            for (std::size_t m = 0; m < ds.meta_analyses.size(); ++m) {
                informative += cls.at(m, j).informative;
                eligible += cls.at(m, j).cut_eligible;
            }
            out << fmt::format("{}: {} flagged trials, {} informative meta-analyses, {} inform the variance ratio\n",
                               s.characteristic_names[j], s.flagged_trials[j], informative, eligible);
        }
        out << fmt::format("trials with every flag: {}, with none: {}\n", s.trials_all_flags, s.trials_no_flags);
        return static_cast<int>(kExitOk);
    });
}

}  // namespace metaepi
