#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "metaepi/commands.hpp"

using namespace metaepi;

namespace {

void add_spec_options(CLI::App* cmd, SpecOptions& spec, std::string& structure, std::string& tau) {
    cmd->add_option("--config", spec.config_path, "Model config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--structure", structure, "Variance structure")
        ->check(CLI::IsMember({"additive", "label-invariant"}));
    cmd->add_option("--characteristics", spec.characteristics, "Characteristic names or column indices")
        ->delimiter(',');
    cmd->add_option("--tau-hierarchy", tau, "Log-normal hierarchy on tau^2")->check(CLI::IsMember({"on", "off"}));
}

void add_mcmc_options(CLI::App* cmd, McmcConfig& mc) {
    cmd->add_option("--chains", mc.n_chains, "Number of chains")->capture_default_str();
    cmd->add_option("--iterations", mc.iterations, "Retained iterations per chain")->capture_default_str();
    cmd->add_option("--burn-in", mc.burn_in, "Burn-in iterations per chain")->capture_default_str();
    cmd->add_option("--thin", mc.thin, "Keep every n-th iteration")->capture_default_str();
    cmd->add_option("--seed", mc.seed, "Random seed")->capture_default_str();
}

void apply_spec_strings(SpecOptions& spec, const std::string& structure, const std::string& tau) {
    if (!structure.empty()) spec.structure = parse_structure(structure);
    if (!tau.empty()) spec.tau_hierarchy = tau == "on";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian meta-epidemiological models: fit, compare, sensitivity, simulate"};
    app.require_subcommand(1);

    FitArgs fit;
    std::string fit_structure, fit_tau;
    auto* fit_cmd = app.add_subcommand("fit", "Fit one model and print the summary table");
    fit_cmd->add_option("--dataset", fit.dataset_path, "Dataset CSV")->required()->check(CLI::ExistingFile);
    add_spec_options(fit_cmd, fit.spec, fit_structure, fit_tau);
    add_mcmc_options(fit_cmd, fit.mcmc);
    fit_cmd->add_option("--dump-draws", fit.dump_draws, "Write <prefix>.chain<c>.csv draw files");
    fit_cmd->add_option("--output", fit.output, "Structured report (JSON)");
    fit_cmd->add_flag("--allow-unconverged", fit.allow_unconverged, "Exit 0 even if R-hat fails");
    fit_cmd->add_flag("--timestamp", fit.timestamp, "Record the run time in the report");
    fit_cmd->add_option("--rhat-threshold", fit.rhat_threshold, "Convergence threshold")->capture_default_str();

    CompareArgs cmp;
    std::vector<std::string> cmp_configs;
    std::vector<std::string> cmp_structures;
    std::string cmp_tau;
    std::vector<std::string> cmp_chars;
    auto* cmp_cmd = app.add_subcommand("compare", "Fit two models and compare DIC");
    cmp_cmd->add_option("--dataset", cmp.dataset_path, "Dataset CSV")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--config", cmp_configs, "Two model configs (A then B)")
        ->expected(0, 2)
        ->check(CLI::ExistingFile);
    cmp_cmd->add_option("--structure", cmp_structures, "Structures for A and B")
        ->expected(0, 2)
        ->check(CLI::IsMember({"additive", "label-invariant"}));
    cmp_cmd->add_option("--characteristics", cmp_chars, "Characteristic names or column indices")->delimiter(',');
    cmp_cmd->add_option("--tau-hierarchy", cmp_tau, "Log-normal hierarchy on tau^2")
        ->check(CLI::IsMember({"on", "off"}));
    add_mcmc_options(cmp_cmd, cmp.mcmc);
    cmp_cmd->add_option("--output", cmp.output, "Structured comparison report (JSON)");

    SensitivityArgs sens;
    std::string sens_structure, sens_tau;
    auto* sens_cmd = app.add_subcommand("sensitivity", "Refit under each lambda prior of a set");
    sens_cmd->add_option("--dataset", sens.dataset_path, "Dataset CSV")->required()->check(CLI::ExistingFile);
    add_spec_options(sens_cmd, sens.spec, sens_structure, sens_tau);
    sens_cmd->add_option("--priors", sens.priors_path, "Prior set JSON (default: the five built-in priors)")
        ->check(CLI::ExistingFile);
    add_mcmc_options(sens_cmd, sens.mcmc);
    sens_cmd->add_option("--output", sens.output, "Structured report (JSON)");
    sens_cmd->add_option("--table", sens.table, "Forest-plot data table (CSV)");

    SimulateArgs sim;
    std::uint64_t sim_seed = 0;
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate a dataset with a truth sidecar");
    sim_cmd->add_option("--truth", sim.truth_path, "Truth config (JSON)")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--output", sim.output, "Dataset path to write")->required();
    auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "Override the truth config seed");

    std::string report_path;
    auto* rep_cmd = app.add_subcommand("report", "Render a structured report as a table");
    rep_cmd->add_option("report", report_path, "Report JSON")->required()->check(CLI::ExistingFile);

    std::string summarize_path;
    auto* sum_cmd = app.add_subcommand("summarize", "Describe a dataset");
    sum_cmd->add_option("--dataset", summarize_path, "Dataset CSV")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_cmd->parsed()) {
            apply_spec_strings(fit.spec, fit_structure, fit_tau);
            return cmd_fit(fit, std::cout, std::cerr);
        }
        if (cmp_cmd->parsed()) {
            SpecOptions* sides[2] = {&cmp.first, &cmp.second};
            for (std::size_t i = 0; i < 2; ++i) {
                if (i < cmp_configs.size()) sides[i]->config_path = cmp_configs[i];
                if (i < cmp_structures.size()) sides[i]->structure = parse_structure(cmp_structures[i]);
                sides[i]->characteristics = cmp_chars;
                if (!cmp_tau.empty()) sides[i]->tau_hierarchy = cmp_tau == "on";
            }
            return cmd_compare(cmp, std::cout, std::cerr);
        }
        if (sens_cmd->parsed()) {
            apply_spec_strings(sens.spec, sens_structure, sens_tau);
            return cmd_sensitivity(sens, std::cout, std::cerr);
        }
        if (sim_cmd->parsed()) {
            if (*sim_seed_opt) sim.seed = sim_seed;
            return cmd_simulate(sim, std::cout, std::cerr);
        }
        if (rep_cmd->parsed()) return cmd_report(report_path, std::cout, std::cerr);
        if (sum_cmd->parsed()) return cmd_summarize(summarize_path, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
