#pragma once

// Command implementations behind the metaepi executable. Each returns the
// process exit status and writes its display output to `out`.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metaepi/mcmc.hpp"
#include "metaepi/model.hpp"
#include "metaepi/report.hpp"

namespace metaepi {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitUnconverged = 2 };

struct SpecOptions {
    std::string config_path;                   // optional model config file
    std::optional<VarianceStructure> structure;  // overrides the config
    std::vector<std::string> characteristics;   // names or 0-based indices
    std::optional<bool> tau_hierarchy;
};

// Config file (or defaults) with command-line overrides applied. Changing
// the structure swaps the kappa / lambda prior for the new default.
ModelSpec resolve_spec(const Dataset& dataset, const SpecOptions& options);

struct FitArgs {
    std::string dataset_path;
    SpecOptions spec;
    McmcConfig mcmc;
    std::string dump_draws;  // prefix; empty disables
    std::string output;      // structured report path; empty disables
    bool allow_unconverged = false;
    bool timestamp = false;
    double rhat_threshold = 1.05;
};

int cmd_fit(const FitArgs& args, std::ostream& out, std::ostream& err);

struct CompareArgs {
    std::string dataset_path;
    // Two model specs. With no config files, additive vs label-invariant.
    SpecOptions first;
    SpecOptions second;
    McmcConfig mcmc;
    std::string output;
    double rhat_threshold = 1.05;
};

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);

struct SensitivityArgs {
    std::string dataset_path;
    SpecOptions spec;           // must resolve to label-invariant
    std::string priors_path;    // JSON array of {name, prior}; empty = the five defaults
    McmcConfig mcmc;
    std::string output;         // structured report
    std::string table;          // forest-plot data table (CSV)
    double rhat_threshold = 1.05;
};

int cmd_sensitivity(const SensitivityArgs& args, std::ostream& out, std::ostream& err);

// Forest-plot rows: one line per prior x quantity.
std::string sensitivity_table_header();

struct SimulateArgs {
    std::string truth_path;
    std::string output;  // dataset path; sidecar alongside
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err);

// Re-renders a structured report as the display table.
int cmd_report(const std::string& report_path, std::ostream& out, std::ostream& err);

// Dataset overview.
int cmd_summarize(const std::string& dataset_path, std::ostream& out, std::ostream& err);

std::vector<NamedPrior> load_prior_set(const std::string& path);

}  // namespace metaepi
