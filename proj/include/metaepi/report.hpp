#pragma once

// Run reports: fitted summaries, convergence and fit statistics, rendered as
// a display table and as a structured JSON document.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaepi/dataset.hpp"
#include "metaepi/diagnostics.hpp"
#include "metaepi/mcmc.hpp"
#include "metaepi/model.hpp"
#include "metaepi/summaries.hpp"

namespace metaepi {

inline constexpr const char* kReportSchema = "metaepi-report/1";

struct SummaryRow {
    std::string label;           // b0, ROR, kappa, kappa_sq, lambda, phi, phi_sq, p0, mu, sigma
    std::string characteristic;  // empty for rows that are not per characteristic
    std::optional<Summary> summary;  // empty renders as n/a
};

struct RunReport {
    ModelSpec spec;
    std::string dataset_path;
    DatasetSummary dataset;           // of the analysed (informative) subset
    std::size_t input_meta_count = 0;  // before informative_subset
    McmcConfig mcmc;
    std::vector<std::uint64_t> chain_seeds;
    std::vector<SummaryRow> rows;
    std::optional<Summary> combined_bias;       // p > 1
    std::optional<Summary> combined_bias_ror;
    std::optional<PredictiveTau> predictive_tau;  // tau hierarchy on
    std::vector<SummaryRow> meta_rows;            // d, tau per meta-analysis
    ConvergenceReport convergence;
    FitStatistics fit;
    std::vector<std::string> warnings;
    std::string timestamp;  // empty unless requested
};

struct FitResult {
    RunReport report;
    PosteriorDraws draws;
};

// informative_subset -> Model -> run -> diagnostics -> summaries.
FitResult fit_dataset(const Dataset& dataset, const ModelSpec& spec, const McmcConfig& mcmc,
                      double rhat_threshold = 1.05);

// Builds the report for an existing run.
RunReport make_report(const Model& model, const PosteriorDraws& draws, double rhat_threshold = 1.05);

nlohmann::json summary_to_json(const Summary& s);
nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

// Display table: effect-scale rows at 2 decimals, n/a for parameters the
// structure does not have.
std::string render_report_text(const RunReport& report);

// Seed for the predictive tau^2_new sampling step.
std::uint64_t predictive_seed(const McmcConfig& mcmc);

}  // namespace metaepi
