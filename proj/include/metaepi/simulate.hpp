#pragma once

// Forward simulation of meta-epidemiological datasets with known truth, and
// repeated simulate-then-fit coverage experiments.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaepi/dataset.hpp"
#include "metaepi/mcmc.hpp"
#include "metaepi/model.hpp"

namespace metaepi {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CountRange {
    std::size_t lo = 0;
    std::size_t hi = 0;

    bool operator==(const CountRange&) const = default;
};

struct TruthConfig {
    VarianceStructure structure = VarianceStructure::LabelInvariant;
    std::vector<std::string> characteristic_names{"x1"};
    std::vector<double> b0{0.0};
    std::vector<double> phi{0.0};
    std::vector<double> scale{1.0};  // lambda (label-invariant) or kappa SD (additive)
    std::vector<double> flag_probability{0.5};
    double mu = -2.94;
    double sigma = 0.5;
    std::size_t n_meta = 30;
    CountRange trials_per_meta{6, 12};
    CountRange arm_size{50, 200};
    double baseline_lo = -2.5;  // control-arm log-odds range
    double baseline_hi = -0.5;
    // Flags are redrawn until every meta-analysis has at least this many
    // trials on each side of every characteristic.
    std::size_t min_each_side = 2;
    std::uint64_t seed = 1;

    bool operator==(const TruthConfig&) const = default;
};

void validate(const TruthConfig& truth);

struct MetaTruth {
    std::string meta_id;
    double tau_sq = 0.0;
    double d = 0.0;
    std::vector<double> b;
};

struct TrialTruth {
    std::string meta_id;
    std::string trial_id;
    double gamma = 0.0;
    double theta = 0.0;
};

struct TruthRecord {
    TruthConfig config;
    std::vector<MetaTruth> metas;
    std::vector<TrialTruth> trials;
};

struct Simulated {
    Dataset dataset;
    TruthRecord truth;
};

// d_m ~ N(0, 0.25), tau_m^2 ~ log-normal(mu, sigma^2), b_jm ~ N(b0_j, phi_j^2),
// theta from the structure's normal law, gamma ~ U(baseline range), binomial
// events. Deterministic in truth.seed.
Simulated generate(const TruthConfig& truth);

nlohmann::json truth_config_to_json(const TruthConfig& truth);
TruthConfig truth_config_from_json(const nlohmann::json& j);
TruthConfig load_truth_config(const std::string& path);

nlohmann::json truth_record_to_json(const TruthRecord& record);

// Sidecar path: <dataset path without extension>.truth.json.
std::string truth_sidecar_path(const std::string& dataset_path);

// Writes the dataset and its truth sidecar; returns the sidecar path.
std::string write_simulation(const Simulated& sim, const std::string& dataset_path);

struct CoverageRow {
    std::string name;  // e.g. "b0[x1]"
    double truth = 0.0;
    std::size_t fits = 0;
    std::size_t covered = 0;
    double coverage = 0.0;
    double median_of_medians = 0.0;
    std::vector<double> medians;  // per successful replicate
};

struct ReplicateOutcome {
    std::uint64_t data_seed = 0;
    std::uint64_t mcmc_seed = 0;
    bool ok = false;
    bool converged = false;
    double max_rhat = 0.0;
    std::string error;
};

struct CoverageTable {
    std::vector<CoverageRow> rows;
    std::vector<ReplicateOutcome> replicates;

    const CoverageRow& row(const std::string& name) const;
};

// Replicate r simulates with derive_seed(truth.seed, r) and fits with
// derive_seed(mcmc.seed, r). Failed fits are recorded, not fatal.
CoverageTable recovery_experiment(const TruthConfig& truth, const ModelSpec& spec, const McmcConfig& mcmc,
                                  std::size_t replicates);

}  // namespace metaepi
