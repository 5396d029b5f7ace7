#pragma once

// Hierarchical models for meta-epidemiological data.
//
// Trial i of meta-analysis m has control-arm log-odds gamma and log odds
// ratio theta with
//
//   theta ~ N(d_m + sum_j X_j b_jm, V)
//   V = tau_m^2 + sum_j X_j kappa_j^2            (additive)
//   V = tau_m^2 * prod_j {(1 - X_j) + X_j lambda_j}  (label-invariant)
//   b_jm ~ N(b0_j, phi_j^2)
//
// Event counts are binomial in each arm. kappa_j^2 and phi_j^2 have a point
// mass at zero: variance = z * v with z ~ Bernoulli(1 - p0_j) and v drawn
// from the inverse-gamma slab. Optionally log(tau_m^2) ~ N(mu, sigma^2).
//
// Parameter coordinates are laid out globals first, then per meta-analysis,
// then per trial:
//   per characteristic j: b0, phi_var (slab v of phi^2), kappa_var | lambda, p0
//   [mu, sigma]                      when the tau hierarchy is on
//   per meta m: d, tau, b_offset_j   (b_jm = b0_j + b_offset_jm)
//   per trial:  gamma, theta
// Indicators: z_phi[j] for every j, then z_kappa[j] for the additive model.
//
// When z = 0 the slab variance v (and for phi, the offsets b_offset) stay in
// the state as auxiliaries: b_jm collapses to b0_j, and v follows a proper
// log-normal pseudo-prior (per indicator, carried in the state) in place of
// the inverse-gamma slab, with the offsets still N(0, v). The pseudo-prior
// leaves the posterior of every model quantity unchanged; it only makes the
// 0 <-> 1 flip mix.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaepi/dataset.hpp"
#include "metaepi/priors.hpp"

namespace metaepi {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class VarianceStructure { Additive, LabelInvariant };

std::string to_string(VarianceStructure s);
VarianceStructure parse_structure(const std::string& s);

struct PriorSet {
    PriorSpec location = NormalPrior{0.0, 1000.0};  // d_m, gamma, b0
    PriorSpec tau = UniformPrior{0.0, 2.0};         // tau_m without the hierarchy
    PriorSpec mu = NormalPrior{0.0, 1000.0};
    PriorSpec sigma = UniformPrior{0.0, 2.0};
    PriorSpec phi_sq = InverseGammaZeroMixture{0.001, 0.001};
    PriorSpec p0 = UniformPrior{0.0, 1.0};  // Beta(1, 1)
    std::optional<PriorSpec> kappa_sq;      // additive only
    std::optional<PriorSpec> lambda;        // label-invariant only

    bool operator==(const PriorSet&) const = default;
};

struct ModelSpec {
    VarianceStructure structure = VarianceStructure::LabelInvariant;
    std::vector<std::size_t> characteristics{0};  // dataset column indices
    bool tau_hierarchy = true;
    PriorSet priors;
    std::size_t min_each_side_for_variance = 2;
    // When false, meta-analyses informative for only some characteristics
    // are accepted.
    bool require_all_informative = true;
    // When false, every meta-analysis informs kappa / lambda.
    bool apply_cut = true;

    bool operator==(const ModelSpec&) const = default;
};

// Default priors for the given structure.
ModelSpec make_spec(VarianceStructure structure, std::vector<std::size_t> characteristics,
                    bool tau_hierarchy = true);

void validate(const ModelSpec& spec);

// d_m + sum_j X_j b_j.
double effect_mean(std::span<const std::uint8_t> flags, double d, std::span<const double> b);

// `scale` holds kappa_j^2 (additive) or lambda_j (label-invariant).
double effect_variance(std::span<const std::uint8_t> flags, double tau_sq, VarianceStructure structure,
                       std::span<const double> scale);

enum class Role { B0, PhiVar, KappaVar, Lambda, P0, Mu, Sigma, D, Tau, BOffset, Gamma, Theta };
enum class Transform { Identity, Log, Logit };

struct Coordinate {
    Role role;
    std::size_t meta = 0;            // D, Tau, BOffset, Gamma, Theta
    std::size_t characteristic = 0;  // B0, PhiVar, KappaVar, Lambda, P0, BOffset
    std::size_t trial = 0;           // Gamma, Theta (flat trial index)
};

class ParameterLayout {
public:
    ParameterLayout() = default;
    ParameterLayout(std::size_t characteristics, std::vector<std::size_t> trials_per_meta,
                    VarianceStructure structure, bool tau_hierarchy);

    std::size_t dimension() const { return dimension_; }
    std::size_t global_count() const { return global_count_; }
    std::size_t characteristic_count() const { return p_; }
    std::size_t meta_count() const { return meta_offset_.size(); }
    std::size_t trial_count() const { return n_trials_; }
    bool additive() const { return additive_; }
    bool tau_hierarchy() const { return tau_hierarchy_; }

    std::size_t b0(std::size_t j) const { return 4 * j; }
    std::size_t phi_var(std::size_t j) const { return 4 * j + 1; }
    std::size_t scale(std::size_t j) const { return 4 * j + 2; }  // kappa_var or lambda
    std::size_t p0(std::size_t j) const { return 4 * j + 3; }
    std::size_t mu() const;
    std::size_t sigma() const;
    std::size_t d(std::size_t m) const { return meta_offset_[m]; }
    std::size_t tau(std::size_t m) const { return meta_offset_[m] + 1; }
    std::size_t b_offset(std::size_t m, std::size_t j) const { return meta_offset_[m] + 2 + j; }
    std::size_t gamma(std::size_t t) const { return trial_offset_ + 2 * t; }
    std::size_t theta(std::size_t t) const { return trial_offset_ + 2 * t + 1; }

    std::size_t indicator_count() const { return additive_ ? 2 * p_ : p_; }
    std::size_t z_phi(std::size_t j) const { return j; }
    std::size_t z_kappa(std::size_t j) const { return p_ + j; }

    Coordinate decode(std::size_t k) const;
    Transform transform(std::size_t k) const;
    bool is_trial_level(std::size_t k) const { return k >= trial_offset_; }

private:
    std::size_t p_ = 0;
    std::size_t n_trials_ = 0;
    bool additive_ = false;
    bool tau_hierarchy_ = false;
    std::size_t global_count_ = 0;
    std::size_t trial_offset_ = 0;
    std::size_t dimension_ = 0;
    std::vector<std::size_t> meta_offset_;
    std::vector<std::size_t> trial_meta_;
};

struct ParameterState {
    std::vector<double> values;
    std::vector<std::uint8_t> indicators;
    // Per indicator: log-normal pseudo-prior of v while z = 0.
    std::vector<double> pseudo_meanlog;
    std::vector<double> pseudo_sdlog;

    bool operator==(const ParameterState&) const = default;
};

class Model {
public:
    // Validates the spec against the dataset and precomputes index lists.
    // Throws ModelError when p = 0, the dataset is empty, or (unless relaxed)
    // a meta-analysis is not informative for every characteristic.
    Model(ModelSpec spec, Dataset dataset);

    const ModelSpec& spec() const { return spec_; }
    const Dataset& dataset() const { return dataset_; }
    const ParameterLayout& layout() const { return layout_; }
    const InformativenessReport& classification() const { return classification_; }
    std::size_t dimension() const { return layout_.dimension(); }
    std::size_t characteristic_count() const { return layout_.characteristic_count(); }
    std::size_t meta_count() const { return layout_.meta_count(); }
    std::size_t trial_count() const { return layout_.trial_count(); }
    std::size_t arm_count() const { return 2 * trial_count(); }
    std::size_t meta_of_trial(std::size_t t) const { return trial_meta_[t]; }
    std::span<const std::uint8_t> flags(std::size_t t) const {
        return {flags_.data() + t * layout_.characteristic_count(), layout_.characteristic_count()};
    }
    std::pair<std::size_t, std::size_t> trial_range(std::size_t m) const {
        return {meta_begin_[m], meta_begin_[m + 1]};
    }

    // Per arm, [2t] control and [2t + 1] treatment.
    std::span<const double> arm_events() const { return arm_events_; }
    std::span<const double> arm_sizes() const { return arm_sizes_; }

    // [meta][characteristic]: true when the meta-analysis may inform kappa /
    // lambda for that characteristic.
    const std::vector<std::vector<bool>>& cut_update_mask() const { return cut_mask_; }

    std::string parameter_name(std::size_t k) const;
    std::vector<std::string> parameter_names() const;
    std::string indicator_name(std::size_t z) const;
    std::string characteristic_name(std::size_t j) const;

    // Derived quantities of a state.
    double b(const ParameterState& s, std::size_t m, std::size_t j) const;
    double phi_sq(const ParameterState& s, std::size_t j) const;
    double kappa_sq(const ParameterState& s, std::size_t j) const;
    double trial_mean(const ParameterState& s, std::size_t t) const;
    double trial_variance(const ParameterState& s, std::size_t t) const;

    // Full log densities. Out-of-support states give -infinity; a NaN
    // anywhere raises NumericError.
    double log_likelihood(const ParameterState& s) const;
    double log_prior(const ParameterState& s) const;
    double log_posterior(const ParameterState& s) const { return log_prior(s) + log_likelihood(s); }
    // Sum over trials of log N(theta | mean, variance).
    double log_theta_terms(const ParameterState& s) const;

    // Every term of the joint density that changes with coordinate k, on the
    // natural scale. Terms from cut-ineligible meta-analyses are left out for
    // kappa / lambda coordinates.
    double conditional_log_density(const ParameterState& s, std::size_t k) const;
    // False while the coordinate is an inactive auxiliary (its z is 0).
    bool updatable(const ParameterState& s, std::size_t k) const;
    // Terms that change when indicator zi flips.
    double indicator_log_density(const ParameterState& s, std::size_t zi) const;
    // Terms that change when mu and every log tau_m^2 shift together: the mu
    // prior, every tau prior term and every theta term.
    double tau_block_log_density(const ParameterState& s) const;
    // Slab variance coordinate of indicator zi and, for phi, the offsets
    // that go with it.
    std::size_t slab_coordinate(std::size_t zi) const;
    std::vector<std::size_t> offset_coordinates(std::size_t zi) const;

    // Chain `chain` of `n_chains`: locations offset by chain-dependent
    // multiples of 1, scales at prior quantiles (chain + 1) / (n_chains + 1).
    ParameterState initial_state(std::size_t chain, std::size_t n_chains) const;
    std::vector<ParameterState> initial_states(std::size_t n_chains) const;

    // Event probabilities per arm: [2t] control, [2t + 1] treatment.
    void fitted_probabilities(const ParameterState& s, std::span<double> out) const;

    bool in_support(const ParameterState& s) const;

private:
    double theta_term(const ParameterState& s, std::size_t t) const;
    double binom_ctrl(const ParameterState& s, std::size_t t) const;
    double binom_treat(const ParameterState& s, std::size_t t) const;
    double tau_prior_term(const ParameterState& s, std::size_t m) const;
    double bernoulli_term(const ParameterState& s, std::size_t zi) const;
    // Inverse-gamma slab when z = 1, the pseudo-prior when z = 0.
    double slab_term(const ParameterState& s, std::size_t zi) const;
    const PriorSpec& scale_prior() const;

    ModelSpec spec_;
    Dataset dataset_;
    ParameterLayout layout_;
    InformativenessReport classification_;
    std::vector<std::vector<bool>> cut_mask_;
    std::vector<std::uint8_t> flags_;  // [t * p + j]
    std::vector<std::size_t> trial_meta_;
    std::vector<std::size_t> meta_begin_;
    std::vector<std::vector<std::size_t>> flagged_;      // [j] trials with X_j = 1
    std::vector<std::vector<std::size_t>> cut_flagged_;  // [j] same, restricted to the cut mask
    std::vector<double> events_ctrl_, size_ctrl_, events_treat_, size_treat_;
    std::vector<double> log_choose_ctrl_, log_choose_treat_;
    std::vector<double> arm_events_, arm_sizes_;
    std::vector<std::string> trial_labels_;
};

}  // namespace metaepi
