#pragma once

// Adaptive random-walk Metropolis-within-Gibbs for Model.
//
// Each sweep flips every mixture indicator (Metropolis 0 <-> 1; an inactive
// slab's variance and offsets are first drawn from their pseudo-prior), then
// updates each continuous coordinate in layout order with a Gaussian random
// walk on its transformed scale (identity, log or logit) with the Jacobian
// added to the target. With the tau hierarchy a final joint move shifts mu
// and all log tau_m^2 together. Proposal scales and pseudo-priors adapt
// during burn-in only and are frozen for the retained draws.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaepi/model.hpp"

namespace metaepi {

class McmcError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct McmcConfig {
    std::size_t n_chains = 3;
    std::size_t burn_in = 5000;
    std::size_t iterations = 20000;  // retained sweeps before thinning
    std::size_t thin = 1;
    std::uint64_t seed = 1;
    std::size_t adapt_window = 50;
    double target_accept = 0.44;
    double initial_scale = 0.25;
    // Explicit per-chain seeds; empty means derived from `seed`.
    std::vector<std::uint64_t> chain_seeds;
    // Record gamma / theta draws as well as globals and per-meta values.
    bool monitor_trials = false;
    // Run chains on separate threads. Output does not depend on this.
    bool parallel = true;
};

void validate(const McmcConfig& config);

// Independent sub-seed number `stream` of `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Sub-seed for chain c.
std::uint64_t chain_seed(const McmcConfig& config, std::size_t chain);

struct ChainDraws {
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> values;                // [monitored][draw]
    std::vector<std::vector<std::uint8_t>> indicators;      // [indicator][draw]
    std::vector<double> deviance;                           // residual deviance per draw
    std::vector<double> fitted_sum;                         // per arm: sum of p-hat over draws
    std::vector<double> acceptance;                         // per coordinate, retained sweeps; NaN if never tried
    std::vector<double> proposal_scale;                     // per coordinate, frozen value
    std::vector<double> indicator_acceptance;               // per indicator
    double tau_block_acceptance = 0.0;                      // NaN when the move is off
};

struct PosteriorDraws {
    McmcConfig config;
    std::vector<std::size_t> monitored;  // layout coordinates recorded
    std::vector<std::string> names;      // names of monitored coordinates
    std::vector<std::string> indicator_names;
    std::size_t draws_per_chain = 0;
    std::vector<ChainDraws> chains;

    // Position of layout coordinate k among the monitored ones; throws if
    // it was not recorded.
    std::size_t slot(std::size_t k) const;
    std::vector<double> pooled(std::size_t k) const;
    const std::vector<double>& chain(std::size_t c, std::size_t k) const;
    std::vector<std::vector<double>> by_chain(std::size_t k) const;
    std::vector<std::uint8_t> pooled_indicator(std::size_t z) const;
    std::size_t total_draws() const { return draws_per_chain * chains.size(); }

    bool operator==(const PosteriorDraws& other) const;
};

struct RunOptions {
    // Starting states; empty means Model::initial_states.
    std::vector<ParameterState> initial;
    // Coordinates to update; empty means all. Fixed coordinates keep their
    // starting value.
    std::vector<bool> free;
    // Also refreshes the pseudo-prior auxiliaries of inactive slabs.
    bool update_indicators = true;
    // Joint move shifting mu and every log tau_m^2 by the same amount (tau
    // hierarchy only; skipped if any of them is fixed).
    bool tau_block = true;
};

PosteriorDraws run(const Model& model, const McmcConfig& config, const RunOptions& options = {});

// Writes one delimited file per chain: <prefix>.chain<c>.csv, c from 1.
void dump_draws(const PosteriorDraws& draws, const std::string& prefix);
void write_chain_csv(const PosteriorDraws& draws, std::size_t chain, std::ostream& out);

}  // namespace metaepi
