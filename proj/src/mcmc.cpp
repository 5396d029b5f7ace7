#include "metaepi/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include "metaepi/diagnostics.hpp"

namespace metaepi {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double jacobian(Transform tr, double x) {
    switch (tr) {
        case Transform::Log:
            return std::log(x);
        case Transform::Logit:
            return std::log(x) + std::log1p(-x);
        default:
            return 0.0;
    }
}

double to_unconstrained(Transform tr, double x) {
    switch (tr) {
        case Transform::Log:
            return std::log(x);
        case Transform::Logit:
            return std::log(x) - std::log1p(-x);
        default:
            return x;
    }
}

double from_unconstrained(Transform tr, double y) {
    switch (tr) {
        case Transform::Log:
            return std::exp(y);
        case Transform::Logit:
            return y >= 0.0 ? 1.0 / (1.0 + std::exp(-y)) : std::exp(y) / (1.0 + std::exp(y));
        default:
            return y;
    }
}

bool valid_value(Transform tr, double x) {
    if (!std::isfinite(x)) return false;
    if (tr == Transform::Log) return x > 0.0;
    if (tr == Transform::Logit) return x > 0.0 && x < 1.0;
    return true;
}

constexpr std::size_t kMinPseudoSamples = 100;
constexpr double kPseudoWiden = 1.5;
constexpr double kMinPseudoSdlog = 0.5;

template <class T>
bool bitwise_equal(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

template <class T>
bool bitwise_equal(const std::vector<std::vector<T>>& a, const std::vector<std::vector<T>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!bitwise_equal(a[i], b[i])) return false;
    }
    return true;
}

class ChainRunner {
public:
    ChainRunner(const Model& model, const McmcConfig& config, const RunOptions& options,
                const std::vector<std::size_t>& monitored, std::size_t chain, ParameterState start)
        : model_(model),
          config_(config),
          options_(options),
          monitored_(monitored),
          chain_(chain),
          state_(std::move(start)),
          rng_(chain_seed(config, chain)) {}

    ChainDraws run() {
        const std::size_t dim = model_.dimension();
        const std::size_t n_ind = model_.layout().indicator_count();
        if (!model_.in_support(state_)) {
            throw McmcError("initial state of chain " + std::to_string(chain_) + " is outside the support");
        }
        const double lp0 = model_.log_posterior(state_);
        if (!std::isfinite(lp0)) {
            throw McmcError("non-finite log density at the initial state of chain " + std::to_string(chain_));
        }

        transforms_.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) transforms_[k] = model_.layout().transform(k);
        scale_.assign(dim, config_.initial_scale);
        window_accept_.assign(dim, 0.0);
        window_tries_.assign(dim, 0);
        kept_accept_.assign(dim, 0.0);
        kept_tries_.assign(dim, 0);
        ind_accept_.assign(n_ind, 0.0);
        ind_tries_.assign(n_ind, 0);
        pseudo_n_.assign(n_ind, 0);
        pseudo_sum_.assign(n_ind, 0.0);
        pseudo_sumsq_.assign(n_ind, 0.0);
        slab_.resize(n_ind);
        offsets_.resize(n_ind);
        for (std::size_t z = 0; z < n_ind; ++z) {
            slab_[z] = model_.slab_coordinate(z);
            offsets_[z] = model_.offset_coordinates(z);
        }

        const auto& L = model_.layout();
        block_on_ = options_.tau_block && L.tau_hierarchy();
        if (block_on_ && !options_.free.empty()) {
            block_on_ = options_.free[L.mu()];
            for (std::size_t m = 0; m < L.meta_count(); ++m) block_on_ = block_on_ && options_.free[L.tau(m)];
        }
        if (block_on_) {
            block_coords_.push_back(L.mu());
            for (std::size_t m = 0; m < L.meta_count(); ++m) block_coords_.push_back(L.tau(m));
        }

        ChainDraws out;
        out.seed = chain_seed(config_, chain_);
        const std::size_t n_draws = config_.iterations / config_.thin;
        out.values.assign(monitored_.size(), std::vector<double>(n_draws));
        out.indicators.assign(n_ind, std::vector<std::uint8_t>(n_draws));
        out.deviance.resize(n_draws);
        out.fitted_sum.assign(model_.arm_count(), 0.0);
        std::vector<double> fitted(model_.arm_count());

        std::size_t draw = 0;
        std::size_t window_index = 0;
        const std::size_t total = config_.burn_in + config_.iterations;
        for (std::size_t it = 0; it < total; ++it) {
            const bool adapting = it < config_.burn_in;
            if (options_.update_indicators) {
                for (std::size_t z = 0; z < n_ind; ++z) {
                    if (!state_.indicators[z]) refresh_auxiliaries(z);
                    flip_indicator(z, adapting);
                }
            }
            for (std::size_t k = 0; k < dim; ++k) {
                if (!options_.free.empty() && !options_.free[k]) continue;
                if (!model_.updatable(state_, k)) continue;
                update(k, adapting);
            }
            if (block_on_) tau_block(adapting);
            if (adapting && options_.update_indicators && 2 * it >= config_.burn_in) track_slabs();
            if (adapting && (it + 1) % config_.adapt_window == 0) {
                adapt(window_index++);
                if (options_.update_indicators) tune_pseudo_priors();
            }
            if (!adapting && (it - config_.burn_in + 1) % config_.thin == 0 && draw < n_draws) {
                for (std::size_t i = 0; i < monitored_.size(); ++i) out.values[i][draw] = state_.values[monitored_[i]];
                for (std::size_t z = 0; z < n_ind; ++z) out.indicators[z][draw] = state_.indicators[z];
                model_.fitted_probabilities(state_, fitted);
                out.deviance[draw] = residual_deviance(fitted, model_.arm_events(), model_.arm_sizes());
                for (std::size_t a = 0; a < fitted.size(); ++a) out.fitted_sum[a] += fitted[a];
                ++draw;
            }
        }

        out.proposal_scale = scale_;
        out.acceptance.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            out.acceptance[k] = kept_tries_[k] ? kept_accept_[k] / static_cast<double>(kept_tries_[k])
                                               : std::numeric_limits<double>::quiet_NaN();
        }
        out.tau_block_acceptance = block_on_ && block_tries_ ? block_accept_ / static_cast<double>(block_tries_)
                                                             : std::numeric_limits<double>::quiet_NaN();
        out.indicator_acceptance.resize(n_ind);
        for (std::size_t z = 0; z < n_ind; ++z) {
            out.indicator_acceptance[z] = ind_tries_[z] ? ind_accept_[z] / static_cast<double>(ind_tries_[z])
                                                        : std::numeric_limits<double>::quiet_NaN();
        }
        return out;
    }

private:
    double uniform() { return std::generate_canonical<double, 53>(rng_); }

    static bool accept_ratio(double lp_old, double lp_new, double log_u, double& alpha) {
        if (lp_new == -std::numeric_limits<double>::infinity()) {
            alpha = 0.0;
            return false;
        }
        if (lp_old == -std::numeric_limits<double>::infinity()) {
            alpha = 1.0;
            return true;
        }
        const double log_alpha = lp_new - lp_old;
        alpha = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
        return log_u < log_alpha;
    }

    void update(std::size_t k, bool adapting) {
        const Transform tr = transforms_[k];
        const double x_old = state_.values[k];
        const double lp_old = model_.conditional_log_density(state_, k) + jacobian(tr, x_old);
        const double y_new = to_unconstrained(tr, x_old) + scale_[k] * normal_(rng_);
        const double x_new = from_unconstrained(tr, y_new);
        const double log_u = std::log(uniform());
        double alpha = 0.0;
        bool accepted = false;
        if (valid_value(tr, x_new)) {
            state_.values[k] = x_new;
            const double lp_new = model_.conditional_log_density(state_, k) + jacobian(tr, x_new);
            accepted = accept_ratio(lp_old, lp_new, log_u, alpha);
            if (!accepted) state_.values[k] = x_old;
        }
        if (adapting) {
            window_accept_[k] += alpha;
            ++window_tries_[k];
        } else {
            kept_accept_[k] += accepted ? 1.0 : 0.0;
            ++kept_tries_[k];
        }
    }

    void flip_indicator(std::size_t z, bool adapting) {
        const double lp_old = model_.indicator_log_density(state_, z);
        state_.indicators[z] ^= 1;
        const double lp_new = model_.indicator_log_density(state_, z);
        double alpha = 0.0;
        const bool accepted = accept_ratio(lp_old, lp_new, std::log(uniform()), alpha);
        if (!accepted) state_.indicators[z] ^= 1;
        if (!adapting) {
            ind_accept_[z] += accepted ? 1.0 : 0.0;
            ++ind_tries_[z];
        }
    }

    // mu += delta, log tau_m^2 += delta for every m. The tau coordinates
    // live on the log scale, so the target picks up prod tau_m.
    double block_target() const {
        double lp = model_.tau_block_log_density(state_);
        for (std::size_t i = 1; i < block_coords_.size(); ++i) lp += std::log(state_.values[block_coords_[i]]);
        return lp;
    }

    void tau_block(bool adapting) {
        const double lp_old = block_target();
        const double delta = block_scale_ * normal_(rng_);
        saved_.resize(block_coords_.size());
        for (std::size_t i = 0; i < block_coords_.size(); ++i) saved_[i] = state_.values[block_coords_[i]];
        state_.values[block_coords_[0]] += delta;
        const double f = std::exp(0.5 * delta);
        for (std::size_t i = 1; i < block_coords_.size(); ++i) state_.values[block_coords_[i]] *= f;
        const double log_u = std::log(uniform());
        double alpha = 0.0;
        bool accepted = false;
        if (model_.in_support(state_)) accepted = accept_ratio(lp_old, block_target(), log_u, alpha);
        if (!accepted) {
            for (std::size_t i = 0; i < block_coords_.size(); ++i) state_.values[block_coords_[i]] = saved_[i];
        }
        if (adapting) {
            block_window_accept_ += alpha;
            ++block_window_tries_;
        } else {
            block_accept_ += accepted ? 1.0 : 0.0;
            ++block_tries_;
        }
    }

    // While z = 0 the slab variance and offsets are independent of the rest
    // of the state, so they are drawn exactly from the pseudo-prior.
    void refresh_auxiliaries(std::size_t z) {
        const double v = std::exp(state_.pseudo_meanlog[z] + state_.pseudo_sdlog[z] * normal_(rng_));
        state_.values[slab_[z]] = v;
        const double sd = std::sqrt(v);
        for (auto k : offsets_[z]) state_.values[k] = sd * normal_(rng_);
    }

    void track_slabs() {
        for (std::size_t z = 0; z < slab_.size(); ++z) {
            if (!state_.indicators[z]) continue;
            const double lv = std::log(state_.values[slab_[z]]);
            ++pseudo_n_[z];
            pseudo_sum_[z] += lv;
            pseudo_sumsq_[z] += lv * lv;
        }
    }

    // Pseudo-prior <- log-normal fitted to the slab variance while z = 1 in
    // the second half of burn-in, widened for heavier tails.
    void tune_pseudo_priors() {
        for (std::size_t z = 0; z < slab_.size(); ++z) {
            if (pseudo_n_[z] < kMinPseudoSamples) continue;
            const double n = static_cast<double>(pseudo_n_[z]);
            const double mean = pseudo_sum_[z] / n;
            const double var = std::max(0.0, pseudo_sumsq_[z] / n - mean * mean);
            state_.pseudo_meanlog[z] = mean;
            state_.pseudo_sdlog[z] = std::max(kPseudoWiden * std::sqrt(var), kMinPseudoSdlog);
        }
    }

    void adapt(std::size_t window_index) {
        const double step = std::min(1.0, 3.0 / std::sqrt(static_cast<double>(window_index) + 1.0));
        for (std::size_t k = 0; k < scale_.size(); ++k) {
            if (window_tries_[k] == 0) continue;
            const double rate = window_accept_[k] / static_cast<double>(window_tries_[k]);
            scale_[k] *= std::exp(step * (rate - config_.target_accept));
            if (!(scale_[k] > 1e-10)) {
                throw McmcError("proposal scale for " + model_.parameter_name(k) +
                                " collapsed during adaptation (every proposal rejected)");
            }
            window_accept_[k] = 0.0;
            window_tries_[k] = 0;
        }
        if (block_window_tries_ > 0) {
            const double rate = block_window_accept_ / static_cast<double>(block_window_tries_);
            block_scale_ *= std::exp(step * (rate - config_.target_accept));
            if (!(block_scale_ > 1e-10)) throw McmcError("proposal scale of the joint tau move collapsed");
            block_window_accept_ = 0.0;
            block_window_tries_ = 0;
        }
    }

    const Model& model_;
    const McmcConfig& config_;
    const RunOptions& options_;
    const std::vector<std::size_t>& monitored_;
    std::size_t chain_;
    ParameterState state_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
    std::vector<Transform> transforms_;
    std::vector<double> scale_;
    std::vector<double> window_accept_;
    std::vector<std::size_t> window_tries_;
    std::vector<double> kept_accept_;
    std::vector<std::size_t> kept_tries_;
    std::vector<double> ind_accept_;
    std::vector<std::size_t> ind_tries_;
    std::vector<std::size_t> slab_;
    std::vector<std::vector<std::size_t>> offsets_;
    bool block_on_ = false;
    std::vector<std::size_t> block_coords_;  // mu, then tau per meta-analysis
    std::vector<double> saved_;
    double block_scale_ = 0.5;
    double block_window_accept_ = 0.0;
    std::size_t block_window_tries_ = 0;
    double block_accept_ = 0.0;
    std::size_t block_tries_ = 0;
    std::vector<std::size_t> pseudo_n_;
    std::vector<double> pseudo_sum_;
    std::vector<double> pseudo_sumsq_;
};

}  // namespace

void validate(const McmcConfig& config) {
    if (config.n_chains < 1) throw McmcError("n_chains must be >= 1");
    if (config.iterations < 1) throw McmcError("iterations must be > 0");
    if (config.thin < 1) throw McmcError("thin must be >= 1");
    if (config.iterations / config.thin < 1) throw McmcError("thin larger than iterations leaves no draws");
    if (config.adapt_window < 1) throw McmcError("adapt_window must be >= 1");
    if (!(config.target_accept > 0.0 && config.target_accept < 1.0)) {
        throw McmcError("target_accept must lie in (0, 1)");
    }
    if (!(config.initial_scale > 0.0)) throw McmcError("initial_scale must be > 0");
    if (!config.chain_seeds.empty() && config.chain_seeds.size() != config.n_chains) {
        throw McmcError("chain_seeds must list one seed per chain");
    }
}

std::uint64_t chain_seed(const McmcConfig& config, std::size_t chain) {
    if (!config.chain_seeds.empty()) return config.chain_seeds.at(chain);
    return derive_seed(config.seed, chain);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(0x6D657461ULL + stream));
}

std::size_t PosteriorDraws::slot(std::size_t k) const {
    const auto it = std::lower_bound(monitored.begin(), monitored.end(), k);
    if (it == monitored.end() || *it != k) throw McmcError("coordinate " + std::to_string(k) + " was not monitored");
    return static_cast<std::size_t>(it - monitored.begin());
}

std::vector<double> PosteriorDraws::pooled(std::size_t k) const {
    const std::size_t s = slot(k);
    std::vector<double> out;
    out.reserve(total_draws());
    for (const auto& c : chains) out.insert(out.end(), c.values[s].begin(), c.values[s].end());
    return out;
}

const std::vector<double>& PosteriorDraws::chain(std::size_t c, std::size_t k) const {
    return chains.at(c).values[slot(k)];
}

std::vector<std::vector<double>> PosteriorDraws::by_chain(std::size_t k) const {
    const std::size_t s = slot(k);
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) out.push_back(c.values[s]);
    return out;
}

std::vector<std::uint8_t> PosteriorDraws::pooled_indicator(std::size_t z) const {
    std::vector<std::uint8_t> out;
    for (const auto& c : chains) out.insert(out.end(), c.indicators.at(z).begin(), c.indicators.at(z).end());
    return out;
}

bool PosteriorDraws::operator==(const PosteriorDraws& o) const {
    if (monitored != o.monitored || names != o.names || indicator_names != o.indicator_names ||
        draws_per_chain != o.draws_per_chain || chains.size() != o.chains.size()) {
        return false;
    }
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const auto& a = chains[c];
        const auto& b = o.chains[c];
        if (a.seed != b.seed || !bitwise_equal(a.values, b.values) || !bitwise_equal(a.indicators, b.indicators) ||
            !bitwise_equal(a.deviance, b.deviance) || !bitwise_equal(a.fitted_sum, b.fitted_sum) ||
            !bitwise_equal(a.acceptance, b.acceptance) || !bitwise_equal(a.proposal_scale, b.proposal_scale)) {
            return false;
        }
    }
    return true;
}

PosteriorDraws run(const Model& model, const McmcConfig& config, const RunOptions& options) {
    validate(config);
    if (!options.free.empty() && options.free.size() != model.dimension()) {
        throw McmcError("free mask length differs from the model dimension");
    }
    std::vector<ParameterState> starts = options.initial;
    if (starts.empty()) starts = model.initial_states(config.n_chains);
    if (starts.size() != config.n_chains) throw McmcError("need one initial state per chain");

    PosteriorDraws draws;
    draws.config = config;
    for (std::size_t k = 0; k < model.dimension(); ++k) {
        if (config.monitor_trials || !model.layout().is_trial_level(k)) draws.monitored.push_back(k);
    }
    for (auto k : draws.monitored) draws.names.push_back(model.parameter_name(k));
    for (std::size_t z = 0; z < model.layout().indicator_count(); ++z) {
        draws.indicator_names.push_back(model.indicator_name(z));
    }
    draws.draws_per_chain = config.iterations / config.thin;
    draws.chains.resize(config.n_chains);

    std::vector<std::exception_ptr> errors(config.n_chains);
    const auto work = [&](std::size_t c) {
        try {
            ChainRunner runner(model, config, options, draws.monitored, c, starts[c]);
            draws.chains[c] = runner.run();
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (config.parallel && config.n_chains > 1 && std::thread::hardware_concurrency() > 1) {
        std::vector<std::thread> threads;
        for (std::size_t c = 0; c < config.n_chains; ++c) threads.emplace_back(work, c);
        for (auto& t : threads) t.join();
    } else {
        for (std::size_t c = 0; c < config.n_chains; ++c) work(c);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return draws;
}

void write_chain_csv(const PosteriorDraws& draws, std::size_t chain, std::ostream& out) {
    const auto& c = draws.chains.at(chain);
    out << "iteration";
    for (const auto& n : draws.names) out << ',' << n;
    for (const auto& n : draws.indicator_names) out << ',' << n;
    out << ",deviance\n";
    char buf[32];
    for (std::size_t d = 0; d < draws.draws_per_chain; ++d) {
        out << (d + 1) * draws.config.thin;
        for (const auto& v : c.values) {
            std::snprintf(buf, sizeof buf, "%.17g", v[d]);
            out << ',' << buf;
        }
        for (const auto& z : c.indicators) out << ',' << static_cast<int>(z[d]);
        std::snprintf(buf, sizeof buf, "%.17g", c.deviance[d]);
        out << ',' << buf << '\n';
    }
}

void dump_draws(const PosteriorDraws& draws, const std::string& prefix) {
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
        const std::string path = prefix + ".chain" + std::to_string(c + 1) + ".csv";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw McmcError("cannot write draw file '" + path + "'");
        write_chain_csv(draws, c, out);
    }
}

}  // namespace metaepi
