#include "metaepi/model.hpp"

#include <algorithm>
#include <cmath>

namespace metaepi {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kLog2 = 0.69314718055994530942;
// Pseudo-prior of an inactive slab variance before the sampler tunes it:
// centred on a variance of 0.02 (SD ~0.14 on the log-OR scale).
const double kDefaultPseudoMeanlog = std::log(0.02);
constexpr double kDefaultPseudoSdlog = 1.5;

inline double normal_logpdf_var(double x, double mean, double var) {
    if (!(var > 0.0)) return kNegInf;
    const double r = x - mean;
    return -0.5 * r * r / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

// log(1 / (1 + exp(-x))) without overflow.
inline double log_expit(double x) { return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x)); }

inline double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_choose(double n, double r) {
    return std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0);
}

inline double binom_logpmf_logit(double r, double n, double log_choose_nr, double logit_p) {
    return log_choose_nr + r * log_expit(logit_p) + (n - r) * log_expit(-logit_p);
}

double check(double v, const char* what) {
    if (std::isnan(v)) throw NumericError(std::string("NaN in ") + what);
    return v;
}

}  // namespace

std::string to_string(VarianceStructure s) {
    return s == VarianceStructure::Additive ? "additive" : "label-invariant";
}

VarianceStructure parse_structure(const std::string& s) {
    if (s == "additive") return VarianceStructure::Additive;
    if (s == "label-invariant" || s == "label_invariant") return VarianceStructure::LabelInvariant;
    throw ModelError("unknown variance structure '" + s + "' (expected additive or label-invariant)");
}

ModelSpec make_spec(VarianceStructure structure, std::vector<std::size_t> characteristics, bool tau_hierarchy) {
    ModelSpec spec;
    spec.structure = structure;
    spec.characteristics = std::move(characteristics);
    spec.tau_hierarchy = tau_hierarchy;
    if (structure == VarianceStructure::Additive) {
        spec.priors.kappa_sq = InverseGammaZeroMixture{0.001, 0.001};
    } else {
        spec.priors.lambda = LogNormalPrior{0.0, 1.0};
    }
    return spec;
}

void validate(const ModelSpec& spec) {
    if (spec.characteristics.empty()) throw ModelError("model needs at least one characteristic (p >= 1)");
    auto sorted = spec.characteristics;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ModelError("characteristic listed twice");
    }
    const auto& pr = spec.priors;
    if (spec.structure == VarianceStructure::Additive) {
        if (!pr.kappa_sq) throw ModelError("additive model needs a kappa_sq prior");
        if (pr.lambda) throw ModelError("additive model must not carry a lambda prior");
        if (!std::holds_alternative<InverseGammaZeroMixture>(*pr.kappa_sq)) {
            throw ModelError("kappa_sq prior must be an inverse-gamma-zero-mixture");
        }
    } else {
        if (!pr.lambda) throw ModelError("label-invariant model needs a lambda prior");
        if (pr.kappa_sq) throw ModelError("label-invariant model must not carry a kappa_sq prior");
        if (std::holds_alternative<NormalPrior>(*pr.lambda) ||
            std::holds_alternative<InverseGammaZeroMixture>(*pr.lambda)) {
            throw ModelError("lambda prior must be a positive-support family");
        }
    }
    if (!std::holds_alternative<InverseGammaZeroMixture>(pr.phi_sq)) {
        throw ModelError("phi_sq prior must be an inverse-gamma-zero-mixture");
    }
    if (!std::holds_alternative<NormalPrior>(pr.location)) throw ModelError("location prior must be normal");
    if (!std::holds_alternative<NormalPrior>(pr.mu)) throw ModelError("mu prior must be normal");
    for (const PriorSpec* p : {&pr.location, &pr.tau, &pr.mu, &pr.sigma, &pr.phi_sq, &pr.p0}) validate(*p);
    if (pr.kappa_sq) validate(*pr.kappa_sq);
    if (pr.lambda) validate(*pr.lambda);
    const auto check_positive = [](const PriorSpec& p, const char* what) {
        if (std::holds_alternative<NormalPrior>(p) || std::holds_alternative<InverseGammaZeroMixture>(p)) {
            throw ModelError(std::string(what) + " prior must be a positive-support family");
        }
        if (const auto* u = std::get_if<UniformPrior>(&p); u && u->lo < 0.0) {
            throw ModelError(std::string(what) + " prior must not put mass below 0");
        }
    };
    check_positive(pr.tau, "tau");
    check_positive(pr.sigma, "sigma");
    const auto* p0 = std::get_if<UniformPrior>(&pr.p0);
    if (!p0 || p0->lo < 0.0 || p0->hi > 1.0) throw ModelError("p0 prior must be uniform within [0, 1]");
}

double effect_mean(std::span<const std::uint8_t> flags, double d, std::span<const double> b) {
    if (flags.size() != b.size()) throw ModelError("effect_mean: flags and b differ in length");
    double mean = d;
    for (std::size_t j = 0; j < flags.size(); ++j) {
        if (flags[j]) mean += b[j];
    }
    return mean;
}

double effect_variance(std::span<const std::uint8_t> flags, double tau_sq, VarianceStructure structure,
                       std::span<const double> scale) {
    if (flags.size() != scale.size()) throw ModelError("effect_variance: flags and scale differ in length");
    if (!(tau_sq >= 0.0)) throw ModelError("effect_variance: negative tau^2");
    for (double s : scale) {
        if (!(s >= 0.0)) throw ModelError("effect_variance: negative variance term");
    }
    double v = tau_sq;
    if (structure == VarianceStructure::Additive) {
        for (std::size_t j = 0; j < flags.size(); ++j) {
            if (flags[j]) v += scale[j];
        }
    } else {
        for (std::size_t j = 0; j < flags.size(); ++j) {
            if (flags[j]) v *= scale[j];
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// ParameterLayout

ParameterLayout::ParameterLayout(std::size_t characteristics, std::vector<std::size_t> trials_per_meta,
                                 VarianceStructure structure, bool tau_hierarchy)
    : p_(characteristics),
      additive_(structure == VarianceStructure::Additive),
      tau_hierarchy_(tau_hierarchy) {
    global_count_ = 4 * p_ + (tau_hierarchy_ ? 2 : 0);
    std::size_t k = global_count_;
    for (std::size_t m = 0; m < trials_per_meta.size(); ++m) {
        meta_offset_.push_back(k);
        k += 2 + p_;
    }
    trial_offset_ = k;
    for (std::size_t m = 0; m < trials_per_meta.size(); ++m) {
        for (std::size_t i = 0; i < trials_per_meta[m]; ++i) trial_meta_.push_back(m);
    }
    n_trials_ = trial_meta_.size();
    dimension_ = trial_offset_ + 2 * n_trials_;
}

std::size_t ParameterLayout::mu() const {
    if (!tau_hierarchy_) throw ModelError("mu is only defined with the tau hierarchy");
    return 4 * p_;
}

std::size_t ParameterLayout::sigma() const {
    if (!tau_hierarchy_) throw ModelError("sigma is only defined with the tau hierarchy");
    return 4 * p_ + 1;
}

Coordinate ParameterLayout::decode(std::size_t k) const {
    if (k >= dimension_) throw ModelError("coordinate out of range");
    if (k < 4 * p_) {
        const std::size_t j = k / 4;
        switch (k % 4) {
            case 0:
                return {Role::B0, 0, j, 0};
            case 1:
                return {Role::PhiVar, 0, j, 0};
            case 2:
                return {additive_ ? Role::KappaVar : Role::Lambda, 0, j, 0};
            default:
                return {Role::P0, 0, j, 0};
        }
    }
    if (k < global_count_) return {k == 4 * p_ ? Role::Mu : Role::Sigma, 0, 0, 0};
    if (k < trial_offset_) {
        const auto it = std::upper_bound(meta_offset_.begin(), meta_offset_.end(), k) - 1;
        const std::size_t m = static_cast<std::size_t>(it - meta_offset_.begin());
        const std::size_t r = k - *it;
        if (r == 0) return {Role::D, m, 0, 0};
        if (r == 1) return {Role::Tau, m, 0, 0};
        return {Role::BOffset, m, r - 2, 0};
    }
    const std::size_t t = (k - trial_offset_) / 2;
    return {(k - trial_offset_) % 2 == 0 ? Role::Gamma : Role::Theta, trial_meta_[t], 0, t};
}

Transform ParameterLayout::transform(std::size_t k) const {
    switch (decode(k).role) {
        case Role::PhiVar:
        case Role::KappaVar:
        case Role::Lambda:
        case Role::Sigma:
        case Role::Tau:
            return Transform::Log;
        case Role::P0:
            return Transform::Logit;
        default:
            return Transform::Identity;
    }
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec, Dataset dataset) : spec_(std::move(spec)), dataset_(std::move(dataset)) {
    validate(spec_);
    validate(dataset_);
    const std::size_t p = spec_.characteristics.size();
    for (auto j : spec_.characteristics) {
        if (j >= dataset_.characteristic_count()) {
            throw ModelError("characteristic index " + std::to_string(j) + " out of range");
        }
    }
    if (dataset_.meta_analyses.empty()) throw ModelError("empty dataset (no informative meta-analyses)");

    classification_ = classify(dataset_, spec_.min_each_side_for_variance);
    std::vector<std::size_t> trials_per_meta;
    meta_begin_.push_back(0);
    for (std::size_t m = 0; m < dataset_.meta_analyses.size(); ++m) {
        const auto& ma = dataset_.meta_analyses[m];
        if (spec_.require_all_informative) {
            for (auto j : spec_.characteristics) {
                if (!classification_.at(m, j).informative) {
                    throw ModelError("meta-analysis '" + ma.meta_id + "' is not informative for '" +
                                     dataset_.characteristic_names[j] +
                                     "' (apply informative_subset or relax require_all_informative)");
                }
            }
        }
        trials_per_meta.push_back(ma.trials.size());
        std::vector<bool> row;
        for (auto j : spec_.characteristics) {
            row.push_back(!spec_.apply_cut || classification_.at(m, j).cut_eligible);
        }
        cut_mask_.push_back(std::move(row));
        for (const auto& t : ma.trials) {
            trial_meta_.push_back(m);
            for (auto j : spec_.characteristics) flags_.push_back(t.flags[j]);
            events_ctrl_.push_back(static_cast<double>(t.events_ctrl));
            size_ctrl_.push_back(static_cast<double>(t.size_ctrl));
            events_treat_.push_back(static_cast<double>(t.events_treat));
            size_treat_.push_back(static_cast<double>(t.size_treat));
            log_choose_ctrl_.push_back(log_choose(size_ctrl_.back(), events_ctrl_.back()));
            log_choose_treat_.push_back(log_choose(size_treat_.back(), events_treat_.back()));
            trial_labels_.push_back(ma.meta_id + ":" + t.trial_id);
            arm_events_.insert(arm_events_.end(), {events_ctrl_.back(), events_treat_.back()});
            arm_sizes_.insert(arm_sizes_.end(), {size_ctrl_.back(), size_treat_.back()});
        }
        meta_begin_.push_back(trial_meta_.size());
    }
    layout_ = ParameterLayout(p, trials_per_meta, spec_.structure, spec_.tau_hierarchy);

    flagged_.assign(p, {});
    cut_flagged_.assign(p, {});
    for (std::size_t t = 0; t < trial_meta_.size(); ++t) {
        for (std::size_t j = 0; j < p; ++j) {
            if (!flags_[t * p + j]) continue;
            flagged_[j].push_back(t);
            if (cut_mask_[trial_meta_[t]][j]) cut_flagged_[j].push_back(t);
        }
    }
}

std::string Model::characteristic_name(std::size_t j) const {
    return dataset_.characteristic_names[spec_.characteristics.at(j)];
}

std::string Model::parameter_name(std::size_t k) const {
    const auto c = layout_.decode(k);
    const auto meta = [&] { return dataset_.meta_analyses[c.meta].meta_id; };
    switch (c.role) {
        case Role::B0:
            return "b0[" + characteristic_name(c.characteristic) + "]";
        case Role::PhiVar:
            return "phi_var[" + characteristic_name(c.characteristic) + "]";
        case Role::KappaVar:
            return "kappa_var[" + characteristic_name(c.characteristic) + "]";
        case Role::Lambda:
            return "lambda[" + characteristic_name(c.characteristic) + "]";
        case Role::P0:
            return "p0[" + characteristic_name(c.characteristic) + "]";
        case Role::Mu:
            return "mu";
        case Role::Sigma:
            return "sigma";
        case Role::D:
            return "d[" + meta() + "]";
        case Role::Tau:
            return "tau[" + meta() + "]";
        case Role::BOffset:
            return "b_offset[" + meta() + ":" + characteristic_name(c.characteristic) + "]";
        case Role::Gamma:
            return "gamma[" + trial_labels_[c.trial] + "]";
        case Role::Theta:
            return "theta[" + trial_labels_[c.trial] + "]";
    }
    return {};
}

std::vector<std::string> Model::parameter_names() const {
    std::vector<std::string> names;
    names.reserve(dimension());
    for (std::size_t k = 0; k < dimension(); ++k) names.push_back(parameter_name(k));
    return names;
}

std::string Model::indicator_name(std::size_t z) const {
    const std::size_t p = characteristic_count();
    if (z < p) return "z_phi[" + characteristic_name(z) + "]";
    return "z_kappa[" + characteristic_name(z - p) + "]";
}

const PriorSpec& Model::scale_prior() const {
    return layout_.additive() ? *spec_.priors.kappa_sq : *spec_.priors.lambda;
}

double Model::b(const ParameterState& s, std::size_t m, std::size_t j) const {
    const double b0 = s.values[layout_.b0(j)];
    return s.indicators[layout_.z_phi(j)] ? b0 + s.values[layout_.b_offset(m, j)] : b0;
}

double Model::phi_sq(const ParameterState& s, std::size_t j) const {
    return s.indicators[layout_.z_phi(j)] ? s.values[layout_.phi_var(j)] : 0.0;
}

double Model::kappa_sq(const ParameterState& s, std::size_t j) const {
    if (!layout_.additive()) throw ModelError("kappa is only defined for the additive model");
    return s.indicators[layout_.z_kappa(j)] ? s.values[layout_.scale(j)] : 0.0;
}

double Model::trial_mean(const ParameterState& s, std::size_t t) const {
    const std::size_t p = characteristic_count();
    const std::size_t m = trial_meta_[t];
    double mean = s.values[layout_.d(m)];
    const std::uint8_t* x = flags_.data() + t * p;
    for (std::size_t j = 0; j < p; ++j) {
        if (x[j]) mean += b(s, m, j);
    }
    return mean;
}

double Model::trial_variance(const ParameterState& s, std::size_t t) const {
    const std::size_t p = characteristic_count();
    const double tau = s.values[layout_.tau(trial_meta_[t])];
    double v = tau * tau;
    const std::uint8_t* x = flags_.data() + t * p;
    if (layout_.additive()) {
        for (std::size_t j = 0; j < p; ++j) {
            if (x[j] && s.indicators[layout_.z_kappa(j)]) v += s.values[layout_.scale(j)];
        }
    } else {
        for (std::size_t j = 0; j < p; ++j) {
            if (x[j]) v *= s.values[layout_.scale(j)];
        }
    }
    return v;
}

double Model::theta_term(const ParameterState& s, std::size_t t) const {
    return normal_logpdf_var(s.values[layout_.theta(t)], trial_mean(s, t), trial_variance(s, t));
}

double Model::binom_ctrl(const ParameterState& s, std::size_t t) const {
    return binom_logpmf_logit(events_ctrl_[t], size_ctrl_[t], log_choose_ctrl_[t], s.values[layout_.gamma(t)]);
}

double Model::binom_treat(const ParameterState& s, std::size_t t) const {
    return binom_logpmf_logit(events_treat_[t], size_treat_[t], log_choose_treat_[t],
                              s.values[layout_.gamma(t)] + s.values[layout_.theta(t)]);
}

double Model::tau_prior_term(const ParameterState& s, std::size_t m) const {
    const double tau = s.values[layout_.tau(m)];
    if (!layout_.tau_hierarchy()) return log_density(spec_.priors.tau, tau);
    if (!(tau > 0.0) || !std::isfinite(tau)) return kNegInf;
    const double sigma = s.values[layout_.sigma()];
    // log(tau^2) ~ N(mu, sigma^2); density of tau carries |d log tau^2 / d tau| = 2 / tau.
    return normal_logpdf_var(2.0 * std::log(tau), s.values[layout_.mu()], sigma * sigma) + kLog2 - std::log(tau);
}

double Model::bernoulli_term(const ParameterState& s, std::size_t zi) const {
    const std::size_t j = zi < characteristic_count() ? zi : zi - characteristic_count();
    const double p0 = s.values[layout_.p0(j)];
    if (!(p0 >= 0.0 && p0 <= 1.0)) return kNegInf;
    return s.indicators[zi] ? std::log1p(-p0) : std::log(p0);
}

double Model::slab_term(const ParameterState& s, std::size_t zi) const {
    const std::size_t v = slab_coordinate(zi);
    const PriorSpec& slab = zi < characteristic_count() ? spec_.priors.phi_sq : *spec_.priors.kappa_sq;
    if (s.indicators[zi]) return log_density(slab, s.values[v]);
    return log_density(LogNormalPrior{s.pseudo_meanlog[zi], s.pseudo_sdlog[zi]}, s.values[v]);
}

double Model::tau_block_log_density(const ParameterState& s) const {
    if (!layout_.tau_hierarchy()) throw ModelError("tau block needs the tau hierarchy");
    double lp = log_density(spec_.priors.mu, s.values[layout_.mu()]);
    for (std::size_t m = 0; m < meta_count(); ++m) lp += tau_prior_term(s, m);
    if (lp == kNegInf) return lp;
    for (std::size_t t = 0; t < trial_count(); ++t) lp += theta_term(s, t);
    return check(lp, "tau block density");
}

std::size_t Model::slab_coordinate(std::size_t zi) const {
    const std::size_t p = characteristic_count();
    if (zi < p) return layout_.phi_var(zi);
    if (!layout_.additive() || zi >= 2 * p) throw ModelError("indicator index out of range");
    return layout_.scale(zi - p);
}

std::vector<std::size_t> Model::offset_coordinates(std::size_t zi) const {
    std::vector<std::size_t> out;
    if (zi >= characteristic_count()) return out;
    for (std::size_t m = 0; m < meta_count(); ++m) out.push_back(layout_.b_offset(m, zi));
    return out;
}

double Model::log_likelihood(const ParameterState& s) const {
    double ll = 0.0;
    for (std::size_t t = 0; t < trial_count(); ++t) ll += binom_ctrl(s, t) + binom_treat(s, t);
    return check(ll, "log_likelihood");
}

double Model::log_theta_terms(const ParameterState& s) const {
    double lp = 0.0;
    for (std::size_t t = 0; t < trial_count(); ++t) lp += theta_term(s, t);
    return check(lp, "theta terms");
}

double Model::log_prior(const ParameterState& s) const {
    const auto& pr = spec_.priors;
    const std::size_t p = characteristic_count();
    double lp = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        lp += log_density(pr.location, s.values[layout_.b0(j)]);
        const double v_phi = s.values[layout_.phi_var(j)];
        lp += slab_term(s, layout_.z_phi(j));
        for (std::size_t m = 0; m < meta_count(); ++m) {
            lp += normal_logpdf_var(s.values[layout_.b_offset(m, j)], 0.0, v_phi);
        }
        lp += log_density(pr.p0, s.values[layout_.p0(j)]);
        lp += bernoulli_term(s, layout_.z_phi(j));
        if (layout_.additive()) {
            lp += slab_term(s, layout_.z_kappa(j));
            lp += bernoulli_term(s, layout_.z_kappa(j));
        } else {
            lp += log_density(scale_prior(), s.values[layout_.scale(j)]);
        }
    }
    if (layout_.tau_hierarchy()) {
        lp += log_density(pr.mu, s.values[layout_.mu()]);
        lp += log_density(pr.sigma, s.values[layout_.sigma()]);
    }
    for (std::size_t m = 0; m < meta_count(); ++m) {
        lp += log_density(pr.location, s.values[layout_.d(m)]);
        lp += tau_prior_term(s, m);
    }
    for (std::size_t t = 0; t < trial_count(); ++t) {
        lp += log_density(pr.location, s.values[layout_.gamma(t)]);
        lp += theta_term(s, t);
    }
    return check(lp, "log_prior");
}

bool Model::updatable(const ParameterState& s, std::size_t k) const {
    const auto c = layout_.decode(k);
    switch (c.role) {
        case Role::PhiVar:
        case Role::BOffset:
            return s.indicators[layout_.z_phi(c.characteristic)] != 0;
        case Role::KappaVar:
            return s.indicators[layout_.z_kappa(c.characteristic)] != 0;
        default:
            return true;
    }
}

double Model::conditional_log_density(const ParameterState& s, std::size_t k) const {
    const auto& pr = spec_.priors;
    const auto c = layout_.decode(k);
    const std::size_t j = c.characteristic;
    double lp = 0.0;
    switch (c.role) {
        case Role::B0:
            lp = log_density(pr.location, s.values[k]);
            for (auto t : flagged_[j]) lp += theta_term(s, t);
            break;
        case Role::PhiVar: {
            const double v = s.values[k];
            lp = slab_term(s, layout_.z_phi(j));
            if (lp == kNegInf) break;
            for (std::size_t m = 0; m < meta_count(); ++m) {
                lp += normal_logpdf_var(s.values[layout_.b_offset(m, j)], 0.0, v);
            }
            break;
        }
        case Role::KappaVar:
            lp = slab_term(s, layout_.z_kappa(j));
            if (lp == kNegInf || !s.indicators[layout_.z_kappa(j)]) break;
            for (auto t : cut_flagged_[j]) lp += theta_term(s, t);
            break;
        case Role::Lambda:
            lp = log_density(scale_prior(), s.values[k]);
            if (lp == kNegInf) break;
            for (auto t : cut_flagged_[j]) lp += theta_term(s, t);
            break;
        case Role::P0:
            lp = log_density(pr.p0, s.values[k]);
            if (lp == kNegInf) break;
            lp += bernoulli_term(s, layout_.z_phi(j));
            if (layout_.additive()) lp += bernoulli_term(s, layout_.z_kappa(j));
            break;
        case Role::Mu:
        case Role::Sigma:
            lp = log_density(c.role == Role::Mu ? pr.mu : pr.sigma, s.values[k]);
            if (lp == kNegInf) break;
            for (std::size_t m = 0; m < meta_count(); ++m) lp += tau_prior_term(s, m);
            break;
        case Role::D: {
            lp = log_density(pr.location, s.values[k]);
            for (auto t = meta_begin_[c.meta]; t < meta_begin_[c.meta + 1]; ++t) lp += theta_term(s, t);
            break;
        }
        case Role::Tau: {
            lp = tau_prior_term(s, c.meta);
            if (lp == kNegInf) break;
            for (auto t = meta_begin_[c.meta]; t < meta_begin_[c.meta + 1]; ++t) lp += theta_term(s, t);
            break;
        }
        case Role::BOffset: {
            lp = normal_logpdf_var(s.values[k], 0.0, s.values[layout_.phi_var(j)]);
            const std::size_t p = characteristic_count();
            for (auto t = meta_begin_[c.meta]; t < meta_begin_[c.meta + 1]; ++t) {
                if (flags_[t * p + j]) lp += theta_term(s, t);
            }
            break;
        }
        case Role::Gamma:
            lp = log_density(pr.location, s.values[k]) + binom_ctrl(s, c.trial) + binom_treat(s, c.trial);
            break;
        case Role::Theta:
            lp = theta_term(s, c.trial) + binom_treat(s, c.trial);
            break;
    }
    return check(lp, "conditional density");
}

double Model::indicator_log_density(const ParameterState& s, std::size_t zi) const {
    const std::size_t p = characteristic_count();
    double lp = bernoulli_term(s, zi) + slab_term(s, zi);
    if (zi < p) {
        for (auto t : flagged_[zi]) lp += theta_term(s, t);
    } else {
        for (auto t : cut_flagged_[zi - p]) lp += theta_term(s, t);
    }
    return check(lp, "indicator density");
}

ParameterState Model::initial_state(std::size_t chain, std::size_t n_chains) const {
    if (n_chains == 0 || chain >= n_chains) throw ModelError("invalid chain index");
    const double q = static_cast<double>(chain + 1) / static_cast<double>(n_chains + 1);
    const double offset = static_cast<double>(chain) - 0.5 * static_cast<double>(n_chains - 1);
    const auto& pr = spec_.priors;
    const auto location_median = std::get<NormalPrior>(pr.location).mean;
    const std::size_t p = characteristic_count();

    ParameterState s;
    s.values.assign(dimension(), 0.0);
    s.indicators.assign(layout_.indicator_count(), 1);
    s.pseudo_meanlog.assign(layout_.indicator_count(), kDefaultPseudoMeanlog);
    s.pseudo_sdlog.assign(layout_.indicator_count(), kDefaultPseudoSdlog);
    // Slab SDs on a fixed ladder: the inverse-gamma(0.001, 0.001) quantiles
    // are numerically useless as starting points.
    const double slab_sd = 0.4 * q;
    for (std::size_t j = 0; j < p; ++j) {
        s.values[layout_.b0(j)] = location_median + offset;
        s.values[layout_.phi_var(j)] = slab_sd * slab_sd;
        s.values[layout_.scale(j)] = layout_.additive() ? slab_sd * slab_sd : prior_quantile(*pr.lambda, q);
        s.values[layout_.p0(j)] = q;
    }
    if (layout_.tau_hierarchy()) {
        s.values[layout_.mu()] = std::get<NormalPrior>(pr.mu).mean + offset;
        s.values[layout_.sigma()] = prior_quantile(pr.sigma, q);
    }
    const double tau0 = layout_.tau_hierarchy() ? 2.0 * q : prior_quantile(pr.tau, q);
    for (std::size_t m = 0; m < meta_count(); ++m) {
        s.values[layout_.d(m)] = location_median + offset;
        s.values[layout_.tau(m)] = tau0;
    }
    // Trial-level locations start from the continuity-corrected empirical
    // log odds, shifted by the chain offset.
    for (std::size_t t = 0; t < trial_count(); ++t) {
        const double lc = std::log((events_ctrl_[t] + 0.5) / (size_ctrl_[t] - events_ctrl_[t] + 0.5));
        const double lt = std::log((events_treat_[t] + 0.5) / (size_treat_[t] - events_treat_[t] + 0.5));
        s.values[layout_.gamma(t)] = lc;
        s.values[layout_.theta(t)] = lt - lc + offset;
    }
    return s;
}

std::vector<ParameterState> Model::initial_states(std::size_t n_chains) const {
    std::vector<ParameterState> out;
    for (std::size_t c = 0; c < n_chains; ++c) out.push_back(initial_state(c, n_chains));
    return out;
}

void Model::fitted_probabilities(const ParameterState& s, std::span<double> out) const {
    if (out.size() != arm_count()) throw ModelError("fitted_probabilities: output size mismatch");
    for (std::size_t t = 0; t < trial_count(); ++t) {
        const double g = s.values[layout_.gamma(t)];
        out[2 * t] = expit(g);
        out[2 * t + 1] = expit(g + s.values[layout_.theta(t)]);
    }
}

bool Model::in_support(const ParameterState& s) const {
    const std::size_t n_ind = layout_.indicator_count();
    if (s.values.size() != dimension() || s.indicators.size() != n_ind) return false;
    if (s.pseudo_meanlog.size() != n_ind || s.pseudo_sdlog.size() != n_ind) return false;
    for (std::size_t z = 0; z < n_ind; ++z) {
        if (!std::isfinite(s.pseudo_meanlog[z]) || !(s.pseudo_sdlog[z] > 0.0)) return false;
    }
    for (auto z : s.indicators) {
        if (z > 1) return false;
    }
    for (double v : s.values) {
        if (!std::isfinite(v)) return false;
    }
    for (std::size_t m = 0; m < meta_count(); ++m) {
        if (!(s.values[layout_.tau(m)] >= 0.0)) return false;
    }
    for (std::size_t j = 0; j < characteristic_count(); ++j) {
        if (!(s.values[layout_.phi_var(j)] > 0.0)) return false;
        if (!(s.values[layout_.scale(j)] > 0.0)) return false;
        const double p0 = s.values[layout_.p0(j)];
        if (!(p0 >= 0.0 && p0 <= 1.0)) return false;
    }
    if (layout_.tau_hierarchy()) {
        if (!metaepi::in_support(spec_.priors.sigma, s.values[layout_.sigma()])) return false;
    }
    return true;
}

}  // namespace metaepi
