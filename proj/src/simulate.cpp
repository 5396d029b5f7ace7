#include "metaepi/simulate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "metaepi/diagnostics.hpp"
#include "metaepi/stats.hpp"
#include "metaepi/summaries.hpp"

namespace metaepi {

using nlohmann::json;

namespace {

constexpr const char* kTruthSchema = "metaepi-truth/1";
constexpr double kTruthDVariance = 0.25;
constexpr int kMaxFlagRedraws = 10000;

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::size_t draw_count(std::mt19937_64& rng, CountRange r) {
    return std::uniform_int_distribution<std::size_t>(r.lo, r.hi)(rng);
}

}  // namespace

void validate(const TruthConfig& t) {
    const std::size_t p = t.characteristic_names.size();
    if (p == 0) throw SimulationError("truth needs at least one characteristic");
    if (t.b0.size() != p || t.phi.size() != p || t.scale.size() != p || t.flag_probability.size() != p) {
        throw SimulationError("b0, phi, scale and flag_probability must each have one entry per characteristic");
    }
    for (std::size_t j = 0; j < p; ++j) {
        if (!(t.phi[j] >= 0.0)) throw SimulationError("phi truth must be >= 0");
        if (t.structure == VarianceStructure::LabelInvariant ? !(t.scale[j] > 0.0) : !(t.scale[j] >= 0.0)) {
            throw SimulationError("lambda truth must be > 0 and kappa truth >= 0");
        }
        if (!(t.flag_probability[j] > 0.0 && t.flag_probability[j] < 1.0)) {
            throw SimulationError("flag probabilities must lie in (0, 1)");
        }
    }
    if (!(t.sigma >= 0.0) || !std::isfinite(t.mu)) throw SimulationError("need finite mu and sigma >= 0");
    if (t.n_meta == 0) throw SimulationError("n_meta must be >= 1");
    if (t.trials_per_meta.lo == 0 || t.trials_per_meta.lo > t.trials_per_meta.hi) {
        throw SimulationError("trials_per_meta range must satisfy 1 <= lo <= hi");
    }
    if (t.arm_size.lo == 0 || t.arm_size.lo > t.arm_size.hi) {
        throw SimulationError("arm_size range must satisfy 1 <= lo <= hi");
    }
    if (!(t.baseline_lo <= t.baseline_hi)) throw SimulationError("baseline range is empty");
    if (t.trials_per_meta.lo < 2 * t.min_each_side) {
        throw SimulationError("trials_per_meta.lo is too small for min_each_side on both sides");
    }
}

Simulated generate(const TruthConfig& t) {
    validate(t);
    const std::size_t p = t.characteristic_names.size();
    std::mt19937_64 rng(t.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> baseline(t.baseline_lo, t.baseline_hi);

    Simulated sim;
    sim.truth.config = t;
    sim.dataset.characteristic_names = t.characteristic_names;
    for (std::size_t m = 0; m < t.n_meta; ++m) {
        MetaTruth mt;
        mt.meta_id = "m" + std::to_string(m + 1);
        mt.tau_sq = std::exp(t.mu + t.sigma * normal(rng));
        mt.d = std::sqrt(kTruthDVariance) * normal(rng);
        for (std::size_t j = 0; j < p; ++j) mt.b.push_back(t.b0[j] + t.phi[j] * normal(rng));

        const std::size_t n = draw_count(rng, t.trials_per_meta);
        std::vector<std::vector<std::uint8_t>> flags(n, std::vector<std::uint8_t>(p));
        for (std::size_t j = 0; j < p; ++j) {
            std::bernoulli_distribution flip(t.flag_probability[j]);
            for (int attempt = 0;; ++attempt) {
                if (attempt == kMaxFlagRedraws) {
                    throw SimulationError("could not draw flags with min_each_side trials on each side");
                }
                std::size_t with = 0;
                for (auto& f : flags) with += (f[j] = flip(rng) ? 1 : 0);
                if (with >= t.min_each_side && n - with >= t.min_each_side) break;
            }
        }

        MetaAnalysis ma;
        ma.meta_id = mt.meta_id;
        for (std::size_t i = 0; i < n; ++i) {
            const double mean = effect_mean(flags[i], mt.d, mt.b);
            std::vector<double> scale_terms(p);
            for (std::size_t j = 0; j < p; ++j) {
                scale_terms[j] = t.structure == VarianceStructure::Additive ? t.scale[j] * t.scale[j] : t.scale[j];
            }
            const double var = effect_variance(flags[i], mt.tau_sq, t.structure, scale_terms);
            TrialTruth tt;
            tt.meta_id = mt.meta_id;
            tt.trial_id = "t" + std::to_string(i + 1);
            tt.theta = mean + std::sqrt(var) * normal(rng);
            tt.gamma = baseline(rng);

            Trial trial;
            trial.trial_id = tt.trial_id;
            trial.flags = flags[i];
            trial.size_ctrl = static_cast<std::int64_t>(draw_count(rng, t.arm_size));
            trial.size_treat = static_cast<std::int64_t>(draw_count(rng, t.arm_size));
            trial.events_ctrl = std::binomial_distribution<std::int64_t>(trial.size_ctrl, expit(tt.gamma))(rng);
            trial.events_treat =
                std::binomial_distribution<std::int64_t>(trial.size_treat, expit(tt.gamma + tt.theta))(rng);
            ma.trials.push_back(std::move(trial));
            sim.truth.trials.push_back(std::move(tt));
        }
        sim.dataset.meta_analyses.push_back(std::move(ma));
        sim.truth.metas.push_back(std::move(mt));
    }
    validate(sim.dataset);
    return sim;
}

json truth_config_to_json(const TruthConfig& t) {
    json j;
    j["schema"] = kTruthSchema;
    j["structure"] = to_string(t.structure);
    j["characteristic_names"] = t.characteristic_names;
    j["b0"] = t.b0;
    j["phi"] = t.phi;
    j[t.structure == VarianceStructure::Additive ? "kappa" : "lambda"] = t.scale;
    j["flag_probability"] = t.flag_probability;
    j["mu"] = t.mu;
    j["sigma"] = t.sigma;
    j["n_meta"] = t.n_meta;
    j["trials_per_meta"] = {t.trials_per_meta.lo, t.trials_per_meta.hi};
    j["arm_size"] = {t.arm_size.lo, t.arm_size.hi};
    j["baseline_range"] = {t.baseline_lo, t.baseline_hi};
    j["min_each_side"] = t.min_each_side;
    j["seed"] = t.seed;
    return j;
}

TruthConfig truth_config_from_json(const json& j) {
    if (!j.is_object()) throw SimulationError("truth config must be a JSON object");
    if (j.contains("schema") && j.at("schema") != kTruthSchema) {
        throw SimulationError("unsupported truth config schema " + j.at("schema").dump());
    }
    TruthConfig t;
    try {
        t.structure = parse_structure(j.value("structure", std::string("label-invariant")));
        t.characteristic_names = j.value("characteristic_names", t.characteristic_names);
        t.b0 = j.value("b0", t.b0);
        t.phi = j.value("phi", t.phi);
        const char* scale_key = t.structure == VarianceStructure::Additive ? "kappa" : "lambda";
        t.scale = j.value(scale_key, t.scale);
        t.flag_probability = j.value("flag_probability", t.flag_probability);
        t.mu = j.value("mu", t.mu);
        t.sigma = j.value("sigma", t.sigma);
        t.n_meta = j.value("n_meta", t.n_meta);
        const auto range = [&](const char* key, CountRange& r) {
            if (!j.contains(key)) return;
            const auto& v = j.at(key);
            if (v.is_number_unsigned()) {
                r.lo = r.hi = v.get<std::size_t>();
            } else {
                r.lo = v.at(0).get<std::size_t>();
                r.hi = v.at(1).get<std::size_t>();
            }
        };
        range("trials_per_meta", t.trials_per_meta);
        range("arm_size", t.arm_size);
        if (j.contains("baseline_range")) {
            t.baseline_lo = j.at("baseline_range").at(0).get<double>();
            t.baseline_hi = j.at("baseline_range").at(1).get<double>();
        }
        t.min_each_side = j.value("min_each_side", t.min_each_side);
        t.seed = j.value("seed", t.seed);
    } catch (const json::exception& e) {
        throw SimulationError(std::string("malformed truth config: ") + e.what());
    }
    validate(t);
    return t;
}

TruthConfig load_truth_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SimulationError("cannot open truth config '" + path + "'");
    try {
        return truth_config_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw SimulationError("truth config '" + path + "' is not valid JSON: " + e.what());
    }
}

json truth_record_to_json(const TruthRecord& r) {
    json j;
    j["schema"] = kTruthSchema;
    j["config"] = truth_config_to_json(r.config);
    json metas = json::array();
    for (const auto& m : r.metas) {
        metas.push_back({{"meta_id", m.meta_id}, {"tau_sq", m.tau_sq}, {"d", m.d}, {"b", m.b}});
    }
    j["meta_analyses"] = metas;
    json trials = json::array();
    for (const auto& t : r.trials) {
        trials.push_back({{"meta_id", t.meta_id}, {"trial_id", t.trial_id}, {"gamma", t.gamma}, {"theta", t.theta}});
    }
    j["trials"] = trials;
    return j;
}

std::string truth_sidecar_path(const std::string& dataset_path) {
    std::filesystem::path p(dataset_path);
    p.replace_extension(".truth.json");
    return p.string();
}

std::string write_simulation(const Simulated& sim, const std::string& dataset_path) {
    save_dataset(sim.dataset, dataset_path);
    const std::string sidecar = truth_sidecar_path(dataset_path);
    std::ofstream out(sidecar, std::ios::binary);
    if (!out) throw SimulationError("cannot write truth sidecar '" + sidecar + "'");
    out << truth_record_to_json(sim.truth).dump(2) << '\n';
    return sidecar;
}

const CoverageRow& CoverageTable::row(const std::string& name) const {
    for (const auto& r : rows) {
        if (r.name == name) return r;
    }
    throw SimulationError("no coverage row named '" + name + "'");
}

CoverageTable recovery_experiment(const TruthConfig& truth, const ModelSpec& spec, const McmcConfig& mcmc,
                                  std::size_t replicates) {
    if (replicates == 0) throw SimulationError("replicates must be >= 1");
    validate(truth);
    const std::size_t p = truth.characteristic_names.size();
    const bool additive = spec.structure == VarianceStructure::Additive;

    CoverageTable table;
    const auto add_row = [&](std::string name, double value) {
        CoverageRow r;
        r.name = std::move(name);
        r.truth = value;
        table.rows.push_back(std::move(r));
    };
    for (std::size_t j = 0; j < p; ++j) {
        const auto& ch = truth.characteristic_names[j];
        add_row("b0[" + ch + "]", truth.b0[j]);
        add_row("phi[" + ch + "]", truth.phi[j]);
        add_row(std::string(additive ? "kappa[" : "lambda[") + ch + "]", truth.scale[j]);
    }
    if (spec.tau_hierarchy) {
        add_row("mu", truth.mu);
        add_row("sigma", truth.sigma);
    }

    for (std::size_t r = 0; r < replicates; ++r) {
        ReplicateOutcome out;
        TruthConfig t = truth;
        t.seed = out.data_seed = derive_seed(truth.seed, r);
        McmcConfig mc = mcmc;
        mc.seed = out.mcmc_seed = derive_seed(mcmc.seed, r);
        mc.chain_seeds.clear();
        try {
            const Simulated sim = generate(t);
            const Model model(spec, sim.dataset);
            const PosteriorDraws draws = run(model, mc);
            const auto quantities = reported_quantities(draws, model);
            std::vector<std::string> names;
            std::vector<std::vector<std::vector<double>>> series;
            for (const auto& q : quantities) {
                const std::string name = q.characteristic.empty() ? q.name : q.name + "[" + q.characteristic + "]";
                names.push_back(name);
                series.push_back(q.chains);
            }
            for (auto& row : table.rows) {
                for (std::size_t i = 0; i < names.size(); ++i) {
                    if (names[i] != row.name) continue;
                    std::vector<double> pooled;
                    for (const auto& c : series[i]) pooled.insert(pooled.end(), c.begin(), c.end());
                    const Summary s = summarize_param(pooled);
                    ++row.fits;
                    if (s.ci_lo <= row.truth && row.truth <= s.ci_hi) ++row.covered;
                    row.medians.push_back(s.median);
                }
            }
            if (mc.n_chains >= 2) {
                const auto conv = convergence_report(names, series);
                out.converged = conv.converged;
                out.max_rhat = conv.max_rhat;
            } else {
                out.converged = true;
                out.max_rhat = 1.0;
            }
            out.ok = true;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        table.replicates.push_back(std::move(out));
    }
    for (auto& row : table.rows) {
        if (row.fits == 0) continue;
        row.coverage = static_cast<double>(row.covered) / static_cast<double>(row.fits);
        row.median_of_medians = stats::median(row.medians);
    }
    return table;
}

}  // namespace metaepi
