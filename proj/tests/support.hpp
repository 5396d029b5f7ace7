#pragma once

// Fixture builders and independent reference computations for the tests.
// The reference densities are coded from the model definition directly and
// share no code with the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "metaepi/dataset.hpp"
#include "metaepi/model.hpp"

namespace testsupport {

using metaepi::Dataset;
using metaepi::MetaAnalysis;
using metaepi::Trial;

inline Trial trial(std::string id, std::int64_t et, std::int64_t nt, std::int64_t ec, std::int64_t nc,
                   std::vector<std::uint8_t> flags) {
    Trial t;
    t.trial_id = std::move(id);
    t.events_treat = et;
    t.size_treat = nt;
    t.events_ctrl = ec;
    t.size_ctrl = nc;
    t.flags = std::move(flags);
    return t;
}

// One meta-analysis per entry of `flag_sets`; trial counts are a simple
// deterministic function of the position so arms differ.
inline Dataset flagged_dataset(const std::vector<std::vector<std::vector<std::uint8_t>>>& flag_sets,
                               std::vector<std::string> names = {"x"}) {
    Dataset ds;
    ds.characteristic_names = std::move(names);
    for (std::size_t m = 0; m < flag_sets.size(); ++m) {
        MetaAnalysis ma;
        ma.meta_id = "m" + std::to_string(m + 1);
        for (std::size_t i = 0; i < flag_sets[m].size(); ++i) {
            const auto k = static_cast<std::int64_t>(3 * m + i);
            ma.trials.push_back(trial("t" + std::to_string(i + 1), 10 + (k * 7) % 13, 60 + (k * 11) % 40,
                                      14 + (k * 5) % 11, 60 + (k * 13) % 40, flag_sets[m][i]));
        }
        ds.meta_analyses.push_back(std::move(ma));
    }
    return ds;
}

// Binomial log-pmf with the coefficient built as a product of ratios.
inline double ref_binom_logpmf(std::int64_t k, std::int64_t n, double p) {
    double lc = 0.0;
    for (std::int64_t i = 1; i <= k; ++i) lc += std::log(static_cast<double>(n - k + i) / static_cast<double>(i));
    double out = lc;
    if (k > 0) out += static_cast<double>(k) * std::log(p);
    if (n - k > 0) out += static_cast<double>(n - k) * std::log1p(-p);
    return out;
}

inline double ref_expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double ref_normal_logpdf(double x, double mean, double var) {
    return -0.5 * std::log(2.0 * M_PI * var) - (x - mean) * (x - mean) / (2.0 * var);
}

inline double ref_invgamma_logpdf(double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

inline double ref_lognormal_logpdf(double x, double ml, double sl) {
    return ref_normal_logpdf(std::log(x), ml, sl * sl) - std::log(x);
}

// Log-likelihood summed arm by arm.
inline double ref_log_likelihood(const metaepi::Model& model, const metaepi::ParameterState& s) {
    const auto& L = model.layout();
    double ll = 0.0;
    std::size_t t = 0;
    for (const auto& ma : model.dataset().meta_analyses) {
        for (const auto& tr : ma.trials) {
            const double g = s.values[L.gamma(t)];
            const double th = s.values[L.theta(t)];
            ll += ref_binom_logpmf(tr.events_ctrl, tr.size_ctrl, ref_expit(g));
            ll += ref_binom_logpmf(tr.events_treat, tr.size_treat, ref_expit(g + th));
            ++t;
        }
    }
    return ll;
}

// Joint log prior with the default priors (vague normals, inverse-gamma
// slabs with the log-normal pseudo-prior while z = 0, U(0, 1) for p0,
// log-normal(0, 1) for lambda, U(0, 2) for sigma or per-meta tau), written
// term by term from the model definition.
inline double ref_log_prior(const metaepi::Model& model, const metaepi::ParameterState& s) {
    const auto& L = model.layout();
    const std::size_t p = model.characteristic_count();
    const bool additive = L.additive();
    const auto& x = s.values;
    double lp = 0.0;
    auto slab = [&](std::size_t zi, double v) {
        return s.indicators[zi] ? ref_invgamma_logpdf(v, 0.001, 0.001)
                                : ref_lognormal_logpdf(v, s.pseudo_meanlog[zi], s.pseudo_sdlog[zi]);
    };
    for (std::size_t j = 0; j < p; ++j) {
        lp += ref_normal_logpdf(x[L.b0(j)], 0.0, 1000.0);
        lp += slab(L.z_phi(j), x[L.phi_var(j)]);
        for (std::size_t m = 0; m < model.meta_count(); ++m) {
            lp += ref_normal_logpdf(x[L.b_offset(m, j)], 0.0, x[L.phi_var(j)]);
        }
        const double p0 = x[L.p0(j)];
        lp += s.indicators[L.z_phi(j)] ? std::log(1.0 - p0) : std::log(p0);
        if (additive) {
            lp += slab(L.z_kappa(j), x[L.scale(j)]);
            lp += s.indicators[L.z_kappa(j)] ? std::log(1.0 - p0) : std::log(p0);
        } else {
            lp += ref_lognormal_logpdf(x[L.scale(j)], 0.0, 1.0);
        }
    }
    if (L.tau_hierarchy()) {
        lp += ref_normal_logpdf(x[L.mu()], 0.0, 1000.0);
        lp += -std::log(2.0);
    }
    std::size_t t = 0;
    for (std::size_t m = 0; m < model.meta_count(); ++m) {
        const double d = x[L.d(m)];
        const double tau = x[L.tau(m)];
        lp += ref_normal_logpdf(d, 0.0, 1000.0);
        if (L.tau_hierarchy()) {
            const double sg = x[L.sigma()];
            // density of tau from log(tau^2) ~ N(mu, sigma^2)
            lp += ref_normal_logpdf(std::log(tau * tau), x[L.mu()], sg * sg) + std::log(2.0 / tau);
        } else {
            lp += -std::log(2.0);
        }
        for (const auto& tr : model.dataset().meta_analyses[m].trials) {
            double mean = d;
            double var = tau * tau;
            double prod = 1.0;
            for (std::size_t j = 0; j < p; ++j) {
                if (!tr.flags[model.spec().characteristics[j]]) continue;
                mean += x[L.b0(j)] + (s.indicators[L.z_phi(j)] ? x[L.b_offset(m, j)] : 0.0);
                if (additive) {
                    var += s.indicators[L.z_kappa(j)] ? x[L.scale(j)] : 0.0;
                } else {
                    prod *= x[L.scale(j)];
                }
            }
            if (!additive) var *= prod;
            lp += ref_normal_logpdf(x[L.gamma(t)], 0.0, 1000.0);
            lp += ref_normal_logpdf(x[L.theta(t)], mean, var);
            ++t;
        }
    }
    return lp;
}

// A random in-support state.
inline metaepi::ParameterState random_state(const metaepi::Model& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto s = model.initial_state(0, 1);
    const auto& L = model.layout();
    for (std::size_t k = 0; k < model.dimension(); ++k) {
        switch (L.transform(k)) {
            case metaepi::Transform::Identity:
                s.values[k] = -1.5 + 3.0 * u(rng);
                break;
            case metaepi::Transform::Log:
                s.values[k] = 0.05 + 1.5 * u(rng);
                break;
            case metaepi::Transform::Logit:
                s.values[k] = 0.05 + 0.9 * u(rng);
                break;
        }
    }
    for (auto& z : s.indicators) z = u(rng) < 0.5 ? 0 : 1;
    return s;
}

// One meta-analysis, no flagged trial, tau and every theta held fixed: the
// conditional posterior of d is normal-normal conjugate.
struct ConjugateCase {
    metaepi::Model model;
    metaepi::ParameterState start;
    std::vector<bool> free;
    double post_mean = 0.0;
    double post_sd = 0.0;
};

inline ConjugateCase conjugate_case() {
    Dataset ds;
    ds.characteristic_names = {"x"};
    MetaAnalysis ma{"m1", {}};
    const int events[6][2] = {{12, 20}, {8, 15}, {30, 41}, {5, 9}, {18, 17}, {22, 35}};
    for (int i = 0; i < 6; ++i) {
        ma.trials.push_back(trial("t" + std::to_string(i + 1), events[i][0], 100, events[i][1], 100, {0}));
    }
    ds.meta_analyses.push_back(ma);
    auto spec = metaepi::make_spec(metaepi::VarianceStructure::LabelInvariant, {0}, false);
    spec.require_all_informative = false;
    metaepi::Model model(spec, ds);
    auto start = model.initial_state(0, 1);
    const auto& L = model.layout();
    const double tau = 0.3;
    start.values[L.tau(0)] = tau;
    std::vector<bool> free(model.dimension(), false);
    free[L.d(0)] = true;
    double prec = 1.0 / 1000.0;
    double num = 0.0;
    for (std::size_t t = 0; t < model.trial_count(); ++t) {
        prec += 1.0 / (tau * tau);
        num += start.values[L.theta(t)] / (tau * tau);
    }
    return {std::move(model), start, free, num / prec, std::sqrt(1.0 / prec)};
}

// Two meta-analyses of four trials (two flagged in each), used with d and
// b0 free and everything else fixed.
inline Dataset small_grid_dataset() {
    Dataset ds;
    ds.characteristic_names = {"x"};
    ds.meta_analyses.push_back({"m1",
                                {trial("t1", 15, 80, 20, 80, {1}), trial("t2", 9, 60, 16, 62, {1}),
                                 trial("t3", 21, 90, 25, 88, {0}), trial("t4", 12, 70, 14, 71, {0})}});
    ds.meta_analyses.push_back({"m2",
                                {trial("t1", 30, 120, 41, 118, {1}), trial("t2", 7, 50, 12, 52, {0}),
                                 trial("t3", 18, 95, 29, 97, {1}), trial("t4", 25, 110, 27, 105, {0})}});
    return ds;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("metaepi_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace testsupport
