// Acceptance criteria: one PASS/FAIL line each. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "metaepi/commands.hpp"
#include "metaepi/diagnostics.hpp"
#include "metaepi/mcmc.hpp"
#include "metaepi/oracle.hpp"
#include "metaepi/priors.hpp"
#include "metaepi/report.hpp"
#include "metaepi/simulate.hpp"
#include "metaepi/stats.hpp"
#include "metaepi/summaries.hpp"
#include "support.hpp"

using namespace metaepi;

namespace {

// Pinned tolerances.
constexpr double kQuantileTol = 0.01;
constexpr double kMcErrorMultiple = 3.0;
constexpr double kOracleCiTol = 0.02;
constexpr double kKappaNearZero = 0.05;
constexpr std::size_t kAsymmetrySeeds = 10;
constexpr std::size_t kAsymmetryRequired = 8;
constexpr std::size_t kRecoveryReplicates = 20;
constexpr double kCoverageLo = 0.75;
constexpr double kCoverageHi = 1.0;
constexpr double kDicIdentityTol = 0.0;
constexpr double kPredictiveMedianTol = 0.005;
constexpr double kPredictiveLoTol = 0.0005;
constexpr double kPredictiveHiTol = 0.05;
constexpr double kCombinedMedianTol = 0.005;
constexpr double kCombinedRorTol = 0.005;
constexpr double kRhatSame = 1.01;
constexpr double kRhatShifted = 1.5;
constexpr double kMinStateShare = 0.01;
constexpr std::size_t kMinSwitches = 10;

const std::string kData = METAEPI_DATA_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double median_mc_error(const PosteriorDraws& d, std::size_t k) { return mc_error_quantile(d.pooled(k), 0.5); }

// 1. Truncated log-normal prior quantiles.
Outcome prior5_anchor() {
    const auto q = prior_quantiles(TruncatedLogNormalPrior{0.0, 1.0, 1.0}, std::vector<double>{0.025, 0.5, 0.975});
    const double expected[3] = {1.03, 1.96, 9.40};
    bool ok = true;
    for (int i = 0; i < 3; ++i) ok = ok && std::abs(q[i] - expected[i]) <= kQuantileTol;
    return {ok, fmt::format("quantiles ({:.4f}, {:.4f}, {:.4f}) vs (1.03, 1.96, 9.40) +- {}", q[0], q[1], q[2],
                            kQuantileTol)};
}

// 2. Normal-normal conjugate posterior of d with tau fixed.
Outcome conjugate_oracle() {
    const auto c = testsupport::conjugate_case();
    McmcConfig cfg;
    cfg.n_chains = 3;
    cfg.burn_in = 2000;
    cfg.iterations = 20000;
    cfg.seed = 2024;
    RunOptions opt;
    opt.free = c.free;
    opt.update_indicators = false;
    opt.initial = {c.start, c.start, c.start};
    const auto draws = run(c.model, cfg, opt);
    const auto d = draws.pooled(c.model.layout().d(0));
    const double mean = stats::mean(d);
    const double sd = stats::sd(d);
    const double mean_err = mc_error(d);
    const double sd_err = mc_error_sd(d);
    const bool ok = std::abs(mean - c.post_mean) <= kMcErrorMultiple * mean_err &&
                    std::abs(sd - c.post_sd) <= kMcErrorMultiple * sd_err;
    return {ok, fmt::format("mean {:.5f} vs {:.5f} (MC err {:.5f}), sd {:.5f} vs {:.5f} (MC err {:.5f})", mean,
                            c.post_mean, mean_err, sd, c.post_sd, sd_err)};
}

// 3. Two-coordinate grid oracle against MCMC on a 2-MA, 8-trial fixture.
Outcome grid_oracle() {
    const Model model(make_spec(VarianceStructure::LabelInvariant, {0}, false), testsupport::small_grid_dataset());
    const auto& L = model.layout();
    auto base = model.initial_state(0, 1);
    base.indicators[L.z_phi(0)] = 1;
    for (std::size_t m = 0; m < model.meta_count(); ++m) base.values[L.tau(m)] = 0.3;
    base.values[L.scale(0)] = 1.5;
    base.values[L.phi_var(0)] = 0.1;
    base.values[L.b0(0)] = -0.1;
    const std::size_t free_k[2] = {L.d(0), L.b_offset(0, 0)};

    McmcConfig cfg;
    cfg.n_chains = 3;
    cfg.burn_in = 2000;
    cfg.iterations = 20000;
    cfg.seed = 303;
    RunOptions opt;
    opt.free.assign(model.dimension(), false);
    for (auto k : free_k) opt.free[k] = true;
    opt.update_indicators = false;
    opt.initial = {base, base, base};
    const auto draws = run(model, cfg, opt);

    OracleConfig oc;
    oc.base = base;
    for (auto k : free_k) {
        const auto x = draws.pooled(k);
        const double m = stats::mean(x), s = stats::sd(x);
        oc.axes.push_back({k, m - 9.0 * s, m + 9.0 * s, 301});
    }
    const auto oracle = oracle_posterior(model, oc);

    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < 2; ++i) {
        const auto s = summarize_param(draws.pooled(free_k[i]));
        const double err = median_mc_error(draws, free_k[i]);
        const double dm = std::abs(s.median - oracle[i].median);
        const double dlo = std::abs(s.ci_lo - oracle[i].q025);
        const double dhi = std::abs(s.ci_hi - oracle[i].q975);
        ok = ok && dm <= kMcErrorMultiple * err && dlo <= kOracleCiTol && dhi <= kOracleCiTol;
        detail += fmt::format("{}{}: median {:.4f} vs {:.4f} (3x MC err {:.4f}), CrI ({:.3f}, {:.3f}) vs ({:.3f}, {:.3f})",
                              i ? "; " : "", model.parameter_name(free_k[i]), s.median, oracle[i].median, 3 * err,
                              s.ci_lo, s.ci_hi, oracle[i].q025, oracle[i].q975);
    }
    return {ok, detail};
}

// 4. Relabelling negates b0 and inverts lambda.
Outcome label_inversion() {
    TruthConfig t;
    t.n_meta = 30;
    t.b0 = {-0.16};
    t.phi = {0.2};
    t.scale = {1.88};
    t.mu = -2.0;
    t.sigma = 0.4;
    t.trials_per_meta = {8, 14};
    t.arm_size = {100, 300};
    t.seed = 404;
    const auto sim = generate(t);
    const auto spec = make_spec(VarianceStructure::LabelInvariant, {0}, true);
    McmcConfig cfg;
    cfg.burn_in = 5000;
    cfg.iterations = 20000;
    cfg.seed = 4;

    const Model a(spec, sim.dataset);
    const Model b(spec, relabel(sim.dataset, 0));
    const auto da = run(a, cfg);
    const auto db = run(b, cfg);
    const auto& L = a.layout();
    const double b0a = summarize_param(da.pooled(L.b0(0))).median;
    const double b0b = summarize_param(db.pooled(L.b0(0))).median;
    const double b0_err = std::max(median_mc_error(da, L.b0(0)), median_mc_error(db, L.b0(0)));
    const double la = summarize_param(da.pooled(L.scale(0))).median;
    const double lb = summarize_param(db.pooled(L.scale(0))).median;
    // Error of 1 / median(lambda) by the delta method.
    const double lam_err =
        std::max(median_mc_error(da, L.scale(0)) / (la * la), median_mc_error(db, L.scale(0)));
    const bool ok = std::abs(b0b + b0a) <= kMcErrorMultiple * b0_err &&
                    std::abs(lb - 1.0 / la) <= kMcErrorMultiple * lam_err;
    return {ok, fmt::format("b0 {:.4f} / relabelled {:.4f} (3x MC err {:.4f}); lambda {:.4f}, 1/lambda {:.4f} / "
                            "relabelled {:.4f} (3x MC err {:.4f})",
                            b0a, b0b, 3 * b0_err, la, 1.0 / la, lb, 3 * lam_err)};
}

// 5. Flag-0 trials more heterogeneous: additive kappa collapses to 0 while
// label-invariant lambda sits below 1.
Outcome additive_asymmetry() {
    std::size_t kappa_ok = 0, lambda_ok = 0;
    std::string per_seed;
    for (std::size_t s = 0; s < kAsymmetrySeeds; ++s) {
        TruthConfig t;
        t.n_meta = 30;
        t.b0 = {-0.1};
        t.phi = {0.1};
        t.scale = {0.4};
        t.mu = -1.6;
        t.sigma = 0.3;
        t.trials_per_meta = {8, 14};
        t.arm_size = {100, 300};
        t.seed = derive_seed(505, s);
        const auto sim = generate(t);
        McmcConfig cfg;
        cfg.burn_in = 3000;
        cfg.iterations = 6000;
        cfg.seed = derive_seed(55, s);
        const auto add = fit_dataset(sim.dataset, make_spec(VarianceStructure::Additive, {0}, true), cfg);
        const auto li = fit_dataset(sim.dataset, make_spec(VarianceStructure::LabelInvariant, {0}, true), cfg);
        double kappa_median = NAN, lambda_hi = NAN;
        for (const auto& r : add.report.rows) {
            if (r.label == "kappa") kappa_median = r.summary->median;
        }
        for (const auto& r : li.report.rows) {
            if (r.label == "lambda") lambda_hi = r.summary->ci_hi;
        }
        kappa_ok += kappa_median <= kKappaNearZero;
        lambda_ok += lambda_hi < 1.0;
        per_seed += fmt::format(" ({:.3f}, {:.2f})", kappa_median, lambda_hi);
    }
    const bool ok = kappa_ok >= kAsymmetryRequired && lambda_ok >= kAsymmetryRequired;
    return {ok, fmt::format("kappa median <= {} in {}/{}, lambda 97.5% < 1 in {}/{}; per seed (kappa, lambda_hi):{}",
                            kKappaNearZero, kappa_ok, kAsymmetrySeeds, lambda_ok, kAsymmetrySeeds, per_seed)};
}

// 6. Coverage of b0 and lambda over simulated replicates.
Outcome recovery() {
    TruthConfig t;
    t.n_meta = 30;
    t.b0 = {-0.16};
    t.phi = {0.2};
    t.scale = {1.88};
    t.seed = 606;
    McmcConfig cfg;
    cfg.burn_in = 3000;
    cfg.iterations = 8000;
    cfg.seed = 66;
    const auto table =
        recovery_experiment(t, make_spec(VarianceStructure::LabelInvariant, {0}, true), cfg, kRecoveryReplicates);
    const auto& b0 = table.row("b0[x1]");
    const auto& lam = table.row("lambda[x1]");
    std::size_t failed = 0, unconverged = 0;
    for (const auto& r : table.replicates) {
        failed += !r.ok;
        unconverged += r.ok && !r.converged;
    }
    const auto in_band = [](double c) { return c >= kCoverageLo && c <= kCoverageHi; };
    const bool ok = failed == 0 && in_band(b0.coverage) && in_band(lam.coverage);
    return {ok, fmt::format("b0 coverage {}/{} = {:.2f}, lambda coverage {}/{} = {:.2f} (band [{}, {}]); "
                            "{} failed, {} above the R-hat threshold",
                            b0.covered, b0.fits, b0.coverage, lam.covered, lam.fits, lam.coverage, kCoverageLo,
                            kCoverageHi, failed, unconverged)};
}

// 7. DIC identity, degenerate input and the arithmetic anchor.
Outcome dic_identity() {
    const Model model(make_spec(VarianceStructure::LabelInvariant, {0}, true), testsupport::small_grid_dataset());
    McmcConfig cfg;
    cfg.burn_in = 500;
    cfg.iterations = 2000;
    const auto f = dic(run(model, cfg), model);
    const bool identity = std::abs(f.dic - (f.d_res + f.p_d)) <= kDicIdentityTol;

    const auto s = model.initial_state(0, 1);
    std::vector<double> fitted(model.arm_count());
    model.fitted_probabilities(s, fitted);
    PosteriorDraws one;
    one.draws_per_chain = 1;
    ChainDraws c;
    c.deviance = {residual_deviance(fitted, model.arm_events(), model.arm_sizes())};
    c.fitted_sum = fitted;
    one.chains = {c};
    const auto g = dic(one, model);
    const auto anchor = fit_statistics(4183.0, 4183.0 - 2838.0);
    const bool ok = identity && g.p_d == 0.0 && anchor.dic == 7021.0 && anchor.p_d == 2838.0;
    return {ok, fmt::format("DIC {:.4f} = D_res {:.4f} + p_D {:.4f}; single-draw p_D {}; anchor DIC {}", f.dic,
                            f.d_res, f.p_d, g.p_d, anchor.dic)};
}

// 8. Fitted log-normal predictive distribution.
Outcome predictive_tau_anchor() {
    const auto p = fitted_lognormal(-2.94, 1.69);
    const bool ok = std::abs(p.median - 0.05) <= kPredictiveMedianTol && std::abs(p.range_lo - 0.002) <= kPredictiveLoTol &&
                    std::abs(p.range_hi - 1.42) <= kPredictiveHiTol;
    return {ok, fmt::format("median {:.4f}, 95% range ({:.4f}, {:.3f}) vs 0.05, (0.002, 1.42)", p.median, p.range_lo,
                            p.range_hi)};
}

// 9. Combined bias over three independent characteristics.
Outcome combined_bias_anchor() {
    std::mt19937_64 rng(909);
    const double med[3] = {-0.05, -0.04, -0.09};
    const double sd[3] = {0.05, 0.04, 0.04};
    std::vector<std::vector<double>> b(3, std::vector<double>(200000));
    for (int j = 0; j < 3; ++j) {
        std::normal_distribution<double> z(med[j], sd[j]);
        for (auto& v : b[j]) v = z(rng);
    }
    const std::vector<std::size_t> all{0, 1, 2};
    const auto s = combined_bias(b, all);
    const double r = std::exp(s.median);
    const bool ok = std::abs(s.median + 0.18) <= kCombinedMedianTol && std::abs(r - 0.84) <= kCombinedRorTol;
    return {ok, fmt::format("combined median {:.4f} (ROR {:.4f}) vs -0.18 (0.84)", s.median, r)};
}

// 10. Every command reproduces byte for byte.
Outcome determinism() {
    testsupport::TempDir dir;
    McmcConfig mc;
    mc.burn_in = 300;
    mc.iterations = 600;
    mc.seed = 10;
    std::vector<std::string> mismatched;
    std::size_t compared = 0;
    const auto check = [&](const std::string& what, const std::string& a, const std::string& b) {
        ++compared;
        if (a != b || a.empty()) mismatched.push_back(what);
    };
    std::string stdout_[2];
    for (int run = 0; run < 2; ++run) {
        const std::string tag = std::to_string(run);
        std::ostringstream out, err;
        SimulateArgs sa{kData + "/truth_fixture.json", dir.file("sim" + tag + ".csv"), 3};
        cmd_simulate(sa, out, err);
        const std::string data = dir.file("sim0.csv");
        cmd_summarize(data, out, err);
        FitArgs fa;
        fa.dataset_path = data;
        fa.mcmc = mc;
        fa.output = dir.file("fit" + tag + ".json");
        fa.dump_draws = dir.file("draws" + tag);
        fa.allow_unconverged = true;
        cmd_fit(fa, out, err);
        cmd_report(fa.output, out, err);
        CompareArgs ca;
        ca.dataset_path = data;
        ca.mcmc = mc;
        ca.output = dir.file("cmp" + tag + ".json");
        cmd_compare(ca, out, err);
        SensitivityArgs se;
        se.dataset_path = data;
        se.priors_path = kData + "/lambda_priors.json";
        se.mcmc = mc;
        se.output = dir.file("sens" + tag + ".json");
        se.table = dir.file("forest" + tag + ".csv");
        cmd_sensitivity(se, out, err);
        // The simulate line names its own output files.
        std::string text = out.str();
        for (auto pos = text.find("sim" + tag + "."); pos != std::string::npos; pos = text.find("sim" + tag + ".")) {
            text.replace(pos, 4, "simN");
        }
        stdout_[run] = text + err.str();
    }
    const auto file = [&](const std::string& name) { return testsupport::read_file(dir.file(name)); };
    check("stdout", stdout_[0], stdout_[1]);
    check("simulated dataset", file("sim0.csv"), file("sim1.csv"));
    check("truth sidecar", file("sim0.truth.json"), file("sim1.truth.json"));
    check("fit report", file("fit0.json"), file("fit1.json"));
    for (int c = 1; c <= 3; ++c) {
        const std::string n = ".chain" + std::to_string(c) + ".csv";
        check("draws" + n, file("draws0" + n), file("draws1" + n));
    }
    check("compare report", file("cmp0.json"), file("cmp1.json"));
    check("sensitivity report", file("sens0.json"), file("sens1.json"));
    check("forest table", file("forest0.csv"), file("forest1.csv"));
    std::string bad;
    for (const auto& m : mismatched) bad += " " + m;
    return {mismatched.empty(), fmt::format("{} outputs compared across two runs{}{}", compared,
                                            mismatched.empty() ? "" : "; differ or empty:", bad)};
}

// 11. R-hat behaviour and mixing of a mixture indicator.
Outcome convergence_machinery() {
    std::mt19937_64 rng(1111);
    std::normal_distribution<double> z;
    std::vector<std::vector<double>> same(2, std::vector<double>(10000)), shifted(2, std::vector<double>(10000));
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 10000; ++i) {
            same[c][i] = z(rng);
            shifted[c][i] = z(rng) + 5.0 * c;
        }
    }
    const double r_same = rhat(same).value;
    const double r_shift = rhat(shifted).value;

    // Additive fit where the extra flagged-trial heterogeneity is borderline,
    // so the posterior puts weight on both states of z_kappa. Under the
    // inverse-gamma(0.001, 0.001) slab that window is narrow: on this
    // dataset kappa 0.3 leaves z_kappa almost always off and 0.5 always on.
    TruthConfig t;
    t.structure = VarianceStructure::Additive;
    t.n_meta = 25;
    t.b0 = {-0.1};
    t.phi = {0.1};
    t.scale = {0.35};
    t.mu = -3.0;
    t.sigma = 0.3;
    t.trials_per_meta = {8, 12};
    t.arm_size = {100, 250};
    t.seed = 1111;
    const auto sim = generate(t);
    const Model model(make_spec(VarianceStructure::Additive, {0}, true), sim.dataset);
    McmcConfig cfg;
    cfg.burn_in = 3000;
    cfg.iterations = 10000;
    cfg.seed = 11;
    const auto draws = run(model, cfg);
    const std::size_t zk = model.layout().z_kappa(0);
    std::size_t switches = 0, on = 0, total = 0;
    for (const auto& c : draws.chains) {
        const auto& zz = c.indicators[zk];
        for (std::size_t i = 0; i < zz.size(); ++i) {
            on += zz[i];
            switches += i > 0 && zz[i] != zz[i - 1];
        }
        total += zz.size();
    }
    const double share = static_cast<double>(on) / static_cast<double>(total);
    const bool ok = r_same < kRhatSame && r_shift > kRhatShifted && share >= kMinStateShare &&
                    1.0 - share >= kMinStateShare && switches >= kMinSwitches;
    return {ok, fmt::format("R-hat same {:.4f} (< {}), shifted {:.3f} (> {}); z_kappa on {:.3f} of draws, {} switches",
                            r_same, kRhatSame, r_shift, kRhatShifted, share, switches)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"prior-5 quantile anchor", prior5_anchor},
        {"conjugate oracle", conjugate_oracle},
        {"grid-oracle equivalence", grid_oracle},
        {"label-inversion property", label_inversion},
        {"additive-model asymmetry", additive_asymmetry},
        {"parameter recovery", recovery},
        {"DIC identity and anchor", dic_identity},
        {"predictive tau consistency", predictive_tau_anchor},
        {"multivariable combined bias", combined_bias_anchor},
        {"CLI determinism", determinism},
        {"convergence machinery", convergence_machinery},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::strtoul(argv[i], nullptr, 10));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(i + 1)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
