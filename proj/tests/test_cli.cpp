#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "metaepi/commands.hpp"
#include "metaepi/simulate.hpp"
#include "support.hpp"

using namespace metaepi;

namespace {

const std::string kData = METAEPI_DATA_DIR;

McmcConfig quick_mcmc(std::uint64_t seed = 7) {
    McmcConfig mc;
    mc.burn_in = 300;
    mc.iterations = 500;
    mc.seed = seed;
    return mc;
}

FitArgs fit_args(const std::string& output) {
    FitArgs a;
    a.dataset_path = kData + "/fixture.csv";
    a.mcmc = quick_mcmc();
    a.output = output;
    a.allow_unconverged = true;
    return a;
}

}  // namespace

TEST(CmdFit, SameSeedGivesIdenticalReports) {
    testsupport::TempDir dir;
    std::ostringstream out1, out2, err;
    ASSERT_EQ(cmd_fit(fit_args(dir.file("a.json")), out1, err), kExitOk) << err.str();
    ASSERT_EQ(cmd_fit(fit_args(dir.file("b.json")), out2, err), kExitOk) << err.str();
    EXPECT_EQ(testsupport::read_file(dir.file("a.json")), testsupport::read_file(dir.file("b.json")));
    EXPECT_EQ(out1.str(), out2.str());

    auto other = fit_args(dir.file("c.json"));
    other.mcmc.seed = 8;
    std::ostringstream out3;
    ASSERT_EQ(cmd_fit(other, out3, err), kExitOk);
    EXPECT_NE(testsupport::read_file(dir.file("c.json")), testsupport::read_file(dir.file("a.json")));
}

TEST(CmdFit, TableRowsFollowStructure) {
    for (auto structure : {VarianceStructure::LabelInvariant, VarianceStructure::Additive}) {
        auto a = fit_args("");
        a.spec.structure = structure;
        std::ostringstream out, err;
        ASSERT_EQ(cmd_fit(a, out, err), kExitOk) << err.str();
        const auto text = out.str();
        for (const char* row : {"b0[", "ROR[", "phi[", "lambda[", "kappa[", "Predictive tau^2_new", "D_res", "p_D",
                                "DIC"}) {
            EXPECT_NE(text.find(row), std::string::npos) << row;
        }
        // The other structure's scale row is marked n/a.
        const std::string absent = structure == VarianceStructure::Additive ? "lambda[" : "kappa[";
        const auto pos = text.find(absent);
        const auto eol = text.find('\n', pos);
        EXPECT_NE(text.substr(pos, eol - pos).find("n/a"), std::string::npos);
    }
}

TEST(CmdFit, UnconvergedExitCode) {
    auto a = fit_args("");
    a.allow_unconverged = false;
    a.mcmc.burn_in = 10;
    a.mcmc.iterations = 60;
    a.rhat_threshold = 1.0000001;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_fit(a, out, err), kExitUnconverged);
    EXPECT_NE(err.str().find("not converged"), std::string::npos);
    a.allow_unconverged = true;
    EXPECT_EQ(cmd_fit(a, out, err), kExitOk);
}

TEST(CmdFit, ErrorsCarryContext) {
    auto a = fit_args("");
    a.dataset_path = kData + "/does_not_exist.csv";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_fit(a, out, err), kExitError);
    EXPECT_NE(err.str().find("does_not_exist.csv"), std::string::npos);

    testsupport::TempDir dir;
    {
        std::ofstream f(dir.file("bad.csv"));
        f << "meta_id,trial_id,events_treat,size_treat,events_ctrl,size_ctrl,x\nm1,t1,9,5,1,5,1\n";
    }
    a.dataset_path = dir.file("bad.csv");
    std::ostringstream err2;
    EXPECT_EQ(cmd_fit(a, out, err2), kExitError);
    EXPECT_NE(err2.str().find("row"), std::string::npos);
}

TEST(CmdFit, ReportRoundTripAndRerender) {
    testsupport::TempDir dir;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_fit(fit_args(dir.file("r.json")), out, err), kExitOk);
    const auto j = nlohmann::json::parse(testsupport::read_file(dir.file("r.json")));
    EXPECT_EQ(j["schema"], kReportSchema);
    EXPECT_EQ(report_to_json(report_from_json(j)), j);
    std::ostringstream rendered;
    ASSERT_EQ(cmd_report(dir.file("r.json"), rendered, err), kExitOk);
    // The display table of fit and of report agree from the header on.
    const auto fit_text = out.str();
    EXPECT_NE(fit_text.find(rendered.str().substr(0, rendered.str().find("Convergence"))), std::string::npos);
}

TEST(CmdFit, DumpDrawsMatchReport) {
    testsupport::TempDir dir;
    auto a = fit_args("");
    a.dump_draws = dir.file("draws");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_fit(a, out, err), kExitOk);
    for (int c = 1; c <= 3; ++c) {
        const auto text = testsupport::read_file(dir.file("draws.chain" + std::to_string(c) + ".csv"));
        EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 501);
    }
}

TEST(CmdCompare, AnnotatesDicDifference) {
    testsupport::TempDir dir;
    CompareArgs a;
    a.dataset_path = kData + "/fixture.csv";
    a.mcmc = quick_mcmc();
    a.output = dir.file("cmp.json");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_compare(a, out, err), kExitOk) << err.str();
    const auto j = nlohmann::json::parse(testsupport::read_file(a.output));
    const double delta = j["delta_dic"].get<double>();
    EXPECT_EQ(j["meaningful"].get<bool>(), dic_difference_meaningful(delta));
    EXPECT_DOUBLE_EQ(delta, j["models"][1]["fit"]["dic"].get<double>() - j["models"][0]["fit"]["dic"].get<double>());
    EXPECT_EQ(j["models"][0]["model"]["structure"], "additive");
    EXPECT_EQ(j["models"][1]["model"]["structure"], "label-invariant");
    const bool annotated = out.str().find("not meaningful") != std::string::npos ||
                           out.str().find("preferred") != std::string::npos;
    EXPECT_TRUE(annotated);
    // The two fits use distinct derived seeds.
    EXPECT_NE(j["models"][0]["mcmc"]["seed"], j["models"][1]["mcmc"]["seed"]);
}

TEST(CmdSensitivity, TruncatedPriorKeepsLambdaAboveOne) {
    testsupport::TempDir dir;
    {
        std::ofstream f(dir.file("priors.json"));
        f << R"([{"name": "prior5", "prior": {"family": "truncated-log-normal", "meanlog": 0, "sdlog": 1, "lower": 1}}])";
    }
    SensitivityArgs a;
    a.dataset_path = kData + "/fixture.csv";
    a.priors_path = dir.file("priors.json");
    a.mcmc = quick_mcmc();
    a.table = dir.file("forest.csv");
    a.output = dir.file("sens.json");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_sensitivity(a, out, err), kExitOk) << err.str();
    const auto j = nlohmann::json::parse(testsupport::read_file(a.output));
    ASSERT_EQ(j["runs"].size(), 1u);
    bool saw_lambda = false;
    for (const auto& row : j["rows"]) {
        if (row["label"] != "lambda") continue;
        saw_lambda = true;
        EXPECT_GT(row["summary"]["ci_lo"].get<double>(), 1.0);
    }
    EXPECT_TRUE(saw_lambda);
    const auto table = testsupport::read_file(a.table);
    EXPECT_EQ(table.substr(0, table.find('\n')), sensitivity_table_header());

    a.spec.structure = VarianceStructure::Additive;
    std::ostringstream err2;
    EXPECT_EQ(cmd_sensitivity(a, out, err2), kExitError);
}

TEST(CmdSimulate, WritesDatasetAndSidecar) {
    testsupport::TempDir dir;
    SimulateArgs a;
    a.truth_path = kData + "/truth_fixture.json";
    a.output = dir.file("sim.csv");
    a.seed = 5;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_simulate(a, out, err), kExitOk) << err.str();
    const auto ds = load_dataset(a.output);
    const auto truth = nlohmann::json::parse(testsupport::read_file(dir.file("sim.truth.json")));
    EXPECT_EQ(truth["config"]["seed"].get<std::uint64_t>(), 5u);
    EXPECT_EQ(truth["trials"].size(), ds.trial_count());

    std::ostringstream summary;
    ASSERT_EQ(cmd_summarize(a.output, summary, err), kExitOk);
    EXPECT_NE(summary.str().find(std::to_string(ds.meta_analyses.size())), std::string::npos);
}

TEST(ResolveSpec, OverridesAndErrors) {
    const auto ds = load_dataset(kData + "/fixture.csv");
    SpecOptions o;
    o.config_path = kData + "/additive.json";
    o.structure = VarianceStructure::LabelInvariant;
    o.tau_hierarchy = false;
    const auto spec = resolve_spec(ds, o);
    EXPECT_EQ(spec.structure, VarianceStructure::LabelInvariant);
    EXPECT_FALSE(spec.tau_hierarchy);
    EXPECT_NO_THROW(validate(spec));
    o.characteristics = {"no_such_column"};
    EXPECT_ANY_THROW(resolve_spec(ds, o));
}
