#include "metaepi/model_config.hpp"

#include <fstream>
#include <sstream>

namespace metaepi {

using nlohmann::json;

namespace {

constexpr const char* kSchema = "metaepi-model/1";

double number(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw ModelError(std::string("prior field '") + key + "' missing or not a number");
    }
    return j.at(key).get<double>();
}

}  // namespace

json prior_to_json(const PriorSpec& prior) {
    json j;
    j["family"] = family_name(prior);
    if (const auto* p = std::get_if<NormalPrior>(&prior)) {
        j["mean"] = p->mean;
        j["variance"] = p->variance;
    } else if (const auto* p = std::get_if<InverseGammaZeroMixture>(&prior)) {
        j["shape"] = p->shape;
        j["rate"] = p->rate;
    } else if (const auto* p = std::get_if<UniformPrior>(&prior)) {
        j["lo"] = p->lo;
        j["hi"] = p->hi;
    } else if (const auto* p = std::get_if<LogNormalPrior>(&prior)) {
        j["meanlog"] = p->meanlog;
        j["sdlog"] = p->sdlog;
    } else if (const auto* p = std::get_if<TruncatedLogNormalPrior>(&prior)) {
        j["meanlog"] = p->meanlog;
        j["sdlog"] = p->sdlog;
        j["lower"] = p->lower;
    } else if (const auto* p = std::get_if<UniformOnLogPrior>(&prior)) {
        j["lo"] = p->lo;
        j["hi"] = p->hi;
    }
    return j;
}

PriorSpec prior_from_json(const json& j) {
    if (!j.is_object() || !j.contains("family")) throw ModelError("prior entry needs a 'family' key");
    const auto family = j.at("family").get<std::string>();
    PriorSpec out;
    if (family == "normal") {
        out = NormalPrior{number(j, "mean"), number(j, "variance")};
    } else if (family == "inverse-gamma-zero-mixture") {
        out = InverseGammaZeroMixture{number(j, "shape"), number(j, "rate")};
    } else if (family == "uniform") {
        out = UniformPrior{number(j, "lo"), number(j, "hi")};
    } else if (family == "log-normal") {
        out = LogNormalPrior{number(j, "meanlog"), number(j, "sdlog")};
    } else if (family == "truncated-log-normal") {
        out = TruncatedLogNormalPrior{number(j, "meanlog"), number(j, "sdlog"), number(j, "lower")};
    } else if (family == "uniform-on-log") {
        out = UniformOnLogPrior{number(j, "lo"), number(j, "hi")};
    } else {
        throw ModelError("unknown prior family '" + family + "'");
    }
    validate(out);
    return out;
}

json spec_to_json(const ModelSpec& spec) {
    json j;
    j["schema"] = kSchema;
    j["structure"] = to_string(spec.structure);
    j["characteristics"] = spec.characteristics;
    j["tau_hierarchy"] = spec.tau_hierarchy;
    j["min_each_side_for_variance"] = spec.min_each_side_for_variance;
    j["require_all_informative"] = spec.require_all_informative;
    j["apply_cut"] = spec.apply_cut;
    json priors;
    const auto& pr = spec.priors;
    priors["location"] = prior_to_json(pr.location);
    priors["tau"] = prior_to_json(pr.tau);
    priors["mu"] = prior_to_json(pr.mu);
    priors["sigma"] = prior_to_json(pr.sigma);
    priors["phi_sq"] = prior_to_json(pr.phi_sq);
    priors["p0"] = prior_to_json(pr.p0);
    if (pr.kappa_sq) priors["kappa_sq"] = prior_to_json(*pr.kappa_sq);
    if (pr.lambda) priors["lambda"] = prior_to_json(*pr.lambda);
    j["priors"] = priors;
    return j;
}

ModelSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw ModelError("model config must be a JSON object");
    if (j.contains("schema") && j.at("schema") != kSchema) {
        throw ModelError("unsupported model config schema " + j.at("schema").dump());
    }
    const auto structure = parse_structure(j.at("structure").get<std::string>());
    ModelSpec spec = make_spec(structure, j.value("characteristics", std::vector<std::size_t>{0}),
                               j.value("tau_hierarchy", true));
    spec.min_each_side_for_variance = j.value("min_each_side_for_variance", std::size_t{2});
    spec.require_all_informative = j.value("require_all_informative", true);
    spec.apply_cut = j.value("apply_cut", true);
    if (j.contains("priors")) {
        const auto& pj = j.at("priors");
        auto& pr = spec.priors;
        const auto read = [&](const char* key, PriorSpec& into) {
            if (pj.contains(key)) into = prior_from_json(pj.at(key));
        };
        read("location", pr.location);
        read("tau", pr.tau);
        read("mu", pr.mu);
        read("sigma", pr.sigma);
        read("phi_sq", pr.phi_sq);
        read("p0", pr.p0);
        if (pj.contains("kappa_sq")) {
            if (structure != VarianceStructure::Additive) {
                throw ModelError("kappa_sq prior given for a label-invariant model");
            }
            pr.kappa_sq = prior_from_json(pj.at("kappa_sq"));
        }
        if (pj.contains("lambda")) {
            if (structure != VarianceStructure::LabelInvariant) {
                throw ModelError("lambda prior given for an additive model");
            }
            pr.lambda = prior_from_json(pj.at("lambda"));
        }
    }
    validate(spec);
    return spec;
}

std::string spec_to_text(const ModelSpec& spec) { return spec_to_json(spec).dump(2) + "\n"; }

ModelSpec spec_from_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelError(std::string("model config is not valid JSON: ") + e.what());
    }
    return spec_from_json(j);
}

ModelSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return spec_from_text(buf.str());
}

void save_spec(const ModelSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write model config '" + path + "'");
    out << spec_to_text(spec);
}

}  // namespace metaepi
