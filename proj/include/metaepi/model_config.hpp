#pragma once

// JSON form of ModelSpec. Doubles are written with round-trip precision, so
// load(save(spec)) == spec and save(load(text)) is a fixed point.

#include <string>

#include <json.hpp>

#include "metaepi/model.hpp"

namespace metaepi {

nlohmann::json prior_to_json(const PriorSpec& prior);
PriorSpec prior_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

std::string spec_to_text(const ModelSpec& spec);
ModelSpec spec_from_text(const std::string& text);

ModelSpec load_spec(const std::string& path);
void save_spec(const ModelSpec& spec, const std::string& path);

}  // namespace metaepi
