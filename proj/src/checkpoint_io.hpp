#pragma once

#include <string>

#include "affect/model.hpp"
#include "json.hpp"

namespace affect::model::detail {

nlohmann::json checkpoint_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& doc, const std::string& context);
nlohmann::json read_json_file(const std::string& path, const std::string& context);
void write_json_file(const nlohmann::json& doc, const std::string& path,
                     const std::string& context);

}  // namespace affect::model::detail
