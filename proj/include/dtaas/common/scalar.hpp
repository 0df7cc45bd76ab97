#pragma once

#include <map>
#include <string>
#include <variant>

#include <json.hpp>

namespace dtaas {

/// Parameter value: every number is carried as a double.
using Scalar = std::variant<double, bool, std::string>;
using ParamMap = std::map<std::string, Scalar>;

nlohmann::json scalar_to_json(const Scalar& value);
/// Throws Error(InvalidArgument) when `j` is not a number, bool or string.
Scalar scalar_from_json(const nlohmann::json& j);

std::string scalar_to_string(const Scalar& value);

nlohmann::json params_to_json(const ParamMap& params);
ParamMap params_from_json(const nlohmann::json& j);

}  // namespace dtaas
