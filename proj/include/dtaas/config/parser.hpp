#pragma once

#include <string_view>

#include <json.hpp>

#include "dtaas/config/config_doc.hpp"

namespace dtaas::config {

/// Parses a configuration document (JSON with `//` comments allowed).
/// Syntax errors throw Error(ParseError) carrying `line L, column C`;
/// schema violations throw Error(UnknownField) for unknown keys and
/// Error(ParseError) otherwise, naming the offending document path.
ConfigDoc parse_config(std::string_view text);

/// Same as parse_config on an already-parsed JSON tree.
ConfigDoc config_from_json(const nlohmann::json& j);

}  // namespace dtaas::config
