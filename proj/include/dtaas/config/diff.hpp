#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/config/config_doc.hpp"

namespace dtaas::config {

/// One field-level change. `old_value` is absent for an added key and
/// `new_value` for a removed one. Paths use the dotted form
/// `c_a.parameters.setpoint`, `children[1].c_i.tick_ms`.
struct Change {
  std::string path;
  std::optional<nlohmann::json> old_value;
  std::optional<nlohmann::json> new_value;

  friend bool operator==(const Change&, const Change&) = default;
};

using ChangeSet = std::vector<Change>;

/// Minimal change list between two documents with the same root name
/// (compared without variant tags). Lists of equal length are compared
/// element-wise; a length change replaces the whole list.
/// Throws Error(RootMismatch).
ChangeSet diff_config(const ConfigDoc& old_doc, const ConfigDoc& new_doc);

/// Applies `changes` to `doc`. Throws Error(UnknownPath) when a path does
/// not exist (or, for additions, when its parent does not) and
/// Error(ParseError) when the result is not a well-formed document.
ConfigDoc apply_changes(const ConfigDoc& doc, const ChangeSet& changes);

using Overrides = std::map<std::string, nlohmann::json>;

/// Replaces existing fields; every path must already exist in `doc`.
ConfigDoc apply_overrides(const ConfigDoc& doc, const Overrides& overrides);

/// apply_overrides plus a `~tag` suffix on the root name.
ConfigDoc derive_variant(const ConfigDoc& base, const Overrides& overrides, std::string_view tag = "variant");

/// True when `path` addresses an existing field of the document.
bool path_exists(const ConfigDoc& doc, std::string_view path);

nlohmann::json to_json(const ChangeSet& changes);
ChangeSet changeset_from_json(const nlohmann::json& j);

}  // namespace dtaas::config
