#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dtaas::config {

struct SchemaViolation {
  enum class Kind { UnknownField, Missing, Type, Constraint };

  Kind kind;
  /// Dotted document path, e.g. `c_i.tick_ms` or `children[0].c_a.data[2]`.
  std::string path;
  std::string message;
};

/// Validator for the JSON-Schema subset used by the configuration schema:
/// type, enum, required, properties, additionalProperties, propertyNames,
/// items, minLength, pattern and local `#/definitions/...` references.
class JsonSchema {
 public:
  explicit JsonSchema(nlohmann::json schema);

  std::vector<SchemaViolation> validate(const nlohmann::json& instance) const;

 private:
  void check(const nlohmann::json& schema, const nlohmann::json& value, const std::string& path,
             std::vector<SchemaViolation>& out) const;
  const nlohmann::json& deref(const nlohmann::json& schema) const;

  nlohmann::json root_;
};

/// The configuration schema shipped in `schema/config.schema.json`,
/// embedded at build time.
const JsonSchema& config_schema();
std::string_view config_schema_text();

std::string join_path(const std::string& base, std::string_view key);
std::string index_path(const std::string& base, std::size_t index);

}  // namespace dtaas::config
