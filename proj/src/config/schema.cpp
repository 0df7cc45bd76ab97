#include "dtaas/config/schema.hpp"

#include <regex>
#include <unordered_map>

#include "dtaas/common/error.hpp"

namespace dtaas::config {

using nlohmann::json;

std::string join_path(const std::string& base, std::string_view key) {
  if (base.empty()) return std::string(key);
  return base + "." + std::string(key);
}

std::string index_path(const std::string& base, std::size_t index) {
  return base + "[" + std::to_string(index) + "]";
}

namespace {

bool has_type(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "integer") return value.is_number_integer();
  if (type == "number") return value.is_number();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

const std::regex& cached_regex(const std::string& pattern) {
  thread_local std::unordered_map<std::string, std::regex> cache;
  auto it = cache.find(pattern);
  if (it == cache.end()) it = cache.emplace(pattern, std::regex(pattern, std::regex::ECMAScript)).first;
  return it->second;
}

std::string shown(const std::string& path) { return path.empty() ? "(root)" : path; }

}  // namespace

JsonSchema::JsonSchema(json schema) : root_(std::move(schema)) {}

const json& JsonSchema::deref(const json& schema) const {
  const json* cur = &schema;
  for (int hops = 0; cur->is_object() && cur->contains("$ref"); ++hops) {
    if (hops > 32) throw Error(Errc::Internal, "schema $ref loop");
    const auto ref = (*cur)["$ref"].get<std::string>();
    if (ref.rfind("#/", 0) != 0) throw Error(Errc::Internal, "unsupported $ref " + ref);
    cur = &root_.at(json::json_pointer(ref.substr(1)));
  }
  return *cur;
}

std::vector<SchemaViolation> JsonSchema::validate(const json& instance) const {
  std::vector<SchemaViolation> out;
  check(root_, instance, "", out);
  return out;
}

void JsonSchema::check(const json& raw_schema, const json& value, const std::string& path,
                       std::vector<SchemaViolation>& out) const {
  const json& schema = deref(raw_schema);
  using K = SchemaViolation::Kind;

  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_array()) {
      for (const auto& t : *it) ok = ok || has_type(value, t.get<std::string>());
    } else {
      ok = has_type(value, it->get<std::string>());
    }
    if (!ok) {
      out.push_back({K::Type, path, shown(path) + ": expected type " + it->dump()});
      return;
    }
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    bool ok = false;
    for (const auto& allowed : *it) ok = ok || allowed == value;
    if (!ok) out.push_back({K::Constraint, path, shown(path) + ": must be one of " + it->dump()});
  }

  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (auto it = schema.find("minLength"); it != schema.end() && s.size() < it->get<std::size_t>()) {
      out.push_back({K::Constraint, path, shown(path) + ": must not be empty"});
    }
    if (auto it = schema.find("pattern"); it != schema.end()) {
      if (!std::regex_search(s, cached_regex(it->get<std::string>()))) {
        out.push_back({K::Constraint, path, shown(path) + ": '" + s + "' is malformed"});
      }
    }
  }

  if (value.is_object()) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        if (!value.contains(key.get<std::string>())) {
          const auto missing = join_path(path, key.get<std::string>());
          out.push_back({K::Missing, missing, missing + ": required field is missing"});
        }
      }
    }
    const json* props = schema.contains("properties") ? &schema["properties"] : nullptr;
    const json* extra = schema.contains("additionalProperties") ? &schema["additionalProperties"] : nullptr;
    const json* names = schema.contains("propertyNames") ? &schema["propertyNames"] : nullptr;
    for (const auto& [key, child] : value.items()) {
      const auto child_path = join_path(path, key);
      if (names) check(*names, json(key), child_path, out);
      if (props && props->contains(key)) {
        check((*props)[key], child, child_path, out);
      } else if (extra) {
        if (extra->is_boolean()) {
          if (!extra->get<bool>()) {
            out.push_back({K::UnknownField, child_path, child_path + ": unknown field"});
          }
        } else {
          check(*extra, child, child_path, out);
        }
      }
    }
  }

  if (value.is_array()) {
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < value.size(); ++i) check(*it, value[i], index_path(path, i), out);
    }
  }
}

const JsonSchema& config_schema() {
  static const JsonSchema schema(json::parse(config_schema_text()));
  return schema;
}

}  // namespace dtaas::config
