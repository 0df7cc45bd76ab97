#include "dtaas/graph/rules.hpp"

#include <algorithm>

#include "dtaas/common/error.hpp"

namespace dtaas::graph {

using nlohmann::json;

bool RuleTrigger::matches(const RuleEvent& ev) const {
  return ev.type == event_type && (!source || *source == ev.source);
}

namespace {

json lookup(std::string_view ref, const TwinGraph& g, const Binding& binding, const RuleEvent& ev) {
  const auto dot = ref.find('.');
  if (dot == std::string_view::npos) {
    throw Error(Errc::InvalidArgument, "placeholder '${" + std::string(ref) + "}' needs <var>.<field>");
  }
  const auto var = std::string(ref.substr(0, dot));
  const auto field = std::string(ref.substr(dot + 1));
  if (var == "event") {
    if (field == "type") return ev.type;
    if (field == "source") return ev.source;
    if (ev.payload.is_object() && ev.payload.contains(field)) return ev.payload[field];
    throw Error(Errc::InvalidArgument, "event has no field '" + field + "'");
  }
  auto it = binding.find(var);
  if (it == binding.end()) throw Error(Errc::InvalidArgument, "placeholder variable '" + var + "' is not bound");
  const auto* n = g.find(it->second);
  if (n && n->props.contains(field)) return n->props[field];
  if (field == "id") return it->second;
  throw Error(Errc::InvalidArgument, "node '" + it->second + "' has no property '" + field + "'");
}

}  // namespace

json substitute(const json& value, const TwinGraph& g, const Binding& binding, const RuleEvent& ev) {
  if (value.is_array()) {
    json out = json::array();
    for (const auto& v : value) out.push_back(substitute(v, g, binding, ev));
    return out;
  }
  if (value.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : value.items()) out[k] = substitute(v, g, binding, ev);
    return out;
  }
  if (!value.is_string()) return value;
  const auto& s = value.get_ref<const std::string&>();
  if (s.size() > 3 && s.rfind("${", 0) == 0 && s.back() == '}' && s.find("${", 2) == std::string::npos) {
    return lookup(std::string_view(s).substr(2, s.size() - 3), g, binding, ev);
  }
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto open = s.find("${", i);
    if (open == std::string::npos) {
      out += s.substr(i);
      break;
    }
    const auto close = s.find('}', open);
    if (close == std::string::npos) throw Error(Errc::InvalidArgument, "unterminated placeholder in '" + s + "'");
    out += s.substr(i, open - i);
    const auto v = lookup(std::string_view(s).substr(open + 2, close - open - 2), g, binding, ev);
    out += v.is_string() ? v.get<std::string>() : v.dump();
    i = close + 1;
  }
  return out;
}

void RuleBook::register_rule(ReconfigRule rule, const config::ConfigDoc& current) {
  if (rule.id.empty()) throw Error(Errc::InvalidArgument, "rule id must not be empty");
  for (const auto& op : rule.transform) {
    if (!config::path_exists(current, op.path)) {
      throw Error(Errc::UnknownPath, "rule '" + rule.id + "': no such path '" + op.path + "'");
    }
  }
  std::lock_guard lock(mu_);
  if (std::any_of(rules_.begin(), rules_.end(), [&](const ReconfigRule& r) { return r.id == rule.id; })) {
    throw Error(Errc::Conflict, "rule '" + rule.id + "' already registered");
  }
  rules_.push_back(std::move(rule));
}

bool RuleBook::remove_rule(std::string_view id) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(rules_.begin(), rules_.end(), [&](const ReconfigRule& r) { return r.id == id; });
  if (it == rules_.end()) return false;
  rules_.erase(it);
  return true;
}

std::vector<ReconfigRule> RuleBook::rules() const {
  std::lock_guard lock(mu_);
  return rules_;
}

bool RuleBook::contains(std::string_view id) const {
  std::lock_guard lock(mu_);
  return std::any_of(rules_.begin(), rules_.end(), [&](const ReconfigRule& r) { return r.id == id; });
}

std::optional<RuleFiring> RuleBook::fire(const config::ConfigDoc& current, const TwinGraph& g,
                                         const RuleEvent& ev, const std::optional<std::string>& only) const {
  const auto snapshot = rules();
  if (only && std::none_of(snapshot.begin(), snapshot.end(), [&](const ReconfigRule& r) { return r.id == *only; })) {
    throw Error(Errc::UnknownTrigger, "no rule '" + *only + "'");
  }
  for (const auto& rule : snapshot) {
    if (only && rule.id != *only) continue;
    if (!rule.trigger.matches(ev)) continue;
    Binding binding;
    if (rule.guard) {
      const auto rows = run_query(g, *rule.guard);
      if (rows.empty()) continue;
      binding = rows.front();
    }
    config::Overrides overrides;
    for (const auto& op : rule.transform) overrides[op.path] = substitute(op.value, g, binding, ev);
    auto candidate = config::apply_overrides(current, overrides);
    auto changes = config::diff_config(current, candidate);
    return RuleFiring{rule.id, std::move(candidate), std::move(changes), std::move(binding)};
  }
  return std::nullopt;
}

RuleSpec rule_spec_from_json(const json& j) {
  auto fail = [](const std::string& what) { throw Error(Errc::ParseError, "rule: " + what); };
  if (!j.is_object()) fail("entry must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "id" && k != "config" && k != "on" && k != "when" && k != "set") fail("unknown field '" + k + "'");
  }
  RuleSpec spec;
  if (!j.contains("id") || !j["id"].is_string()) fail("missing string 'id'");
  spec.rule.id = j["id"].get<std::string>();
  if (j.contains("config")) {
    if (!j["config"].is_string()) fail("'config' must be a string");
    spec.config = j["config"].get<std::string>();
  }
  if (!j.contains("on") || !j["on"].is_object() || !j["on"].contains("type") || !j["on"]["type"].is_string()) {
    fail("'" + spec.rule.id + "' needs on.type");
  }
  spec.rule.trigger.event_type = j["on"]["type"].get<std::string>();
  if (j["on"].contains("source")) spec.rule.trigger.source = j["on"]["source"].get<std::string>();
  if (j.contains("when")) {
    if (!j["when"].is_string()) fail("'when' must be a query string");
    spec.rule.guard = parse_query(j["when"].get<std::string>());
  }
  if (!j.contains("set") || !j["set"].is_object() || j["set"].empty()) {
    fail("'" + spec.rule.id + "' needs a non-empty 'set' object");
  }
  for (const auto& [path, value] : j["set"].items()) spec.rule.transform.push_back({path, value});
  return spec;
}

std::vector<RuleSpec> load_rules(std::string_view text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("rules file: ") + e.what());
  }
  if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array()) {
    throw Error(Errc::ParseError, "rules file needs a top-level 'rules' list");
  }
  std::vector<RuleSpec> out;
  for (const auto& r : j["rules"]) out.push_back(rule_spec_from_json(r));
  return out;
}

json to_json(const ReconfigRule& rule) {
  json on = {{"type", rule.trigger.event_type}};
  if (rule.trigger.source) on["source"] = *rule.trigger.source;
  json set = json::object();
  for (const auto& op : rule.transform) set[op.path] = op.value;
  json j = {{"id", rule.id}, {"on", std::move(on)}, {"set", std::move(set)}};
  if (rule.guard) j["when"] = rule.guard->text;
  return j;
}

}  // namespace dtaas::graph
