#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/config/config_doc.hpp"
#include "dtaas/config/diff.hpp"
#include "dtaas/graph/query.hpp"

namespace dtaas::graph {

/// What a rule trigger sees of a platform event.
struct RuleEvent {
  std::string type;
  std::string source;
  nlohmann::json payload = nlohmann::json::object();
};

struct RuleTrigger {
  std::string event_type;
  std::optional<std::string> source;

  bool matches(const RuleEvent& ev) const;
};

/// `value` may contain `${var.prop}` (a property of the guard's first
/// binding; `${var.id}` falls back to the node id) or `${event.field}`
/// (`type`, `source` or a payload field). A string that is exactly one
/// placeholder takes the referenced value with its type.
struct TransformOp {
  std::string path;
  nlohmann::json value;
};

struct ReconfigRule {
  std::string id;
  RuleTrigger trigger;
  /// Fires only when the guard has at least one match.
  std::optional<GraphQuery> guard;
  std::vector<TransformOp> transform;
};

struct RuleFiring {
  std::string rule_id;
  config::ConfigDoc candidate;
  config::ChangeSet changes;
  Binding binding;
};

/// Ordered per-instance rule registry. Firing never touches the instance;
/// it only yields a candidate document for the lifecycle engine to
/// revalidate and apply.
class RuleBook {
 public:
  /// Throws Error(UnknownPath) when a transform path does not exist in
  /// `current`, Error(Conflict) on a duplicate id.
  void register_rule(ReconfigRule rule, const config::ConfigDoc& current);
  bool remove_rule(std::string_view id);
  std::vector<ReconfigRule> rules() const;
  bool contains(std::string_view id) const;

  /// First rule in registration order whose trigger and guard match.
  /// With `only` set, just that rule is considered (Error(UnknownTrigger)
  /// when it is not registered).
  std::optional<RuleFiring> fire(const config::ConfigDoc& current, const TwinGraph& g, const RuleEvent& ev,
                                 const std::optional<std::string>& only = std::nullopt) const;

 private:
  mutable std::mutex mu_;
  std::vector<ReconfigRule> rules_;
};

nlohmann::json substitute(const nlohmann::json& value, const TwinGraph& g, const Binding& binding,
                          const RuleEvent& ev);

/// Rules file entry; `config` restricts the rule to instances whose
/// configuration base name matches.
struct RuleSpec {
  std::optional<std::string> config;
  ReconfigRule rule;
};

/// `{"rules": [{"id", "config"?, "on": {"type", "source"?}, "when"?, "set": {path: value}}]}`.
/// Throws Error(ParseError) or Error(MalformedQuery).
std::vector<RuleSpec> load_rules(std::string_view text);
RuleSpec rule_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReconfigRule& rule);

}  // namespace dtaas::graph
