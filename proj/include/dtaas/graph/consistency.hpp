#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtaas/config/validator.hpp"
#include "dtaas/graph/query.hpp"

namespace dtaas::graph {

enum class Expectation { MustMatch, MustNotMatch };

/// With `for_each` set, `query` is evaluated once per for_each binding
/// (seeded with it) and the expectation applies to each evaluation;
/// offending seeds are reported. Without it the expectation applies to
/// `query` as a whole.
struct ConsistencyQuery {
  std::string id;
  std::optional<GraphQuery> for_each;
  GraphQuery query;
  Expectation expectation = Expectation::MustMatch;
  config::Severity severity = config::Severity::Error;
  std::string message;
};

struct ConsistencyResult {
  std::string id;
  bool passed = true;
  config::Severity severity = config::Severity::Error;
  std::string message;
  /// Node ids of the for_each bindings that violated the expectation.
  std::vector<std::string> offenders;
};

struct ConsistencyReport {
  /// False iff an error-severity query failed; failed warnings are
  /// reported but do not flip the verdict.
  bool passed = true;
  std::vector<ConsistencyResult> results;
};

ConsistencyReport check_consistency(const TwinGraph& g, const std::vector<ConsistencyQuery>& queries);

/// CHAN-01: every sensor channel feeds some function/tool.
/// CHAN-02: every command channel is driven by a function/tool of a DT.
/// ORPHAN-01 (warning): every model/data node is used by a function/tool.
const std::vector<ConsistencyQuery>& builtin_consistency_queries();

nlohmann::json to_json(const ConsistencyReport& report);

}  // namespace dtaas::graph
