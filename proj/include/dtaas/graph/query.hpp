#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dtaas/graph/twin_graph.hpp"

namespace dtaas::graph {

struct NodePattern {
  std::string var;
  /// Alternatives; empty matches any label.
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, nlohmann::json>> props;
};

struct EdgePattern {
  std::string src;
  /// Empty matches any edge label.
  std::string label;
  std::string dst;
};

/// Conjunction of triple patterns with property equality constraints.
/// Grammar: docs/query.ebnf.
struct GraphQuery {
  std::string text;
  /// Variables in order of first appearance, anonymous ones included.
  std::vector<NodePattern> nodes;
  std::vector<EdgePattern> edges;
  /// Projection; defaults to every named variable.
  std::vector<std::string> returns;

  const NodePattern* node(std::string_view var) const;
};

/// Variable -> node id.
using Binding = std::map<std::string, std::string>;

/// Throws Error(MalformedQuery) naming the offending position.
GraphQuery parse_query(std::string_view text);

/// Every satisfying assignment, projected on `returns`, deduplicated and
/// ordered lexicographically by the node ids in `returns` order. `seed`
/// pre-binds variables (keys the query does not mention are ignored).
std::vector<Binding> run_query(const TwinGraph& g, const GraphQuery& q, const Binding& seed = {});

nlohmann::json bindings_to_json(const TwinGraph& g, const std::vector<Binding>& rows);

}  // namespace dtaas::graph
