#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/config/config_doc.hpp"
#include "dtaas/registry/asset.hpp"

namespace dtaas::graph {

namespace label {
inline constexpr std::string_view kDT = "DT";
inline constexpr std::string_view kParam = "Param";
inline constexpr std::string_view kChannel = "Channel";
inline constexpr std::string_view kEndpoint = "Endpoint";

inline constexpr std::string_view kContains = "contains";
inline constexpr std::string_view kUses = "uses";
inline constexpr std::string_view kPairs = "pairs";
inline constexpr std::string_view kConnects = "connects";
inline constexpr std::string_view kChild = "child";
inline constexpr std::string_view kExposes = "exposes";
}  // namespace label

struct Node {
  std::string id;
  std::string label;
  /// Flat property map; values are JSON scalars.
  nlohmann::json props = nlohmann::json::object();
};

struct Edge {
  std::string src;
  std::string label;
  std::string dst;
  /// Distinguishes parallel edges (one `connects` edge per connection).
  std::string key;

  friend auto operator<=>(const Edge&, const Edge&) = default;
  friend bool operator==(const Edge&, const Edge&) = default;
};

class TwinGraph {
 public:
  /// Returns false (and keeps the existing node) when the id is taken.
  bool add_node(Node node);
  bool add_edge(Edge edge);

  const Node* find(std::string_view id) const;
  const std::map<std::string, Node, std::less<>>& nodes() const noexcept { return nodes_; }
  const std::set<Edge>& edges() const noexcept { return edges_; }

  std::vector<const Edge*> out_edges(std::string_view src) const;
  std::vector<const Edge*> in_edges(std::string_view dst) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::size_t count_label(std::string_view node_label) const;

  /// One line per node (`N id label props`) sorted by id, then one per edge
  /// (`E src label dst key`) sorted by (src, label, dst, key).
  std::string canonical() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, Node, std::less<>> nodes_;
  std::set<Edge> edges_;
  std::map<std::string, std::vector<const Edge*>, std::less<>> out_;
  std::map<std::string, std::vector<const Edge*>, std::less<>> in_;
};

/// Node id helpers. `level` is the slash-joined chain of DT names from the
/// root, e.g. `incubator/heater-bank`.
std::string dt_node_id(std::string_view level);
std::string asset_node_id(const AssetId& id);
std::string param_node_id(std::string_view level, std::string_view name);
std::string channel_node_id(std::string_view level, std::string_view name);
std::string endpoint_node_id(std::string_view level, std::string_view name);

/// Property-graph view of a configuration and its assets. Every asset maps
/// to one node however many levels reference it. Throws
/// Error(DanglingReference) when an asset or connection endpoint does not
/// resolve.
TwinGraph map_config(const config::ConfigDoc& doc, const registry::AssetResolver& resolver);

}  // namespace dtaas::graph
