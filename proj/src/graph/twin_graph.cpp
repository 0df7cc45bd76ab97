#include "dtaas/graph/twin_graph.hpp"

#include <algorithm>
#include <sstream>

#include "dtaas/common/error.hpp"

namespace dtaas::graph {

using nlohmann::json;
using config::ConfigDoc;

bool TwinGraph::add_node(Node node) {
  auto id = node.id;
  return nodes_.emplace(std::move(id), std::move(node)).second;
}

bool TwinGraph::add_edge(Edge edge) {
  auto [it, inserted] = edges_.insert(std::move(edge));
  if (inserted) {
    out_[it->src].push_back(&*it);
    in_[it->dst].push_back(&*it);
  }
  return inserted;
}

const Node* TwinGraph::find(std::string_view id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::vector<const Edge*> TwinGraph::out_edges(std::string_view src) const {
  auto it = out_.find(src);
  return it == out_.end() ? std::vector<const Edge*>{} : it->second;
}

std::vector<const Edge*> TwinGraph::in_edges(std::string_view dst) const {
  auto it = in_.find(dst);
  return it == in_.end() ? std::vector<const Edge*>{} : it->second;
}

std::size_t TwinGraph::count_label(std::string_view node_label) const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(),
                                                [&](const auto& kv) { return kv.second.label == node_label; }));
}

std::string TwinGraph::canonical() const {
  std::ostringstream out;
  for (const auto& [id, n] : nodes_) out << "N " << id << ' ' << n.label << ' ' << n.props.dump() << '\n';
  for (const auto& e : edges_) out << "E " << e.src << ' ' << e.label << ' ' << e.dst << ' ' << e.key << '\n';
  return out.str();
}

json TwinGraph::to_json() const {
  json nodes = json::array(), edges = json::array();
  for (const auto& [id, n] : nodes_) nodes.push_back({{"id", id}, {"label", n.label}, {"props", n.props}});
  for (const auto& e : edges_) {
    json j = {{"src", e.src}, {"label", e.label}, {"dst", e.dst}};
    if (!e.key.empty()) j["key"] = e.key;
    edges.push_back(std::move(j));
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

std::string dt_node_id(std::string_view level) { return "dt:" + std::string(level); }
std::string asset_node_id(const AssetId& id) { return "asset:" + id.str(); }
std::string param_node_id(std::string_view level, std::string_view name) {
  return "param:" + std::string(level) + ":" + std::string(name);
}
std::string channel_node_id(std::string_view level, std::string_view name) {
  return "chan:" + std::string(level) + ":" + std::string(name);
}
std::string endpoint_node_id(std::string_view level, std::string_view name) {
  return "ep:" + std::string(level) + ":" + std::string(name);
}

namespace {

class Mapper {
 public:
  Mapper(const registry::AssetResolver& resolver, TwinGraph& g) : resolver_(resolver), g_(g) {}

  void map_level(const ConfigDoc& doc, const std::string& level, std::size_t depth_from_root) {
    const auto dt = dt_node_id(level);
    g_.add_node({dt, std::string(label::kDT),
                 {{"name", doc.name},
                  {"level", level},
                  {"depth", config::depth(doc)},
                  {"nesting", depth_from_root},
                  {"flavour", flavour_name(doc.c_i.flavour)},
                  {"tick_ms", doc.c_i.tick_ms},
                  {"pt_endpoint", doc.c_pt.endpoint}}});

    const auto& a = doc.c_a;
    std::map<std::string, const registry::AssetRecord*> here;
    auto contain = [&](const AssetId& id) {
      const auto& rec = asset(id);
      here[id.str()] = &rec;
      g_.add_edge({dt, std::string(label::kContains), asset_node_id(id), {}});
    };
    for (const auto& id : a.data) contain(id);
    for (const auto& id : a.models) contain(id);
    for (const auto& id : a.ready_dts) contain(id);
    for (const auto& p : a.ft_pairs) {
      if (p.function) contain(*p.function);
      if (p.tool) contain(*p.tool);
      if (p.complete()) g_.add_edge({asset_node_id(*p.function), std::string(label::kPairs), asset_node_id(*p.tool), {}});
    }
    for (const auto& [name, value] : a.parameters) {
      const auto id = param_node_id(level, name);
      g_.add_node({id, std::string(label::kParam), {{"name", name}, {"value", scalar_to_json(value)}}});
      g_.add_edge({dt, std::string(label::kContains), id, {}});
    }
    for (const auto& ch : doc.c_pt.channels) {
      g_.add_node({channel_node_id(level, ch.name), std::string(label::kChannel),
                   {{"name", ch.name}, {"role", config::role_name(ch.role)}, {"key", ch.key}}});
    }
    for (const auto& ep : doc.c_e.endpoints) {
      const auto id = endpoint_node_id(level, ep.name);
      g_.add_node({id, std::string(label::kEndpoint),
                   {{"name", ep.name}, {"url", ep.url}, {"direction", ep.direction == config::Direction::In ? "in" : "out"}}});
      g_.add_edge({dt, std::string(label::kExposes), id, {}});
    }

    for (const auto& c : a.connections) {
      const auto src = endpoint_node(doc, level, c.producer, here);
      const auto dst = endpoint_node(doc, level, c.consumer, here);
      g_.add_edge({src, std::string(label::kConnects), dst, level + "|" + c.str()});
      const auto p = here.find(c.producer.ref);
      const auto q = here.find(c.consumer.ref);
      if (p != here.end() && q != here.end()) {
        const auto pk = p->second->kind, qk = q->second->kind;
        const bool producer_resource = pk == registry::AssetKind::Data || pk == registry::AssetKind::Model;
        const bool consumer_ft = qk == registry::AssetKind::Function || qk == registry::AssetKind::Tool;
        if (producer_resource && consumer_ft) {
          g_.add_edge({asset_node_id(AssetId(c.consumer.ref)), std::string(label::kUses),
                       asset_node_id(AssetId(c.producer.ref)), {}});
        }
      }
    }

    for (const auto& child : doc.children) {
      const auto child_level = level + "/" + child.name;
      g_.add_edge({dt, std::string(label::kChild), dt_node_id(child_level), {}});
      map_level(child, child_level, depth_from_root + 1);
    }
  }

 private:
  const registry::AssetRecord& asset(const AssetId& id) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    auto rec = resolver_.resolve(id);
    if (!rec) throw Error(Errc::DanglingReference, "asset '" + id.str() + "' does not resolve");
    json props = {{"id", rec->id.str()},
                  {"name", rec->name},
                  {"kind", registry::kind_name(rec->kind)},
                  {"owner", rec->owner}};
    for (const auto& [k, v] : rec->params) {
      if (!props.contains(k)) props[k] = scalar_to_json(v);
    }
    if (auto role = rec->meta("role")) props["role"] = *role;
    g_.add_node({asset_node_id(id), std::string(registry::kind_name(rec->kind)), std::move(props)});
    return cache_.emplace(id, std::move(*rec)).first->second;
  }

  std::string endpoint_node(const ConfigDoc& doc, const std::string& level, const config::PortRef& ref,
                            const std::map<std::string, const registry::AssetRecord*>& here) {
    if (ref.ref == config::kPtRef) {
      if (!doc.c_pt.find(ref.port)) throw Error(Errc::DanglingReference, "no PT channel '" + ref.port + "'");
      return channel_node_id(level, ref.port);
    }
    if (ref.ref == config::kExtRef) {
      const auto& eps = doc.c_e.endpoints;
      if (std::none_of(eps.begin(), eps.end(), [&](const auto& e) { return e.name == ref.port; })) {
        throw Error(Errc::DanglingReference, "no external endpoint '" + ref.port + "'");
      }
      return endpoint_node_id(level, ref.port);
    }
    if (doc.find_child(ref.ref)) return dt_node_id(level + "/" + ref.ref);
    if (here.count(ref.ref)) return asset_node_id(AssetId(ref.ref));
    throw Error(Errc::DanglingReference, "connection endpoint '" + ref.str() + "' does not resolve");
  }

  const registry::AssetResolver& resolver_;
  TwinGraph& g_;
  std::map<AssetId, registry::AssetRecord> cache_;
};

}  // namespace

TwinGraph map_config(const ConfigDoc& doc, const registry::AssetResolver& resolver) {
  TwinGraph g;
  Mapper(resolver, g).map_level(doc, doc.name, 0);
  return g;
}

}  // namespace dtaas::graph
