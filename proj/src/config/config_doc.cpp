#include "dtaas/config/config_doc.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "dtaas/common/error.hpp"

namespace dtaas::config {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

PortRef parse_port_ref(std::string_view text, std::string_view whole) {
  const auto t = trim(text);
  const auto dot = t.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == t.size() ||
      t.find('.', dot + 1) != std::string::npos ||
      std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw Error(Errc::ParseError, "malformed connection endpoint '" + t + "' in '" + std::string(whole) + "'");
  }
  return {t.substr(0, dot), t.substr(dot + 1)};
}

json ids_json(const std::vector<AssetId>& ids) {
  json out = json::array();
  for (const auto& id : ids) out.push_back(id.str());
  return out;
}

void collect_assets(const ConfigDoc& doc, std::set<AssetId>& out) {
  const auto& a = doc.c_a;
  out.insert(a.data.begin(), a.data.end());
  out.insert(a.models.begin(), a.models.end());
  out.insert(a.ready_dts.begin(), a.ready_dts.end());
  for (const auto& p : a.ft_pairs) {
    if (p.function) out.insert(*p.function);
    if (p.tool) out.insert(*p.tool);
  }
  for (const auto& c : doc.children) collect_assets(c, out);
}

}  // namespace

Connection parse_connection(std::string_view text) {
  const auto arrow = text.find("->");
  if (arrow == std::string_view::npos) {
    throw Error(Errc::ParseError, "connection '" + std::string(text) + "' lacks '->'");
  }
  return {parse_port_ref(text.substr(0, arrow), text), parse_port_ref(text.substr(arrow + 2), text)};
}

std::string_view role_name(ChannelRole r) noexcept {
  switch (r) {
    case ChannelRole::Sensor: return "sensor";
    case ChannelRole::Actuator: return "actuator";
    case ChannelRole::Event: return "event";
    case ChannelRole::Command: return "command";
  }
  return "sensor";
}

const PtChannel* PtSpec::find(std::string_view name) const {
  for (const auto& c : channels) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const ConfigDoc* ConfigDoc::find_child(std::string_view child_name) const {
  for (const auto& c : children) {
    if (c.name == child_name) return &c;
  }
  return nullptr;
}

std::size_t depth(const ConfigDoc& doc) {
  std::size_t deepest = 0;
  for (const auto& child : doc.children) deepest = std::max(deepest, depth(child) + 1);
  return deepest;
}

std::string_view base_name(std::string_view name) noexcept {
  return name.substr(0, name.find('~'));
}

std::vector<AssetId> referenced_assets(const ConfigDoc& doc) {
  std::set<AssetId> ids;
  collect_assets(doc, ids);
  return {ids.begin(), ids.end()};
}

std::optional<double> number_param(const ConfigDoc& doc, const std::string& name) {
  auto it = doc.c_a.parameters.find(name);
  if (it == doc.c_a.parameters.end()) return std::nullopt;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  return std::nullopt;
}

json to_json(const ConfigDoc& doc) {
  const auto& a = doc.c_a;
  json pairs = json::array();
  for (const auto& p : a.ft_pairs) {
    json e = json::object();
    if (p.function) e["function"] = p.function->str();
    if (p.tool) e["tool"] = p.tool->str();
    pairs.push_back(std::move(e));
  }
  json connections = json::array();
  for (const auto& c : a.connections) connections.push_back(c.str());

  json endpoints = json::array();
  for (const auto& e : doc.c_e.endpoints) {
    endpoints.push_back({{"name", e.name}, {"url", e.url}, {"direction", e.direction == Direction::In ? "in" : "out"}});
  }
  json channels = json::array();
  for (const auto& c : doc.c_pt.channels) {
    channels.push_back({{"name", c.name}, {"role", role_name(c.role)}, {"key", c.key}});
  }
  json children = json::array();
  for (const auto& c : doc.children) children.push_back(to_json(c));

  return {
      {"name", doc.name},
      {"c_a",
       {{"data", ids_json(a.data)},
        {"models", ids_json(a.models)},
        {"ft_pairs", std::move(pairs)},
        {"ready_dt", ids_json(a.ready_dts)},
        {"child_dts", a.child_dts},
        {"connections", std::move(connections)},
        {"parameters", params_to_json(a.parameters)}}},
      {"c_i",
       {{"flavour", flavour_name(doc.c_i.flavour)},
        {"cpu_units", doc.c_i.cpu_units},
        {"memory_mb", doc.c_i.memory_mb},
        {"tick_ms", doc.c_i.tick_ms}}},
      {"c_e", {{"endpoints", std::move(endpoints)}}},
      {"c_pt", {{"endpoint", doc.c_pt.endpoint}, {"channels", std::move(channels)}}},
      {"children", std::move(children)},
  };
}

}  // namespace dtaas::config
