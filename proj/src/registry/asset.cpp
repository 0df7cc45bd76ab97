#include "dtaas/registry/asset.hpp"

#include <set>

#include "dtaas/common/error.hpp"

namespace dtaas::registry {

using nlohmann::json;

std::string_view kind_name(AssetKind k) noexcept {
  switch (k) {
    case AssetKind::Data: return "Data";
    case AssetKind::Model: return "Model";
    case AssetKind::Function: return "Function";
    case AssetKind::Tool: return "Tool";
    case AssetKind::ReadyDT: return "ReadyDT";
  }
  return "Data";
}

std::optional<AssetKind> parse_kind(std::string_view text) noexcept {
  if (text == "Data") return AssetKind::Data;
  if (text == "Model") return AssetKind::Model;
  if (text == "Function") return AssetKind::Function;
  if (text == "Tool") return AssetKind::Tool;
  if (text == "ReadyDT") return AssetKind::ReadyDT;
  return std::nullopt;
}

std::string_view visibility_name(Visibility v) noexcept {
  return v == Visibility::Shared ? "Shared" : "Private";
}

std::optional<Visibility> parse_visibility(std::string_view text) noexcept {
  if (text == "Private") return Visibility::Private;
  if (text == "Shared") return Visibility::Shared;
  return std::nullopt;
}

const Port* AssetRecord::find_port(std::string_view port_name) const {
  for (const auto& p : ports) {
    if (p.name == port_name) return &p;
  }
  return nullptr;
}

std::optional<std::string> AssetRecord::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) return std::nullopt;
  return it->second;
}

namespace {

std::string_view direction_name(PortDirection d) { return d == PortDirection::In ? "in" : "out"; }

std::string_view payload_name(PayloadKind p) {
  switch (p) {
    case PayloadKind::Data: return "data";
    case PayloadKind::Command: return "command";
    case PayloadKind::Event: return "event";
  }
  return "data";
}

AssetKind kind_from(const json& j) {
  auto k = parse_kind(j.get<std::string>());
  if (!k) throw Error(Errc::InvalidArgument, "unknown asset kind '" + j.get<std::string>() + "'");
  return *k;
}

Metadata metadata_from(const json& j) {
  Metadata out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "metadata must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw Error(Errc::InvalidArgument, "metadata value for '" + k + "' must be text");
    out.emplace(k, v.get<std::string>());
  }
  return out;
}

std::vector<Port> ports_from(const json& j) {
  std::vector<Port> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw Error(Errc::InvalidArgument, "ports must be a list");
  for (const auto& p : j) out.push_back(port_from_json(p));
  return out;
}

}  // namespace

json to_json(const Port& p) {
  return {{"name", p.name}, {"direction", direction_name(p.direction)}, {"payload", payload_name(p.payload)}};
}

Port port_from_json(const json& j) {
  try {
    Port p;
    p.name = j.at("name").get<std::string>();
    const auto dir = j.value("direction", std::string("in"));
    if (dir == "in") {
      p.direction = PortDirection::In;
    } else if (dir == "out") {
      p.direction = PortDirection::Out;
    } else {
      throw Error(Errc::InvalidArgument, "port direction must be in|out");
    }
    const auto payload = j.value("payload", std::string("data"));
    if (payload == "data") {
      p.payload = PayloadKind::Data;
    } else if (payload == "command") {
      p.payload = PayloadKind::Command;
    } else if (payload == "event") {
      p.payload = PayloadKind::Event;
    } else {
      throw Error(Errc::InvalidArgument, "port payload must be data|command|event");
    }
    if (p.name.empty()) throw Error(Errc::InvalidArgument, "port name must be nonempty");
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad port: ") + e.what());
  }
}

json to_json(const AssetRecord& r) {
  json ports = json::array();
  for (const auto& p : r.ports) ports.push_back(to_json(p));
  return {{"id", r.id.str()},
          {"kind", kind_name(r.kind)},
          {"name", r.name},
          {"owner", r.owner},
          {"visibility", visibility_name(r.visibility)},
          {"version", r.version},
          {"content_ref", r.content_ref},
          {"ports", std::move(ports)},
          {"params", params_to_json(r.params)},
          {"metadata", r.metadata}};
}

AssetRecord record_from_json(const json& j) {
  try {
    AssetRecord r;
    r.id = AssetId(j.at("id").get<std::string>());
    r.kind = kind_from(j.at("kind"));
    r.name = j.at("name").get<std::string>();
    r.owner = j.at("owner").get<std::string>();
    auto vis = parse_visibility(j.at("visibility").get<std::string>());
    if (!vis) throw Error(Errc::InvalidArgument, "bad visibility");
    r.visibility = *vis;
    r.version = j.at("version").get<std::uint64_t>();
    r.content_ref = j.value("content_ref", std::string());
    r.ports = ports_from(j.value("ports", json()));
    r.params = params_from_json(j.value("params", json()));
    r.metadata = metadata_from(j.value("metadata", json()));
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad asset record: ") + e.what());
  }
}

NewAsset new_asset_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "asset must be an object");
  static const std::set<std::string> known = {"kind", "name", "ports", "params", "metadata", "content"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error(Errc::UnknownField, "unknown asset field '" + k + "'");
  }
  try {
    NewAsset a;
    a.kind = kind_from(j.at("kind"));
    a.name = j.at("name").get<std::string>();
    a.ports = ports_from(j.value("ports", json()));
    a.params = params_from_json(j.value("params", json()));
    a.metadata = metadata_from(j.value("metadata", json()));
    a.content = j.value("content", std::string());
    return a;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad asset: ") + e.what());
  }
}

AssetPatch patch_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "patch must be an object");
  AssetPatch p;
  try {
    if (j.contains("name")) p.name = j["name"].get<std::string>();
    if (j.contains("ports")) p.ports = ports_from(j["ports"]);
    if (j.contains("params")) p.params = params_from_json(j["params"]);
    if (j.contains("metadata")) p.metadata = metadata_from(j["metadata"]);
    if (j.contains("content")) p.content = j["content"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad patch: ") + e.what());
  }
  return p;
}

MapResolver::MapResolver(std::vector<AssetRecord> records) {
  for (auto& r : records) add(std::move(r));
}

void MapResolver::add(AssetRecord record) {
  auto id = record.id;
  records_.insert_or_assign(std::move(id), std::move(record));
}

std::optional<AssetRecord> MapResolver::resolve(const AssetId& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

}  // namespace dtaas::registry
