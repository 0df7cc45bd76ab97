#include "dtaas/config/parser.hpp"

#include "dtaas/common/error.hpp"
#include "dtaas/config/schema.hpp"

namespace dtaas::config {

using nlohmann::json;

namespace {

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  // nlohmann reports the 1-based position of the offending byte.
  std::size_t line = 1, column = 1;
  const auto end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

std::vector<AssetId> ids_from(const json& j) {
  std::vector<AssetId> out;
  if (j.is_string()) {
    out.emplace_back(j.get<std::string>());
    return out;
  }
  for (const auto& v : j) out.emplace_back(v.get<std::string>());
  return out;
}

CompositionSpec composition_from(const json& j, const std::string& path) {
  CompositionSpec a;
  if (j.contains("data")) a.data = ids_from(j["data"]);
  if (j.contains("models")) a.models = ids_from(j["models"]);
  if (j.contains("ready_dt")) a.ready_dts = ids_from(j["ready_dt"]);
  if (j.contains("ft_pairs")) {
    for (const auto& p : j["ft_pairs"]) {
      FtPair pair;
      if (p.contains("function")) pair.function = AssetId(p["function"].get<std::string>());
      if (p.contains("tool")) pair.tool = AssetId(p["tool"].get<std::string>());
      a.ft_pairs.push_back(std::move(pair));
    }
  }
  if (j.contains("child_dts")) a.child_dts = j["child_dts"].get<std::vector<std::string>>();
  if (j.contains("connections")) {
    std::size_t i = 0;
    for (const auto& c : j["connections"]) {
      try {
        a.connections.push_back(parse_connection(c.get<std::string>()));
      } catch (const Error& e) {
        throw Error(Errc::ParseError,
                    index_path(join_path(path, "connections"), i) + ": " + e.what());
      }
      ++i;
    }
  }
  if (j.contains("parameters")) a.parameters = params_from_json(j["parameters"]);
  return a;
}

ConfigDoc doc_from(const json& j, const std::string& path) {
  ConfigDoc doc;
  doc.name = j.at("name").get<std::string>();
  doc.c_a = composition_from(j.at("c_a"), join_path(path, "c_a"));

  const auto& ci = j.at("c_i");
  doc.c_i.flavour = *parse_flavour(ci.at("flavour").get<std::string>());
  doc.c_i.cpu_units = ci.at("cpu_units").get<std::int64_t>();
  doc.c_i.memory_mb = ci.at("memory_mb").get<std::int64_t>();
  doc.c_i.tick_ms = ci.at("tick_ms").get<std::int64_t>();

  if (j.contains("c_e") && j["c_e"].contains("endpoints")) {
    for (const auto& e : j["c_e"]["endpoints"]) {
      doc.c_e.endpoints.push_back({e.at("name").get<std::string>(), e.at("url").get<std::string>(),
                                   e.at("direction").get<std::string>() == "in" ? Direction::In : Direction::Out});
    }
  }
  if (j.contains("c_pt")) {
    const auto& pt = j["c_pt"];
    doc.c_pt.endpoint = pt.value("endpoint", std::string());
    if (pt.contains("channels")) {
      for (const auto& c : pt["channels"]) {
        const auto role = c.at("role").get<std::string>();
        PtChannel ch{c.at("name").get<std::string>(), ChannelRole::Sensor, c.at("key").get<std::string>()};
        if (role == "actuator") ch.role = ChannelRole::Actuator;
        if (role == "event") ch.role = ChannelRole::Event;
        if (role == "command") ch.role = ChannelRole::Command;
        doc.c_pt.channels.push_back(std::move(ch));
      }
    }
  }
  if (j.contains("children")) {
    std::size_t i = 0;
    for (const auto& c : j["children"]) doc.children.push_back(doc_from(c, index_path(join_path(path, "children"), i++)));
  }
  return doc;
}

}  // namespace

ConfigDoc config_from_json(const json& j) {
  const auto violations = config_schema().validate(j);
  if (!violations.empty()) {
    // Unknown keys are reported in preference to the other violations.
    const SchemaViolation* first = &violations.front();
    for (const auto& v : violations) {
      if (v.kind == SchemaViolation::Kind::UnknownField) {
        first = &v;
        break;
      }
    }
    std::string message = first->message;
    if (violations.size() > 1) message += " (+" + std::to_string(violations.size() - 1) + " more)";
    throw Error(first->kind == SchemaViolation::Kind::UnknownField ? Errc::UnknownField : Errc::ParseError,
                message);
  }
  return doc_from(j, "");
}

ConfigDoc parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    throw Error(Errc::ParseError, "syntax error at line " + std::to_string(line) + ", column " +
                                      std::to_string(column) + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace dtaas::config
