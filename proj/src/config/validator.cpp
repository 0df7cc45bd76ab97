#include "dtaas/config/validator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "dtaas/config/schema.hpp"

namespace dtaas::config {

using nlohmann::json;
using registry::AssetKind;
using registry::AssetRecord;

bool ValidationReport::has(std::string_view rule_id) const {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [&](const Diagnostic& d) { return d.rule == rule_id; });
}

bool ValidationReport::has_error_prefix(std::string_view prefix) const {
  return std::any_of(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) {
    return d.severity == Severity::Error && std::string_view(d.rule).substr(0, prefix.size()) == prefix;
  });
}

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(diagnostics.begin(), diagnostics.end(),
                                                [](const Diagnostic& d) { return d.severity == Severity::Error; }));
}

json to_json(const ValidationReport& report) {
  json diags = json::array();
  for (const auto& d : report.diagnostics) {
    diags.push_back({{"severity", d.severity == Severity::Error ? "error" : "warning"},
                     {"rule", d.rule},
                     {"message", d.message},
                     {"path", d.path}});
  }
  return {{"valid", report.valid}, {"diagnostics", std::move(diags)}};
}

bool Interval::contains(double v) const noexcept {
  const bool above = lo_closed ? v >= lo : v > lo;
  const bool below = hi_closed ? v <= hi : v < hi;
  return above && below;
}

std::optional<Interval> parse_interval(std::string_view text) {
  auto strip = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  };
  text = strip(text);
  if (text.size() < 5) return std::nullopt;
  const char open = text.front(), close = text.back();
  if ((open != '(' && open != '[') || (close != ')' && close != ']')) return std::nullopt;
  const auto body = text.substr(1, text.size() - 2);
  const auto comma = body.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto bound = [](std::string_view s) -> std::optional<double> {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (s == "inf" || s == "+inf") return inf;
    if (s == "-inf") return -inf;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
  };
  auto lo = bound(strip(body.substr(0, comma)));
  auto hi = bound(strip(body.substr(comma + 1)));
  if (!lo || !hi || *lo > *hi) return std::nullopt;
  return Interval{*lo, *hi, open == '[', close == ']'};
}

std::vector<Diagnostic> check_grammar(const CompositionSpec& a, const std::string& path) {
  std::vector<Diagnostic> out;
  const auto here = join_path(path, "c_a");
  const std::size_t pairs = static_cast<std::size_t>(
      std::count_if(a.ft_pairs.begin(), a.ft_pairs.end(), [](const FtPair& p) { return p.complete(); }));
  const std::size_t unpaired = a.ft_pairs.size() - pairs;
  const std::size_t elementary = a.data.size() + a.models.size() + a.ft_pairs.size();

  if (!a.ready_dts.empty()) {
    if (a.ready_dts.size() > 1) {
      out.push_back({Severity::Error, std::string(rule::kGrammarReadyDt),
                     "grammar: at most one ready DT may stand as a DT", join_path(here, "ready_dt")});
    }
    if (elementary + a.child_dts.size() > 0) {
      out.push_back({Severity::Error, std::string(rule::kGrammarReadyDt),
                     "grammar: a ready DT cannot be mixed with other assets; compose it as a child DT",
                     join_path(here, "ready_dt")});
    }
    return out;
  }
  if (!a.child_dts.empty()) return out;  // {(DMFT)*, Dt+}

  if (pairs == 0) {
    out.push_back({Severity::Error, std::string(rule::kGrammarNoPair), "grammar: no (F,T) pair",
                   join_path(here, "ft_pairs")});
  }
  if (unpaired > 0) {
    out.push_back({Severity::Error, std::string(rule::kGrammarUnpaired),
                   "grammar: function/tool without a partner outside a hierarchical DT",
                   join_path(here, "ft_pairs")});
  }
  return out;
}

namespace {

struct Endpoint {
  enum class Kind { Asset, Child, Channel, External, Unknown } kind = Kind::Unknown;
  std::optional<AssetRecord> asset;
};

class LevelValidator {
 public:
  LevelValidator(const registry::AssetResolver& resolver, std::vector<Diagnostic>& out)
      : resolver_(resolver), out_(out) {}

  void run(const ConfigDoc& doc, const std::string& path, std::vector<std::string>& lineage) {
    if (std::find(lineage.begin(), lineage.end(), doc.name) != lineage.end()) {
      error(rule::kCycle, "configuration '" + doc.name + "' repeats along its own ancestry", join_path(path, "name"));
      return;
    }
    lineage.push_back(doc.name);

    for (auto& d : check_grammar(doc.c_a, path)) out_.push_back(std::move(d));
    check_children(doc, path);
    std::map<AssetId, AssetRecord> assets;
    resolve_assets(doc, path, assets);
    check_connections(doc, path, assets);
    check_params(doc, path, assets);
    check_infra(doc, path);

    for (std::size_t i = 0; i < doc.children.size(); ++i) {
      run(doc.children[i], index_path(join_path(path, "children"), i), lineage);
    }
    lineage.pop_back();
  }

 private:
  void error(std::string_view r, std::string msg, std::string path) {
    out_.push_back({Severity::Error, std::string(r), std::move(msg), std::move(path)});
  }
  void warning(std::string_view r, std::string msg, std::string path) {
    out_.push_back({Severity::Warning, std::string(r), std::move(msg), std::move(path)});
  }

  void check_children(const ConfigDoc& doc, const std::string& path) {
    const auto refs_path = join_path(join_path(path, "c_a"), "child_dts");
    for (std::size_t i = 0; i < doc.c_a.child_dts.size(); ++i) {
      const auto& name = doc.c_a.child_dts[i];
      const auto matches = std::count_if(doc.children.begin(), doc.children.end(),
                                         [&](const ConfigDoc& c) { return c.name == name; });
      if (matches != 1) {
        error(rule::kChildRef,
              "child DT '" + name + "' must match exactly one nested configuration (found " +
                  std::to_string(matches) + ")",
              index_path(refs_path, i));
      }
    }
    for (std::size_t i = 0; i < doc.children.size(); ++i) {
      const auto& name = doc.children[i].name;
      if (std::find(doc.c_a.child_dts.begin(), doc.c_a.child_dts.end(), name) == doc.c_a.child_dts.end()) {
        error(rule::kChildRef, "nested configuration '" + name + "' is not referenced in c_a.child_dts",
              index_path(join_path(path, "children"), i));
      }
    }
  }

  void expect(const AssetId& id, AssetKind kind, const std::string& where,
              std::map<AssetId, AssetRecord>& assets) {
    auto rec = resolver_.resolve(id);
    if (!rec) {
      error(rule::kUnresolved, "asset '" + id.str() + "' does not resolve", where);
      return;
    }
    if (rec->kind != kind) {
      error(rule::kKindMismatch,
            "asset '" + id.str() + "' is a " + std::string(registry::kind_name(rec->kind)) + ", expected " +
                std::string(registry::kind_name(kind)),
            where);
    }
    if (rec->kind == AssetKind::Data && rec->ports.empty()) {
      error(rule::kDataPorts, "data asset '" + id.str() + "' declares no ports", where);
    }
    assets.insert_or_assign(id, std::move(*rec));
  }

  void resolve_assets(const ConfigDoc& doc, const std::string& path, std::map<AssetId, AssetRecord>& assets) {
    const auto ca = join_path(path, "c_a");
    auto each = [&](const std::vector<AssetId>& ids, std::string_view key, AssetKind kind) {
      for (std::size_t i = 0; i < ids.size(); ++i) expect(ids[i], kind, index_path(join_path(ca, key), i), assets);
    };
    each(doc.c_a.data, "data", AssetKind::Data);
    each(doc.c_a.models, "models", AssetKind::Model);
    each(doc.c_a.ready_dts, "ready_dt", AssetKind::ReadyDT);
    for (std::size_t i = 0; i < doc.c_a.ft_pairs.size(); ++i) {
      const auto& p = doc.c_a.ft_pairs[i];
      const auto at = index_path(join_path(ca, "ft_pairs"), i);
      if (p.function) expect(*p.function, AssetKind::Function, join_path(at, "function"), assets);
      if (p.tool) expect(*p.tool, AssetKind::Tool, join_path(at, "tool"), assets);
    }
  }

  bool in_composition(const ConfigDoc& doc, const AssetId& id) const {
    const auto& a = doc.c_a;
    auto in = [&](const std::vector<AssetId>& v) { return std::find(v.begin(), v.end(), id) != v.end(); };
    if (in(a.data) || in(a.models) || in(a.ready_dts)) return true;
    return std::any_of(a.ft_pairs.begin(), a.ft_pairs.end(),
                       [&](const FtPair& p) { return p.function == id || p.tool == id; });
  }

  Endpoint endpoint_for(const ConfigDoc& doc, const PortRef& ref, bool producer, const std::string& where,
                        const std::map<AssetId, AssetRecord>& assets) {
    Endpoint ep;
    const auto side = producer ? "producer" : "consumer";
    if (ref.ref == kPtRef) {
      ep.kind = Endpoint::Kind::Channel;
      const auto* ch = doc.c_pt.find(ref.port);
      if (!ch) {
        error(rule::kUnknownPort, std::string(side) + " PT channel '" + ref.port + "' is not declared", where);
      } else {
        const bool emits = ch->role == ChannelRole::Sensor || ch->role == ChannelRole::Event;
        if (emits != producer) {
          error(rule::kPortDirection,
                "PT channel '" + ref.port + "' (" + std::string(role_name(ch->role)) + ") cannot act as " + side,
                where);
        }
      }
      return ep;
    }
    if (ref.ref == kExtRef) {
      ep.kind = Endpoint::Kind::External;
      auto it = std::find_if(doc.c_e.endpoints.begin(), doc.c_e.endpoints.end(),
                             [&](const ExternalEndpoint& e) { return e.name == ref.port; });
      if (it == doc.c_e.endpoints.end()) {
        error(rule::kUnknownPort, std::string(side) + " external endpoint '" + ref.port + "' is not declared", where);
      } else if ((it->direction == Direction::In) != producer) {
        error(rule::kPortDirection, "external endpoint '" + ref.port + "' cannot act as " + side, where);
      }
      return ep;
    }
    if (std::find(doc.c_a.child_dts.begin(), doc.c_a.child_dts.end(), ref.ref) != doc.c_a.child_dts.end()) {
      ep.kind = Endpoint::Kind::Child;
      return ep;
    }
    const AssetId id(ref.ref);
    if (!in_composition(doc, id)) {
      error(rule::kConnectionRef, std::string(side) + " '" + ref.ref + "' is not part of this composition", where);
      return ep;
    }
    ep.kind = Endpoint::Kind::Asset;
    auto it = assets.find(id);
    if (it == assets.end()) return ep;  // already reported as REF-01
    ep.asset = it->second;
    const auto* port = ep.asset->find_port(ref.port);
    if (!port) {
      error(rule::kUnknownPort, "asset '" + ref.ref + "' has no port '" + ref.port + "'", where);
    } else if ((port->direction == registry::PortDirection::Out) != producer) {
      error(rule::kPortDirection,
            "port '" + ref.str() + "' is an " + (producer ? "in" : "out") + "-port and cannot act as " + side, where);
    }
    return ep;
  }

  void check_connections(const ConfigDoc& doc, const std::string& path, const std::map<AssetId, AssetRecord>& assets) {
    const auto base = join_path(join_path(path, "c_a"), "connections");
    for (std::size_t i = 0; i < doc.c_a.connections.size(); ++i) {
      const auto& c = doc.c_a.connections[i];
      const auto where = index_path(base, i);
      const auto producer = endpoint_for(doc, c.producer, true, where, assets);
      const auto consumer = endpoint_for(doc, c.consumer, false, where, assets);
      if (producer.asset &&
          (producer.asset->kind == AssetKind::Model || producer.asset->kind == AssetKind::Data)) {
        const bool ok = consumer.asset && (consumer.asset->kind == AssetKind::Function ||
                                           consumer.asset->kind == AssetKind::Tool);
        const bool unresolved_asset = consumer.kind == Endpoint::Kind::Asset && !consumer.asset;
        if (!ok && !unresolved_asset) {
          error(rule::kDependency, "dependency: only F/T may consume " +
                                       std::string(registry::kind_name(producer.asset->kind)) + " output '" +
                                       c.producer.str() + "'",
                where);
        }
      }
    }
  }

  void check_params(const ConfigDoc& doc, const std::string& path, const std::map<AssetId, AssetRecord>& assets) {
    const auto base = join_path(join_path(path, "c_a"), "parameters");
    for (const auto& [id, rec] : assets) {
      for (const auto& [key, text] : rec.metadata) {
        if (key.rfind("range.", 0) != 0) continue;
        const auto param = key.substr(6);
        auto it = doc.c_a.parameters.find(param);
        if (it == doc.c_a.parameters.end()) continue;
        const auto interval = parse_interval(text);
        if (!interval) continue;
        const auto* value = std::get_if<double>(&it->second);
        if (!value || !std::isfinite(*value) || !interval->contains(*value)) {
          error(rule::kParamRange,
                "parameter '" + param + "' = " + scalar_to_string(it->second) + " is outside " + text +
                    " declared by '" + id.str() + "'",
                join_path(base, param));
        }
      }
    }
  }

  void check_infra(const ConfigDoc& doc, const std::string& path) {
    const auto ci = join_path(path, "c_i");
    auto positive = [&](std::int64_t v, std::string_view field) {
      if (v <= 0) error(rule::kInfra, std::string(field) + " must be strictly positive", join_path(ci, field));
    };
    positive(doc.c_i.cpu_units, "cpu_units");
    positive(doc.c_i.memory_mb, "memory_mb");
    positive(doc.c_i.tick_ms, "tick_ms");

    std::set<std::string> seen;
    for (std::size_t i = 0; i < doc.c_e.endpoints.size(); ++i) {
      if (!seen.insert(doc.c_e.endpoints[i].name).second) {
        error(rule::kExternalDup, "duplicate external endpoint '" + doc.c_e.endpoints[i].name + "'",
              index_path(join_path(path, "c_e.endpoints"), i));
      }
    }
    seen.clear();
    bool sensor = false, command = false;
    for (std::size_t i = 0; i < doc.c_pt.channels.size(); ++i) {
      const auto& ch = doc.c_pt.channels[i];
      if (!seen.insert(ch.name).second) {
        error(rule::kChannelDup, "duplicate PT channel '" + ch.name + "'", index_path(join_path(path, "c_pt.channels"), i));
      }
      sensor = sensor || ch.role == ChannelRole::Sensor;
      command = command || ch.role == ChannelRole::Command;
    }
    if (command && !sensor) {
      error(rule::kNoFeedback, "command channels require at least one sensor channel for feedback",
            join_path(path, "c_pt.channels"));
    }
    if (doc.c_pt.channels.empty()) {
      warning(rule::kNoPhysicalTwin, "no PT channels: the DT runs as a pure simulation", join_path(path, "c_pt"));
    }
  }

  const registry::AssetResolver& resolver_;
  std::vector<Diagnostic>& out_;
};

}  // namespace

ValidationReport validate_config(const ConfigDoc& doc, const registry::AssetResolver& resolver) {
  ValidationReport report;
  std::vector<std::string> lineage;
  LevelValidator(resolver, report.diagnostics).run(doc, "", lineage);
  report.valid = report.error_count() == 0;
  return report;
}

}  // namespace dtaas::config
