#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dtaas/common/clock.hpp"
#include "dtaas/config/config_doc.hpp"
#include "dtaas/datahub/data_hub.hpp"
#include "dtaas/exec/exec_manager.hpp"
#include "dtaas/lifecycle/engine.hpp"
#include "dtaas/registry/asset_registry.hpp"

namespace dtaas::test {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "dtaas-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& sub) const { return path_ / sub; }

 private:
  fs::path path_;
};

/// splitmix64. Small, seedable and identical on every platform, which the
/// std distributions are not.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  /// Inclusive on both ends.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double real(double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53); }
  bool chance(double p) { return real(0.0, 1.0) < p; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(v.size()) - 1))];
  }

 private:
  std::uint64_t s_;
};

inline registry::Port in_port(std::string name, registry::PayloadKind k = registry::PayloadKind::Data) {
  return {std::move(name), registry::PortDirection::In, k};
}
inline registry::Port out_port(std::string name, registry::PayloadKind k = registry::PayloadKind::Data) {
  return {std::move(name), registry::PortDirection::Out, k};
}

inline registry::AssetRecord record(std::string id, registry::AssetKind kind, std::vector<registry::Port> ports = {},
                                    registry::Metadata meta = {}) {
  registry::AssetRecord r;
  r.id = AssetId(id);
  r.kind = kind;
  r.name = id;
  r.owner = "alice";
  r.visibility = registry::Visibility::Shared;
  r.version = 1;
  r.ports = std::move(ports);
  r.metadata = std::move(meta);
  return r;
}

/// Resolver with a few of every kind: d1..d4, m1..m4, f1..f4, t1..t4,
/// r1..r4. Every asset has an `in` and an `out` port.
inline registry::MapResolver standard_resolver() {
  using registry::AssetKind;
  registry::MapResolver res;
  const std::pair<const char*, AssetKind> kinds[] = {{"d", AssetKind::Data},
                                                     {"m", AssetKind::Model},
                                                     {"f", AssetKind::Function},
                                                     {"t", AssetKind::Tool},
                                                     {"r", AssetKind::ReadyDT}};
  for (const auto& [prefix, kind] : kinds) {
    for (int i = 1; i <= 4; ++i) {
      registry::Metadata meta;
      if (kind == AssetKind::Tool) meta["entry"] = "builtin:echo";
      if (kind == AssetKind::Function) meta["role"] = "analysis";
      res.add(record(prefix + std::to_string(i), kind, {in_port("in"), out_port("out")}, meta));
    }
  }
  return res;
}

inline config::ConfigDoc leaf_doc(const std::string& name, const std::string& f = "f1", const std::string& t = "t1") {
  config::ConfigDoc d;
  d.name = name;
  d.c_a.ft_pairs.push_back({AssetId(f), AssetId(t)});
  return d;
}

/// Ids of the generic assets registered by Stack::register_basic.
struct BasicAssets {
  AssetId data, model, function, tool;
};

/// Registry, hub, exec manager and a manual-mode engine over a temp dir.
struct Stack {
  explicit Stack(exec::PoolCapacity pool = {64, 65536})
      : clock(1'000'000),
        registry(dir / "assets"),
        hub(dir / "data", clock),
        exec(pool, clock),
        engine(registry, exec, hub, programs, clock, {exec::RunMode::Manual, dir / "state"}) {}

  BasicAssets register_basic(const UserId& user = "alice") {
    using registry::AssetKind;
    BasicAssets a;
    a.data = registry.register_asset({AssetKind::Data, "telemetry", {out_port("value")}, {}, {}, ""}, user);
    a.model = registry.register_asset({AssetKind::Model, "model", {out_port("params")}, {{"gain", 1.0}}, {}, "k=1"}, user);
    a.function = registry.register_asset(
        {AssetKind::Function, "estimator", {in_port("input"), in_port("model"), out_port("result")}, {},
         {{"role", "analysis"}}, ""},
        user);
    a.tool = registry.register_asset({AssetKind::Tool, "runner", {in_port("model")}, {}, {{"entry", "builtin:echo"}}, ""},
                                     user);
    return a;
  }

  /// Leaf composition over `a`, optionally wired to a PT sensor series.
  static config::ConfigDoc leaf(const BasicAssets& a, const std::string& name, const std::string& sensor_key = "") {
    config::ConfigDoc d;
    d.name = name;
    d.c_a.data = {a.data};
    d.c_a.models = {a.model};
    d.c_a.ft_pairs = {{a.function, a.tool}};
    d.c_a.connections = {config::parse_connection(a.data.str() + ".value -> " + a.function.str() + ".input"),
                         config::parse_connection(a.model.str() + ".params -> " + a.tool.str() + ".model")};
    d.c_a.parameters["gain"] = 1.0;
    if (!sensor_key.empty()) {
      d.c_pt.endpoint = "pt";
      d.c_pt.channels.push_back({"temp", config::ChannelRole::Sensor, sensor_key});
      d.c_a.connections.push_back(config::parse_connection("pt.temp -> " + a.function.str() + ".input"));
    }
    return d;
  }

  TempDir dir;
  ManualClock clock;
  registry::AssetRegistry registry;
  datahub::DataHub hub;
  exec::ExecManager exec;
  lifecycle::ProgramRegistry programs;
  lifecycle::LifecycleEngine engine;
};

/// Random document that validates against standard_resolver(): every
/// level has its own asset subset, parameters, PT channels, endpoints and
/// well-formed connections; levels below `max_depth` may nest children.
inline config::ConfigDoc random_doc(Gen& g, const std::string& name, int max_depth) {
  using namespace config;
  ConfigDoc d;
  d.name = name;
  auto subset = [&](char prefix, int lo) {
    std::vector<AssetId> ids;
    for (int i = 1; i <= 4; ++i) ids.emplace_back(std::string(1, prefix) + std::to_string(i));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[static_cast<std::size_t>(g.range(0, static_cast<std::int64_t>(i) - 1))]);
    ids.resize(static_cast<std::size_t>(g.range(lo, 3)));
    return ids;
  };
  d.c_a.data = subset('d', 0);
  d.c_a.models = subset('m', 0);
  if (max_depth > 0 && g.chance(0.4)) {
    const auto n = g.range(1, 3);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto child = name + "-" + std::to_string(i);
      d.c_a.child_dts.push_back(child);
      d.children.push_back(random_doc(g, child, max_depth - 1));
    }
  }
  const auto pairs = g.range(d.children.empty() ? 1 : 0, 3);
  for (std::int64_t i = 0; i < pairs; ++i) {
    d.c_a.ft_pairs.push_back({AssetId("f" + std::to_string(g.range(1, 4))), AssetId("t" + std::to_string(g.range(1, 4)))});
  }
  const auto nparams = g.range(0, 4);
  for (std::int64_t i = 0; i < nparams; ++i) {
    const auto key = "p" + std::to_string(g.range(0, 6));
    switch (g.range(0, 2)) {
      case 0: d.c_a.parameters[key] = g.real(-100.0, 100.0); break;
      case 1: d.c_a.parameters[key] = g.chance(0.5); break;
      default: d.c_a.parameters[key] = "v" + std::to_string(g.range(0, 99)); break;
    }
  }
  const std::vector<ChannelRole> roles = {ChannelRole::Sensor, ChannelRole::Event, ChannelRole::Actuator,
                                          ChannelRole::Command};
  const auto nch = g.range(0, 3);
  for (std::int64_t i = 0; i < nch; ++i) {
    const auto role = i == 0 ? ChannelRole::Sensor : g.pick(roles);
    d.c_pt.channels.push_back({"ch" + std::to_string(i), role, "pt." + name + ".ch" + std::to_string(i)});
  }
  if (nch > 0) d.c_pt.endpoint = "pt-" + name;
  const auto nep = g.range(0, 2);
  for (std::int64_t i = 0; i < nep; ++i) {
    d.c_e.endpoints.push_back({"ep" + std::to_string(i), "http://example/" + std::to_string(i),
                               g.chance(0.5) ? Direction::In : Direction::Out});
  }

  std::vector<std::string> consumers;  // F/T in-ports
  std::vector<std::string> producers;  // F/T out-ports
  for (const auto& p : d.c_a.ft_pairs) {
    consumers.push_back(p.function->str() + ".in");
    consumers.push_back(p.tool->str() + ".in");
    producers.push_back(p.function->str() + ".out");
    producers.push_back(p.tool->str() + ".out");
  }
  auto connect = [&](const std::string& from, const std::string& to) {
    d.c_a.connections.push_back(parse_connection(from + " -> " + to));
  };
  if (!consumers.empty()) {
    for (const auto& id : d.c_a.data) {
      if (g.chance(0.6)) connect(id.str() + ".out", g.pick(consumers));
    }
    for (const auto& id : d.c_a.models) {
      if (g.chance(0.6)) connect(id.str() + ".out", g.pick(consumers));
    }
    for (const auto& ch : d.c_pt.channels) {
      const bool emits = ch.role == ChannelRole::Sensor || ch.role == ChannelRole::Event;
      if (emits) {
        connect("pt." + ch.name, g.pick(consumers));
      } else {
        connect(g.pick(producers), "pt." + ch.name);
      }
    }
    for (const auto& ep : d.c_e.endpoints) {
      if (!g.chance(0.5)) continue;
      if (ep.direction == Direction::In) {
        connect("ext." + ep.name, g.pick(consumers));
      } else {
        connect(g.pick(producers), "ext." + ep.name);
      }
    }
  }
  for (const auto& child : d.c_a.child_dts) {
    if (!producers.empty() && g.chance(0.3)) connect(g.pick(producers), child + ".in");
  }

  const std::vector<WorkspaceFlavour> flavours = {WorkspaceFlavour::IsolatedProcess, WorkspaceFlavour::SharedPool,
                                                  WorkspaceFlavour::Dedicated};
  d.c_i.flavour = g.pick(flavours);
  d.c_i.cpu_units = g.range(1, 4);
  d.c_i.memory_mb = 64 * g.range(1, 8);
  d.c_i.tick_ms = 50 * g.range(1, 4);
  return d;
}

}  // namespace dtaas::test
