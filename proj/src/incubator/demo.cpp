#include "dtaas/incubator/demo.hpp"

#include <cmath>

#include "dtaas/common/error.hpp"
#include "dtaas/config/parser.hpp"
#include "dtaas/incubator/twin.hpp"

namespace dtaas::incubator {

namespace fs = std::filesystem;
using nlohmann::json;
using registry::AssetKind;
using registry::NewAsset;
using registry::PayloadKind;
using registry::Port;
using registry::PortDirection;

namespace {

Port in(std::string name, PayloadKind payload = PayloadKind::Data) {
  return {std::move(name), PortDirection::In, payload};
}
Port out(std::string name, PayloadKind payload = PayloadKind::Data) {
  return {std::move(name), PortDirection::Out, payload};
}

std::vector<NewAsset> demo_asset_specs() {
  std::vector<NewAsset> v;

  NewAsset telemetry;
  telemetry.kind = AssetKind::Data;
  telemetry.name = "incubator-telemetry";
  telemetry.ports = {out("t_box"), out("heater"), out("lid")};
  telemetry.metadata = {{"series", "inc.t_box,inc.heater,inc.lid"}, {"unit.t_box", "degC"}};
  v.push_back(telemetry);

  NewAsset model;
  model.kind = AssetKind::Model;
  model.name = "thermal-2p";
  model.ports = {out("params")};
  model.params = {{"heat_capacity", 300.0}, {"conductance_closed", 2.0}, {"conductance_open", 8.0},
                  {"heater_power", 150.0}, {"ambient", 21.0}};
  model.metadata = {{"range.band", "(0,10]"}, {"range.setpoint", "[20,60]"}, {"range.conductance", "(0,inf)"}};
  model.content = params_to_json(model.params).dump(2) + "\n";
  v.push_back(model);

  NewAsset rls;
  rls.kind = AssetKind::Function;
  rls.name = "rls-estimator";
  rls.ports = {in("temperature"), in("heater"), in("model"), out("g_hat")};
  rls.metadata = {{"role", "analysis"}, {"estimates", "conductance"}};
  v.push_back(rls);

  NewAsset detector;
  detector.kind = AssetKind::Function;
  detector.name = "anomaly-detector";
  detector.ports = {in("telemetry"), in("g_hat"), out("anomaly", PayloadKind::Event)};
  detector.metadata = {{"role", "detector"}};
  v.push_back(detector);

  NewAsset planner;
  planner.kind = AssetKind::Function;
  planner.name = "whatif-planner";
  planner.ports = {in("anomaly", PayloadKind::Event), out("plan", PayloadKind::Command)};
  planner.metadata = {{"role", "planner"},
                      {"candidates", json::array({{{"setpoint", 35.0}, {"band", 0.25}},
                                                  {{"setpoint", 35.0}, {"band", 0.5}},
                                                  {{"setpoint", 35.0}, {"band", 1.0}},
                                                  {{"setpoint", 35.0}, {"band", 2.0}}})
                                         .dump()}};
  v.push_back(planner);

  NewAsset sim;
  sim.kind = AssetKind::Tool;
  sim.name = "euler-sim";
  sim.ports = {in("model")};
  sim.metadata = {{std::string(registry::kEntryKey), std::string(kIncubatorEntry)}};
  v.push_back(sim);
  return v;
}

// Placeholder ids used by the shipped config, in registration order.
const std::vector<std::string>& canonical_ids() {
  static const std::vector<std::string> ids = {"asset-1", "asset-2", "asset-3", "asset-4", "asset-5", "asset-6"};
  return ids;
}

}  // namespace

DemoAssets bootstrap_demo_assets(registry::AssetRegistry& registry) {
  const UserId owner(kDemoOwner);
  DemoAssets out;
  for (auto& spec : demo_asset_specs()) {
    registry::AssetQuery q;
    q.kind = spec.kind;
    q.owner = owner;
    std::optional<AssetId> found;
    for (const auto& r : registry.list_assets(q, owner)) {
      if (r.name == spec.name) found = r.id;
    }
    const auto name = spec.name;
    if (!found) found = registry.register_asset(std::move(spec), owner);
    if (registry.get_asset(*found, owner).visibility != registry::Visibility::Shared) {
      registry.share_asset(*found, owner);
    }
    out.ids.emplace(name, *found);
  }
  return out;
}

config::ConfigDoc demo_config(const DemoAssets& assets) {
  static const std::vector<std::string> names = {"incubator-telemetry", "thermal-2p",   "rls-estimator",
                                                 "anomaly-detector",    "whatif-planner", "euler-sim"};
  std::map<std::string, std::string> remap;
  for (std::size_t i = 0; i < names.size(); ++i) remap[canonical_ids()[i]] = assets.at(names[i]).str();
  auto doc = config::parse_config(incubator_config_text());
  auto fix = [&](AssetId& id) {
    if (auto it = remap.find(id.str()); it != remap.end()) id = AssetId(it->second);
  };
  auto fix_ref = [&](std::string& ref) {
    if (auto it = remap.find(ref); it != remap.end()) ref = it->second;
  };
  for (auto& id : doc.c_a.data) fix(id);
  for (auto& id : doc.c_a.models) fix(id);
  for (auto& id : doc.c_a.ready_dts) fix(id);
  for (auto& p : doc.c_a.ft_pairs) {
    if (p.function) fix(*p.function);
    if (p.tool) fix(*p.tool);
  }
  for (auto& c : doc.c_a.connections) {
    fix_ref(c.producer.ref);
    fix_ref(c.consumer.ref);
  }
  return doc;
}

std::vector<graph::RuleSpec> demo_rules() { return graph::load_rules(incubator_rules_text()); }

EmulatorOptions emulator_options(const config::ConfigDoc& doc, std::uint64_t seed) {
  const auto p = TwinParams::from(doc);
  EmulatorOptions o;
  o.plant = p.plant;
  o.plant.sensor_noise_std = 0.05;
  o.controller = p.controller;
  o.seed = seed;
  o.tick_ms = doc.c_i.tick_ms;
  o.connector = doc.c_pt.endpoint.empty() ? "incubator" : doc.c_pt.endpoint;
  return o;
}

json to_json(const ScenarioReport& r) {
  auto opt = [](const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); };
  return {{"instance", r.instance.str()},
          {"ticks", r.ticks},
          {"lid_open_at_ms", opt(r.lid_open_at_ms)},
          {"detected_at_ms", opt(r.detected_at_ms)},
          {"rule_applied_at_ms", opt(r.rule_applied_at_ms)},
          {"replanned_at_ms", opt(r.replanned_at_ms)},
          {"reentered_at_ms", opt(r.reentered_at_ms)},
          {"anomaly_events", r.anomaly_events},
          {"error_events", r.error_events},
          {"controller", to_json(r.controller)},
          {"t_box", r.t_box},
          {"g_hat", r.g_hat ? json(*r.g_hat) : json(nullptr)},
          {"max_deviation", r.max_deviation}};
}

IncubatorStack::IncubatorStack(const fs::path& root, std::uint64_t seed, exec::PoolCapacity pool) : seed_(seed) {
  fs::create_directories(root);
  registry_ = std::make_unique<registry::AssetRegistry>(root / "assets");
  hub_ = std::make_unique<datahub::DataHub>(root / "data", clock_);
  exec_ = std::make_unique<exec::ExecManager>(pool, clock_);
  register_programs(programs_);
  lifecycle::EngineOptions opts;
  opts.mode = exec::RunMode::Manual;
  opts.state_root = root / "state";
  engine_ = std::make_unique<lifecycle::LifecycleEngine>(*registry_, *exec_, *hub_, programs_, clock_, opts);
  for (auto& spec : demo_rules()) engine_->add_rule_spec(std::move(spec));
  assets_ = bootstrap_demo_assets(*registry_);
  config_ = demo_config(assets_);
}

IncubatorStack::~IncubatorStack() {
  engine_.reset();
  emulator_.reset();
}

InstanceId IncubatorStack::start(double t_init) {
  if (instance_) return *instance_;
  auto opts = emulator_options(config_, seed_);
  opts.initial.t_box = t_init;
  emulator_ = std::make_unique<PtEmulator>(*hub_, opts, clock_.now_ms());
  instance_ = engine_->create_dt(config_, std::string(kDemoOwner)).id;
  engine_->execute_dt(*instance_);
  return *instance_;
}

ScenarioReport IncubatorStack::run(const ScenarioOptions& options) {
  const auto id = start(options.t_init);
  ScenarioReport r;
  r.instance = id;
  const auto t0 = emulator_->now_ms();
  auto last_event = hub_->last_event_id();
  bool opened = false, closed = false, settled = false;
  for (std::uint64_t i = 0; i < options.ticks; ++i) {
    const auto rel = emulator_->now_ms() - t0;
    if (options.lid_open_at_ms && !opened && rel >= *options.lid_open_at_ms) {
      emulator_->set_lid(true);
      opened = true;
      r.lid_open_at_ms = rel;
    }
    if (options.lid_close_at_ms && !closed && rel >= *options.lid_close_at_ms) {
      emulator_->set_lid(false);
      closed = true;
    }
    clock_.set(emulator_->now_ms());
    emulator_->step();
    engine_->advance(id, 1);
    ++r.ticks;

    datahub::EventFilter mine;
    mine.origin = id.str();
    for (const auto& e : hub_->poll_events(last_event, mine)) {
      if (e.type == kLidOpen || e.type == kLidClosed) {
        ++r.anomaly_events;
        if (e.type == kLidOpen && !r.detected_at_ms) r.detected_at_ms = rel;
      } else if (e.type == "config-changed" && e.payload.value("rule", json()) == json("lid-open-model") &&
                 !r.rule_applied_at_ms) {
        r.rule_applied_at_ms = rel;
      } else if (e.type == "replanned" && e.payload.value("applied", false) && r.detected_at_ms &&
                 !r.replanned_at_ms) {
        r.replanned_at_ms = rel;
      } else if (e.type == "error") {
        ++r.error_events;
      }
    }
    last_event = hub_->last_event_id();

    const auto s = emulator_->state();
    const auto c = emulator_->controller();
    const double dev = std::abs(s.t_box - c.setpoint);
    if (!opened) {
      settled = settled || dev <= c.band;
      if (settled) r.max_deviation = std::max(r.max_deviation, dev);
    }
    if (r.replanned_at_ms && !r.reentered_at_ms && dev <= c.band) r.reentered_at_ms = rel;
  }
  r.controller = emulator_->controller();
  r.t_box = emulator_->state().t_box;
  if (auto g = hub_->latest(lifecycle::instance_series(id, "g_hat"))) r.g_hat = g->value;
  return r;
}

}  // namespace dtaas::incubator
