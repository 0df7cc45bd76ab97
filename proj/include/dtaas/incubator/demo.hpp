#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/clock.hpp"
#include "dtaas/config/config_doc.hpp"
#include "dtaas/graph/rules.hpp"
#include "dtaas/incubator/emulator.hpp"
#include "dtaas/incubator/planner.hpp"
#include "dtaas/lifecycle/engine.hpp"
#include "dtaas/registry/asset_registry.hpp"

namespace dtaas::incubator {

inline constexpr std::string_view kDemoOwner = "demo";

/// Ids of the shared demo assets, keyed by asset name.
struct DemoAssets {
  std::map<std::string, AssetId> ids;

  const AssetId& at(const std::string& name) const { return ids.at(name); }
};

/// Registers (or finds) the six shared demo assets owned by "demo".
/// Idempotent; a fresh store assigns them asset-1 .. asset-6.
DemoAssets bootstrap_demo_assets(registry::AssetRegistry& registry);

/// configs/incubator.cfg and configs/incubator.rules as built in.
std::string_view incubator_config_text();
std::string_view incubator_rules_text();

/// The built-in config with its asset-1..6 references rewritten to the
/// actual ids in `assets`.
config::ConfigDoc demo_config(const DemoAssets& assets);
std::vector<graph::RuleSpec> demo_rules();

/// Emulator matching the plant constants of `doc` (sensor noise 0.05 °C).
EmulatorOptions emulator_options(const config::ConfigDoc& doc, std::uint64_t seed);

struct ScenarioOptions {
  std::uint64_t ticks = 2000;
  /// Offsets from the scenario start.
  std::optional<std::int64_t> lid_open_at_ms;
  std::optional<std::int64_t> lid_close_at_ms;
  double t_init = 35.0;
};

/// Timeline of one closed-loop run; times are offsets from the start.
struct ScenarioReport {
  InstanceId instance;
  std::uint64_t ticks = 0;
  std::optional<std::int64_t> lid_open_at_ms;
  std::optional<std::int64_t> detected_at_ms;
  std::optional<std::int64_t> rule_applied_at_ms;
  std::optional<std::int64_t> replanned_at_ms;
  /// First tick after re-planning with the true temperature inside the
  /// new setpoint ± band.
  std::optional<std::int64_t> reentered_at_ms;
  std::size_t anomaly_events = 0;
  std::size_t error_events = 0;
  ControllerParams controller;
  double t_box = 0.0;
  std::optional<double> g_hat;
  /// Largest |T - setpoint| after warm-up and before any lid event.
  double max_deviation = 0.0;
};

nlohmann::json to_json(const ScenarioReport& r);

/// Self-contained platform stack for the incubator: registry, hub,
/// execution manager and a manual-mode engine on a hand-driven clock, plus
/// the emulated PT. run() steps PT and DT in lockstep.
class IncubatorStack {
 public:
  IncubatorStack(const std::filesystem::path& root, std::uint64_t seed,
                 exec::PoolCapacity pool = {16, 16384});
  ~IncubatorStack();

  /// Creates and executes the demo twin (once); returns its id.
  InstanceId start(double t_init = 35.0);
  ScenarioReport run(const ScenarioOptions& options);

  lifecycle::LifecycleEngine& engine() { return *engine_; }
  datahub::DataHub& hub() { return *hub_; }
  exec::ExecManager& exec() { return *exec_; }
  registry::AssetRegistry& registry() { return *registry_; }
  PtEmulator& emulator() { return *emulator_; }
  ManualClock& clock() { return clock_; }
  const DemoAssets& assets() const { return assets_; }
  const config::ConfigDoc& config() const { return config_; }

 private:
  ManualClock clock_;
  std::uint64_t seed_;
  std::unique_ptr<registry::AssetRegistry> registry_;
  std::unique_ptr<datahub::DataHub> hub_;
  std::unique_ptr<exec::ExecManager> exec_;
  lifecycle::ProgramRegistry programs_;
  std::unique_ptr<lifecycle::LifecycleEngine> engine_;
  DemoAssets assets_;
  config::ConfigDoc config_;
  std::unique_ptr<PtEmulator> emulator_;
  std::optional<InstanceId> instance_;
};

}  // namespace dtaas::incubator
