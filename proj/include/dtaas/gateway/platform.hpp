#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dtaas/common/clock.hpp"
#include "dtaas/datahub/data_hub.hpp"
#include "dtaas/exec/exec_manager.hpp"
#include "dtaas/gateway/auth.hpp"
#include "dtaas/incubator/demo.hpp"
#include "dtaas/incubator/emulator.hpp"
#include "dtaas/lifecycle/engine.hpp"
#include "dtaas/registry/asset_registry.hpp"

namespace dtaas::gateway {

/// Contents of platform.cfg (JSON, `//` comments allowed). Relative paths
/// are resolved against the file's directory.
struct PlatformConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  exec::PoolCapacity pool{16, 16384};
  std::filesystem::path asset_store = "var/assets";
  std::filesystem::path data_path = "var/data";
  std::filesystem::path state_path = "var/state";
  /// Realtime: runs tick on wall-clock threads. Manual: nothing moves until
  /// Platform::step (tests, scripted runs).
  exec::RunMode mode = exec::RunMode::Realtime;
  bool demo = true;
  /// Start the emulated incubator PT next to the demo assets.
  bool emulator = true;
  std::uint64_t seed = 42;
  std::vector<Principal> principals;
};

/// Throws Error(ParseError) / Error(InvalidArgument).
PlatformConfig parse_platform_config(std::string_view text, const std::filesystem::path& base_dir = ".");
PlatformConfig load_platform_config(const std::filesystem::path& file);

/// Every platform module wired together in one process.
class Platform {
 public:
  explicit Platform(PlatformConfig config);
  ~Platform();

  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  /// Manual mode only: `n` times, step the emulator and advance every
  /// Executing root instance by one tick. Throws Error(InvalidArgument) in
  /// realtime mode.
  void step(std::uint64_t n);

  const PlatformConfig& config() const noexcept { return config_; }
  const Clock& clock() const noexcept { return *clock_; }
  /// Present only in manual mode.
  ManualClock* manual_clock() noexcept { return manual_clock_; }
  registry::AssetRegistry& registry() { return *registry_; }
  datahub::DataHub& hub() { return *hub_; }
  exec::ExecManager& exec() { return *exec_; }
  lifecycle::LifecycleEngine& engine() { return *engine_; }
  TokenTable& tokens() { return tokens_; }
  incubator::PtEmulator* emulator() { return emulator_.get(); }
  const std::optional<incubator::DemoAssets>& demo_assets() const { return demo_assets_; }

 private:
  PlatformConfig config_;
  std::unique_ptr<Clock> clock_;
  ManualClock* manual_clock_ = nullptr;
  TokenTable tokens_;
  std::unique_ptr<registry::AssetRegistry> registry_;
  std::unique_ptr<datahub::DataHub> hub_;
  std::unique_ptr<exec::ExecManager> exec_;
  lifecycle::ProgramRegistry programs_;
  std::unique_ptr<lifecycle::LifecycleEngine> engine_;
  std::optional<incubator::DemoAssets> demo_assets_;
  std::unique_ptr<incubator::PtEmulator> emulator_;
};

}  // namespace dtaas::gateway
