#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/ids.hpp"
#include "dtaas/config/config_doc.hpp"
#include "dtaas/datahub/data_hub.hpp"

namespace dtaas::lifecycle {

class LifecycleEngine;

/// Deferred work a program asks the engine to perform once the tick has
/// returned (evolve, what-if, commands that need lifecycle operations).
using Action = std::function<void(LifecycleEngine&)>;

/// Series keys a DT writes are prefixed with `dt.<instance>.`.
std::string instance_series(const InstanceId& id, std::string_view name);

struct TickContext {
  InstanceId instance;
  std::uint64_t tick = 0;
  std::int64_t now_ms = 0;
  const config::ConfigDoc& config;
  datahub::DataHub& hub;
  std::vector<Action>& actions;

  void post(Action a) const { actions.push_back(std::move(a)); }
  std::string series(std::string_view name) const { return instance_series(instance, name); }
};

enum class AnalysisMode { Auto, Live, Historical };

std::string_view analysis_mode_name(AnalysisMode m) noexcept;
std::optional<AnalysisMode> parse_analysis_mode(std::string_view text) noexcept;

struct AnalysisRequest {
  AnalysisMode mode = AnalysisMode::Auto;
  std::int64_t t0 = std::numeric_limits<std::int64_t>::min();
  std::int64_t t1 = std::numeric_limits<std::int64_t>::max();
  nlohmann::json params = nlohmann::json::object();
};

struct AnalysisContext {
  InstanceId instance;
  const config::ConfigDoc& config;
  datahub::DataHub& hub;
  std::int64_t now_ms = 0;
};

/// Behaviour behind a running DT, selected from the `entry` metadata of the
/// configuration's tool (or ready DT) asset.
class DtProgram {
 public:
  virtual ~DtProgram() = default;

  virtual void on_tick(const TickContext& ctx) = 0;
  virtual void on_config_changed(const config::ConfigDoc& /*prev*/, const config::ConfigDoc& /*next*/) {}

  virtual nlohmann::json save_state() const = 0;
  virtual void load_state(const nlohmann::json& state) = 0;

  /// Live analysis over the program's own state. Hidden-quantity
  /// estimates are appended to the hub as well as returned.
  virtual nlohmann::json analyse(const AnalysisRequest& req, const AnalysisContext& ctx) = 0;
  /// Historical analysis: rebuild the same outputs from stored input series
  /// in [t0, t1] on a fresh program. Throws Error(NoHistory) when there is
  /// nothing to replay.
  virtual nlohmann::json replay(const AnalysisRequest& req, const AnalysisContext& ctx) = 0;
};

using ProgramFactory = std::function<std::unique_ptr<DtProgram>(const config::ConfigDoc&)>;

inline constexpr std::string_view kEchoEntry = "builtin:echo";

/// Maps tool entry points onto in-process programs. Unknown entries fall
/// back to the echo program.
class ProgramRegistry {
 public:
  ProgramRegistry();

  void add(std::string entry, ProgramFactory factory);
  bool knows(std::string_view entry) const;
  std::unique_ptr<DtProgram> make(std::string_view entry, const config::ConfigDoc& doc) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ProgramFactory, std::less<>> factories_;
};

/// Generic program: mirrors every sensor/event channel into the instance's
/// own series and keeps per-channel running means as its analysis output.
class EchoProgram final : public DtProgram {
 public:
  explicit EchoProgram(const config::ConfigDoc& doc);

  void on_tick(const TickContext& ctx) override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;
  nlohmann::json analyse(const AnalysisRequest& req, const AnalysisContext& ctx) override;
  nlohmann::json replay(const AnalysisRequest& req, const AnalysisContext& ctx) override;

 private:
  struct Channel {
    std::string key;
    std::optional<std::int64_t> cursor;
    std::uint64_t count = 0;
    double sum = 0.0;
  };

  void consume(Channel& ch, const std::vector<datahub::SeriesPoint>& pts);
  nlohmann::json summary() const;

  std::map<std::string, Channel> channels_;
};

}  // namespace dtaas::lifecycle
