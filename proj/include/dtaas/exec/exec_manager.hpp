#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dtaas/common/clock.hpp"
#include "dtaas/common/flavour.hpp"
#include "dtaas/common/ids.hpp"

namespace dtaas::exec {

struct PoolCapacity {
  std::int64_t cpu_units = 0;
  std::int64_t memory_mb = 0;

  friend bool operator==(const PoolCapacity&, const PoolCapacity&) = default;
};

enum class WorkspaceStatus { Active, Released };

struct Workspace {
  WorkspaceId id;
  WorkspaceFlavour flavour = WorkspaceFlavour::IsolatedProcess;
  std::int64_t cpu_units = 0;
  std::int64_t memory_mb = 0;
  WorkspaceStatus status = WorkspaceStatus::Active;
  InstanceId instance;
  UserId owner;
  std::int64_t provisioned_at_ms = 0;
  std::int64_t released_at_ms = 0;
};

/// Higher runs first when the platform orders work across workspaces.
int flavour_priority(WorkspaceFlavour f) noexcept;

enum class RunMode { Manual, Realtime };
enum class RunStatus { Running, Stopped };

struct RunInfo {
  RunId id;
  WorkspaceId workspace;
  RunMode mode = RunMode::Manual;
  std::int64_t tick_ms = 0;
  std::uint64_t ticks = 0;
  std::uint64_t missed_deadlines = 0;
  RunStatus status = RunStatus::Running;
};

/// Per-user counters; every field only ever grows.
struct UsageView {
  UserId user;
  double workspace_seconds = 0.0;
  std::uint64_t ticks = 0;
  std::uint64_t asset_bytes = 0;
  std::uint64_t workspaces_provisioned = 0;
  std::uint64_t workspaces_released = 0;
};

nlohmann::json to_json(const Workspace& w);
nlohmann::json to_json(const RunInfo& r);
nlohmann::json to_json(const UsageView& u);

/// Simulated workspaces over a fixed capacity pool, plus the step loops
/// that drive executing instances.
class ExecManager {
 public:
  /// Receives the 1-based tick number. Called without manager locks held.
  using TickFn = std::function<void(std::uint64_t tick)>;

  ExecManager(PoolCapacity pool, const Clock& clock);
  ~ExecManager();

  ExecManager(const ExecManager&) = delete;
  ExecManager& operator=(const ExecManager&) = delete;

  /// Throws Error(CapacityExhausted) or Error(InvalidArgument) for
  /// nonpositive requests.
  Workspace provision(WorkspaceFlavour flavour, std::int64_t cpu_units, std::int64_t memory_mb,
                      const InstanceId& instance, const UserId& owner);
  /// Stops any run still bound to the workspace. Throws Error(NotFound) or
  /// Error(AlreadyReleased).
  void release(const WorkspaceId& id);

  Workspace workspace(const WorkspaceId& id) const;
  std::vector<Workspace> workspaces(bool active_only = false) const;
  std::size_t active_count() const;
  PoolCapacity capacity() const noexcept { return pool_; }
  PoolCapacity available() const;

  /// Throws Error(WorkspaceReleased) / Error(NotFound). Realtime runs tick on
  /// their own thread every `tick_ms`; manual runs tick only via advance().
  RunId spawn_run(const WorkspaceId& ws, std::int64_t tick_ms, TickFn fn, RunMode mode,
                  std::uint64_t start_tick = 0);
  /// Halts after the in-flight tick completes. Idempotent; safe to call
  /// from inside the run's own tick.
  void stop_run(const RunId& id);
  /// Runs `n` ticks synchronously on a manual run; returns the tick counter.
  std::uint64_t advance(const RunId& id, std::uint64_t n);
  RunInfo run(const RunId& id) const;

  void record_asset_bytes(const UserId& user, std::uint64_t bytes);
  UsageView usage_report(const UserId& user) const;
  std::vector<UsageView> usage_all() const;

 private:
  struct Run;

  void run_loop(const std::shared_ptr<Run>& run);
  std::shared_ptr<Run> find_run(const RunId& id) const;
  void count_tick(const Run& run);
  void join_stopped();

  const PoolCapacity pool_;
  const Clock& clock_;

  mutable std::mutex mu_;
  std::map<WorkspaceId, Workspace> workspaces_;
  std::map<RunId, std::shared_ptr<Run>> runs_;
  std::map<UserId, UsageView> usage_;
  std::uint64_t next_workspace_ = 1;
  std::uint64_t next_run_ = 1;
};

}  // namespace dtaas::exec
