#include "dtaas/exec/exec_manager.hpp"

#include <spdlog/spdlog.h>

#include "dtaas/common/error.hpp"

namespace dtaas::exec {

using nlohmann::json;

struct ExecManager::Run {
  RunId id;
  WorkspaceId workspace;
  UserId owner;
  RunMode mode;
  std::int64_t tick_ms;
  TickFn fn;
  std::atomic<std::uint64_t> ticks{0};
  std::atomic<std::uint64_t> missed{0};
  std::atomic<bool> stop{false};
  std::mutex wake_mu;
  std::condition_variable wake;
  std::mutex tick_mu;  // held while a tick is in flight
  std::atomic<std::thread::id> ticking{};
  std::thread thread;
};

int flavour_priority(WorkspaceFlavour f) noexcept {
  switch (f) {
    case WorkspaceFlavour::Dedicated: return 2;
    case WorkspaceFlavour::IsolatedProcess: return 1;
    case WorkspaceFlavour::SharedPool: return 0;
  }
  return 0;
}

json to_json(const Workspace& w) {
  return {{"id", w.id.str()},
          {"flavour", flavour_name(w.flavour)},
          {"cpu_units", w.cpu_units},
          {"memory_mb", w.memory_mb},
          {"status", w.status == WorkspaceStatus::Active ? "active" : "released"},
          {"instance", w.instance.str()},
          {"owner", w.owner},
          {"priority", flavour_priority(w.flavour)},
          {"provisioned_at_ms", w.provisioned_at_ms},
          {"released_at_ms", w.released_at_ms}};
}

json to_json(const RunInfo& r) {
  return {{"id", r.id.str()},
          {"workspace", r.workspace.str()},
          {"mode", r.mode == RunMode::Manual ? "manual" : "realtime"},
          {"tick_ms", r.tick_ms},
          {"ticks", r.ticks},
          {"missed_deadlines", r.missed_deadlines},
          {"status", r.status == RunStatus::Running ? "running" : "stopped"}};
}

json to_json(const UsageView& u) {
  return {{"user", u.user},
          {"workspace_seconds", u.workspace_seconds},
          {"ticks", u.ticks},
          {"asset_bytes", u.asset_bytes},
          {"workspaces_provisioned", u.workspaces_provisioned},
          {"workspaces_released", u.workspaces_released}};
}

ExecManager::ExecManager(PoolCapacity pool, const Clock& clock) : pool_(pool), clock_(clock) {
  if (pool.cpu_units <= 0 || pool.memory_mb <= 0) {
    throw Error(Errc::InvalidArgument, "pool capacity must be positive");
  }
}

ExecManager::~ExecManager() {
  std::vector<std::shared_ptr<Run>> runs;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, r] : runs_) runs.push_back(r);
  }
  for (auto& r : runs) {
    r->stop = true;
    r->wake.notify_all();
  }
  for (auto& r : runs) {
    if (r->thread.joinable()) r->thread.join();
  }
}

Workspace ExecManager::provision(WorkspaceFlavour flavour, std::int64_t cpu_units, std::int64_t memory_mb,
                                 const InstanceId& instance, const UserId& owner) {
  if (cpu_units <= 0 || memory_mb <= 0) throw Error(Errc::InvalidArgument, "workspace resources must be positive");
  std::lock_guard lock(mu_);
  std::int64_t cpu = 0, mem = 0;
  for (const auto& [id, w] : workspaces_) {
    if (w.status != WorkspaceStatus::Active) continue;
    cpu += w.cpu_units;
    mem += w.memory_mb;
  }
  if (cpu + cpu_units > pool_.cpu_units || mem + memory_mb > pool_.memory_mb) {
    throw Error(Errc::CapacityExhausted,
                "pool exhausted: requested " + std::to_string(cpu_units) + " cpu/" + std::to_string(memory_mb) +
                    " MB, available " + std::to_string(pool_.cpu_units - cpu) + " cpu/" +
                    std::to_string(pool_.memory_mb - mem) + " MB");
  }
  Workspace w;
  w.id = WorkspaceId("ws-" + std::to_string(next_workspace_++));
  w.flavour = flavour;
  w.cpu_units = cpu_units;
  w.memory_mb = memory_mb;
  w.instance = instance;
  w.owner = owner;
  w.provisioned_at_ms = clock_.now_ms();
  workspaces_.emplace(w.id, w);
  auto& u = usage_[owner];
  u.user = owner;
  ++u.workspaces_provisioned;
  return w;
}

void ExecManager::release(const WorkspaceId& id) {
  std::vector<RunId> bound;
  {
    std::lock_guard lock(mu_);
    auto it = workspaces_.find(id);
    if (it == workspaces_.end()) throw Error(Errc::NotFound, "no workspace '" + id.str() + "'");
    if (it->second.status == WorkspaceStatus::Released) {
      throw Error(Errc::AlreadyReleased, "workspace '" + id.str() + "' already released");
    }
    for (const auto& [rid, r] : runs_) {
      if (r->workspace == id && !r->stop) bound.push_back(rid);
    }
  }
  for (const auto& rid : bound) stop_run(rid);
  std::lock_guard lock(mu_);
  auto& w = workspaces_.at(id);
  if (w.status == WorkspaceStatus::Released) {
    throw Error(Errc::AlreadyReleased, "workspace '" + id.str() + "' already released");
  }
  w.status = WorkspaceStatus::Released;
  w.released_at_ms = clock_.now_ms();
  auto& u = usage_[w.owner];
  u.user = w.owner;
  u.workspace_seconds += static_cast<double>(w.released_at_ms - w.provisioned_at_ms) / 1000.0;
  ++u.workspaces_released;
}

Workspace ExecManager::workspace(const WorkspaceId& id) const {
  std::lock_guard lock(mu_);
  auto it = workspaces_.find(id);
  if (it == workspaces_.end()) throw Error(Errc::NotFound, "no workspace '" + id.str() + "'");
  return it->second;
}

std::vector<Workspace> ExecManager::workspaces(bool active_only) const {
  std::lock_guard lock(mu_);
  std::vector<Workspace> out;
  for (const auto& [id, w] : workspaces_) {
    if (!active_only || w.status == WorkspaceStatus::Active) out.push_back(w);
  }
  return out;
}

std::size_t ExecManager::active_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [id, w] : workspaces_) n += w.status == WorkspaceStatus::Active;
  return n;
}

PoolCapacity ExecManager::available() const {
  std::lock_guard lock(mu_);
  PoolCapacity left = pool_;
  for (const auto& [id, w] : workspaces_) {
    if (w.status != WorkspaceStatus::Active) continue;
    left.cpu_units -= w.cpu_units;
    left.memory_mb -= w.memory_mb;
  }
  return left;
}

RunId ExecManager::spawn_run(const WorkspaceId& ws, std::int64_t tick_ms, TickFn fn, RunMode mode,
                             std::uint64_t start_tick) {
  if (tick_ms <= 0) throw Error(Errc::InvalidArgument, "tick period must be positive");
  join_stopped();
  std::shared_ptr<Run> run;
  {
    std::lock_guard lock(mu_);
    auto it = workspaces_.find(ws);
    if (it == workspaces_.end()) throw Error(Errc::NotFound, "no workspace '" + ws.str() + "'");
    if (it->second.status != WorkspaceStatus::Active) {
      throw Error(Errc::WorkspaceReleased, "workspace '" + ws.str() + "' was released");
    }
    run = std::make_shared<Run>();
    run->id = RunId("run-" + std::to_string(next_run_++));
    run->workspace = ws;
    run->owner = it->second.owner;
    run->mode = mode;
    run->tick_ms = tick_ms;
    run->fn = std::move(fn);
    run->ticks = start_tick;
    runs_.emplace(run->id, run);
  }
  if (mode == RunMode::Realtime) run->thread = std::thread([this, run] { run_loop(run); });
  return run->id;
}

void ExecManager::count_tick(const Run& run) {
  std::lock_guard lock(mu_);
  auto& u = usage_[run.owner];
  u.user = run.owner;
  ++u.ticks;
}

void ExecManager::run_loop(const std::shared_ptr<Run>& run) {
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::milliseconds(run->tick_ms);
  auto deadline = clock::now() + period;
  while (true) {
    {
      std::unique_lock lock(run->wake_mu);
      run->wake.wait_until(lock, deadline, [&] { return run->stop.load(); });
    }
    if (run->stop) break;
    {
      std::lock_guard tick(run->tick_mu);
      if (run->stop) break;
      const auto n = ++run->ticks;
      try {
        run->fn(n);
      } catch (const std::exception& e) {
        spdlog::error("run {} tick {} failed: {}", run->id.str(), n, e.what());
      }
    }
    count_tick(*run);
    deadline += period;
    if (clock::now() > deadline) {
      ++run->missed;
      deadline = clock::now();
    }
  }
}

std::shared_ptr<ExecManager::Run> ExecManager::find_run(const RunId& id) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(id);
  if (it == runs_.end()) throw Error(Errc::NotFound, "no run '" + id.str() + "'");
  return it->second;
}

void ExecManager::stop_run(const RunId& id) {
  auto run = find_run(id);
  run->stop = true;
  run->wake.notify_all();
  if (run->mode == RunMode::Realtime && run->thread.joinable() &&
      run->thread.get_id() != std::this_thread::get_id()) {
    run->thread.join();
  } else if (run->mode == RunMode::Manual && run->ticking.load() != std::this_thread::get_id()) {
    // Wait out a tick in flight on another thread.
    std::lock_guard wait(run->tick_mu);
  }
}

void ExecManager::join_stopped() {
  std::vector<std::shared_ptr<Run>> done;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, r] : runs_) {
      if (r->stop && r->thread.joinable() && r->thread.get_id() != std::this_thread::get_id()) done.push_back(r);
    }
  }
  for (auto& r : done) {
    if (r->thread.joinable()) r->thread.join();
  }
}

std::uint64_t ExecManager::advance(const RunId& id, std::uint64_t n) {
  auto run = find_run(id);
  if (run->mode != RunMode::Manual) throw Error(Errc::InvalidArgument, "run '" + id.str() + "' is not manual");
  for (std::uint64_t i = 0; i < n && !run->stop; ++i) {
    {
      std::lock_guard tick(run->tick_mu);
      if (run->stop) break;
      run->ticking = std::this_thread::get_id();
      try {
        run->fn(++run->ticks);
      } catch (...) {
        run->ticking = std::thread::id();
        throw;
      }
      run->ticking = std::thread::id();
    }
    count_tick(*run);
  }
  return run->ticks;
}

RunInfo ExecManager::run(const RunId& id) const {
  auto r = find_run(id);
  return {r->id, r->workspace, r->mode, r->tick_ms, r->ticks.load(), r->missed.load(),
          r->stop ? RunStatus::Stopped : RunStatus::Running};
}

void ExecManager::record_asset_bytes(const UserId& user, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  auto& u = usage_[user];
  u.user = user;
  u.asset_bytes += bytes;
}

UsageView ExecManager::usage_report(const UserId& user) const {
  std::lock_guard lock(mu_);
  UsageView view;
  view.user = user;
  if (auto it = usage_.find(user); it != usage_.end()) view = it->second;
  const auto now = clock_.now_ms();
  for (const auto& [id, w] : workspaces_) {
    if (w.owner == user && w.status == WorkspaceStatus::Active) {
      view.workspace_seconds += static_cast<double>(now - w.provisioned_at_ms) / 1000.0;
    }
  }
  return view;
}

std::vector<UsageView> ExecManager::usage_all() const {
  std::vector<UserId> users;
  {
    std::lock_guard lock(mu_);
    for (const auto& [u, v] : usage_) users.push_back(u);
  }
  std::vector<UsageView> out;
  for (const auto& u : users) out.push_back(usage_report(u));
  return out;
}

}  // namespace dtaas::exec
