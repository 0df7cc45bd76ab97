#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "dtaas/common/error.hpp"
#include "dtaas/exec/exec_manager.hpp"
#include "support.hpp"

using namespace dtaas;
using namespace dtaas::exec;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Internal;
}

}  // namespace

TEST_CASE("capacity arithmetic") {
  ManualClock clock(0);
  ExecManager ex({4, 1024}, clock);
  const auto a = ex.provision(WorkspaceFlavour::Dedicated, 2, 512, InstanceId("dt-1"), "alice");
  const auto b = ex.provision(WorkspaceFlavour::SharedPool, 2, 256, InstanceId("dt-2"), "alice");
  CHECK(ex.available() == PoolCapacity{0, 256});
  CHECK(code_of([&] { ex.provision(WorkspaceFlavour::SharedPool, 1, 1, InstanceId("dt-3"), "bob"); }) ==
        Errc::CapacityExhausted);
  CHECK(code_of([&] { ex.provision(WorkspaceFlavour::SharedPool, 0, 1, InstanceId("dt-3"), "bob"); }) ==
        Errc::InvalidArgument);
  CHECK(ex.active_count() == 2);

  ex.release(a.id);
  CHECK(ex.available() == PoolCapacity{2, 768});
  CHECK(ex.workspace(a.id).status == WorkspaceStatus::Released);
  CHECK(code_of([&] { ex.release(a.id); }) == Errc::AlreadyReleased);
  CHECK(code_of([&] { ex.release(WorkspaceId("ws-99")); }) == Errc::NotFound);
  CHECK(ex.workspaces(true).size() == 1);
  CHECK(ex.workspaces().size() == 2);
  CHECK(ex.provision(WorkspaceFlavour::IsolatedProcess, 2, 768, InstanceId("dt-3"), "bob").id != b.id);
  CHECK(flavour_priority(WorkspaceFlavour::Dedicated) > flavour_priority(WorkspaceFlavour::SharedPool));
}

TEST_CASE("random provision and release keeps the pool consistent") {
  ManualClock clock(0);
  test::Gen gen(8);
  ExecManager ex({10, 1000}, clock);
  std::vector<Workspace> live;
  std::int64_t cpu = 0, mem = 0;
  for (int i = 0; i < 500; ++i) {
    if (gen.chance(0.6) || live.empty()) {
      const auto c = gen.range(1, 4), m = gen.range(1, 400);
      const bool fits = cpu + c <= 10 && mem + m <= 1000;
      try {
        live.push_back(ex.provision(WorkspaceFlavour::SharedPool, c, m, InstanceId("dt"), "alice"));
        CHECK(fits);
        cpu += c;
        mem += m;
      } catch (const Error& e) {
        CHECK_FALSE(fits);
        CHECK(e.code() == Errc::CapacityExhausted);
      }
    } else {
      const auto k = static_cast<std::size_t>(gen.range(0, static_cast<std::int64_t>(live.size()) - 1));
      ex.release(live[k].id);
      cpu -= live[k].cpu_units;
      mem -= live[k].memory_mb;
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
    }
    CHECK(ex.available() == PoolCapacity{10 - cpu, 1000 - mem});
    CHECK(ex.active_count() == live.size());
  }
}

TEST_CASE("manual runs tick only on advance") {
  ManualClock clock(0);
  ExecManager ex({4, 1024}, clock);
  const auto ws = ex.provision(WorkspaceFlavour::Dedicated, 1, 64, InstanceId("dt-1"), "alice");
  std::vector<std::uint64_t> ticks;
  const auto run = ex.spawn_run(ws.id, 100, [&](std::uint64_t t) { ticks.push_back(t); }, RunMode::Manual);
  CHECK(ticks.empty());
  CHECK(ex.advance(run, 3) == 3);
  CHECK(ticks == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(ex.run(run).ticks == 3);
  CHECK(ex.usage_report("alice").ticks == 3);

  // resumes from a given counter
  const auto resumed = ex.spawn_run(ws.id, 100, [&](std::uint64_t t) { ticks.push_back(t); }, RunMode::Manual, 40);
  ex.advance(resumed, 1);
  CHECK(ticks.back() == 41);

  ex.stop_run(run);
  ex.stop_run(run);
  CHECK(ex.run(run).status == RunStatus::Stopped);
  CHECK(ex.advance(run, 5) == 3);

  ex.release(ws.id);
  CHECK(ex.run(resumed).status == RunStatus::Stopped);
  CHECK(code_of([&] { ex.spawn_run(ws.id, 100, [](std::uint64_t) {}, RunMode::Manual); }) == Errc::WorkspaceReleased);
  CHECK(code_of([&] { ex.spawn_run(WorkspaceId("ws-9"), 100, [](std::uint64_t) {}, RunMode::Manual); }) ==
        Errc::NotFound);
}

TEST_CASE("a run can stop itself") {
  ManualClock clock(0);
  ExecManager ex({4, 1024}, clock);
  const auto ws = ex.provision(WorkspaceFlavour::Dedicated, 1, 64, InstanceId("dt-1"), "alice");
  RunId self;
  self = ex.spawn_run(ws.id, 10, [&](std::uint64_t t) { if (t == 2) ex.stop_run(self); }, RunMode::Manual);
  CHECK(ex.advance(self, 10) == 2);
}

TEST_CASE("realtime runs tick on their own") {
  SystemClock clock;
  ExecManager ex({4, 1024}, clock);
  const auto ws = ex.provision(WorkspaceFlavour::Dedicated, 1, 64, InstanceId("dt-1"), "alice");
  std::atomic<int> n{0};
  const auto run = ex.spawn_run(ws.id, 5, [&](std::uint64_t) { ++n; }, RunMode::Realtime);
  for (int i = 0; i < 200 && n < 3; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  ex.stop_run(run);
  const int at_stop = n;
  CHECK(at_stop >= 3);
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  CHECK(n <= at_stop + 1);
  CHECK(code_of([&] { ex.advance(run, 1); }) == Errc::InvalidArgument);
}

TEST_CASE("usage counters only grow") {
  ManualClock clock(0);
  ExecManager ex({8, 1024}, clock);
  UsageView prev = ex.usage_report("alice");
  CHECK(prev.ticks == 0);
  test::Gen gen(4);
  std::vector<WorkspaceId> live;
  for (int i = 0; i < 60; ++i) {
    clock.advance(gen.range(0, 2000));
    const auto op = gen.range(0, 3);
    if (op == 0 && live.size() < 4) {
      live.push_back(ex.provision(WorkspaceFlavour::SharedPool, 1, 64, InstanceId("dt"), "alice").id);
    } else if (op == 1 && !live.empty()) {
      ex.release(live.back());
      live.pop_back();
    } else if (op == 2 && !live.empty()) {
      const auto r = ex.spawn_run(live.front(), 10, [](std::uint64_t) {}, RunMode::Manual);
      ex.advance(r, static_cast<std::uint64_t>(gen.range(1, 5)));
      ex.stop_run(r);
    } else {
      ex.record_asset_bytes("alice", static_cast<std::uint64_t>(gen.range(0, 100)));
    }
    const auto now = ex.usage_report("alice");
    CHECK(now.ticks >= prev.ticks);
    CHECK(now.workspace_seconds >= prev.workspace_seconds);
    CHECK(now.asset_bytes >= prev.asset_bytes);
    CHECK(now.workspaces_provisioned >= prev.workspaces_provisioned);
    CHECK(now.workspaces_released >= prev.workspaces_released);
    CHECK(now.workspaces_provisioned - now.workspaces_released == live.size());
    prev = now;
  }
  CHECK(ex.usage_all().size() == 1);
}
