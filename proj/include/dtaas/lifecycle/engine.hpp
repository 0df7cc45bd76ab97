#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dtaas/common/clock.hpp"
#include "dtaas/config/diff.hpp"
#include "dtaas/config/validator.hpp"
#include "dtaas/datahub/data_hub.hpp"
#include "dtaas/exec/exec_manager.hpp"
#include "dtaas/graph/consistency.hpp"
#include "dtaas/graph/rules.hpp"
#include "dtaas/lifecycle/program.hpp"
#include "dtaas/lifecycle/snapshot.hpp"
#include "dtaas/registry/asset_registry.hpp"

namespace dtaas::lifecycle {

enum class Phase { Created, Executing, Terminated };

std::string_view phase_name(Phase p) noexcept;

/// Immutable snapshot of an instance, safe to hold across operations.
struct InstanceView {
  InstanceId id;
  UserId owner;
  Phase phase = Phase::Created;
  std::optional<InstanceId> parent;
  std::vector<InstanceId> children;
  std::optional<WorkspaceId> workspace;
  std::optional<RunId> run;
  std::vector<SnapshotId> snapshots;
  std::shared_ptr<const config::ConfigDoc> config;
  std::uint64_t config_version = 0;
  std::uint64_t ticks = 0;
  bool ephemeral = false;
  std::int64_t created_at_ms = 0;
};

nlohmann::json to_json(const InstanceView& v, bool with_config = false);

struct EngineOptions {
  exec::RunMode mode = exec::RunMode::Manual;
  std::filesystem::path state_root = "state";
};

struct EvolveOutcome {
  bool applied = false;
  std::optional<std::string> rule_id;
  config::ChangeSet changes;
  std::uint64_t config_version = 0;
};

nlohmann::json to_json(const EvolveOutcome& o);

/// Owns DT instances and drives them through create, execute, save,
/// analyse, evolve and terminate. Operations on one instance tree are
/// serialized by a per-root lock; status reads never block on them.
class LifecycleEngine {
 public:
  LifecycleEngine(registry::AssetRegistry& registry, exec::ExecManager& exec, datahub::DataHub& hub,
                  const ProgramRegistry& programs, const Clock& clock, EngineOptions options = {});
  ~LifecycleEngine();

  LifecycleEngine(const LifecycleEngine&) = delete;
  LifecycleEngine& operator=(const LifecycleEngine&) = delete;

  /// Validates against the assets visible to `caller`; throws
  /// ValidationError(ValidationFailed). Children are created recursively.
  InstanceView create_dt(const config::ConfigDoc& doc, const UserId& caller, bool ephemeral = false);

  /// Revalidates, then starts every Created descendant bottom-up and the
  /// instance itself. Throws Error(InvalidTransition),
  /// ValidationError(RevalidationFailed), Error(CapacityExhausted).
  void execute_dt(const InstanceId& id);
  SnapshotId save_dt(const InstanceId& id);
  void restore_dt(const InstanceId& id, const SnapshotId& snapshot);
  nlohmann::json analyse_dt(const InstanceId& id, const AnalysisRequest& req = {});
  /// Throws ValidationError(ValidationFailed) leaving the instance intact.
  EvolveOutcome evolve_dt(const InstanceId& id, const config::ConfigDoc& next);
  /// Fires the instance's rules for `ev` (only `rule` when given). No
  /// match yields applied = false and a warning event.
  EvolveOutcome evolve_dt(const InstanceId& id, const graph::RuleEvent& ev,
                          const std::optional<std::string>& rule = std::nullopt);
  void terminate_dt(const InstanceId& id);
  /// Drops a Terminated ephemeral root and its descendants.
  void purge(const InstanceId& id);

  InstanceView get(const InstanceId& id) const;
  std::vector<InstanceView> list(const std::optional<UserId>& owner = std::nullopt) const;
  bool exists(const InstanceId& id) const;

  void register_rule(const InstanceId& id, graph::ReconfigRule rule);
  std::vector<graph::ReconfigRule> rules(const InstanceId& id) const;
  /// Rules file entries applied to every later matching create_dt.
  void add_rule_spec(graph::RuleSpec spec);

  graph::TwinGraph graph(const InstanceId& id) const;
  graph::ConsistencyReport consistency(const InstanceId& id) const;

  /// Manual runs only (ephemeral instances always are): runs `n` ticks over the instance and its executing
  /// descendants (children first each tick), draining posted actions
  /// after every tick. Returns the instance's tick counter.
  std::uint64_t advance(const InstanceId& id, std::uint64_t n);
  void post(Action action);
  /// Runs queued actions on the calling thread.
  void drain_actions();

  /// True when a non-terminated instance's configuration uses the asset.
  bool references_asset(const AssetId& id) const;

  datahub::DataHub& hub() noexcept { return hub_; }
  exec::ExecManager& exec() noexcept { return exec_; }
  registry::AssetRegistry& registry() noexcept { return registry_; }
  const Clock& clock() const noexcept { return clock_; }
  exec::RunMode mode() const noexcept { return options_.mode; }

 private:
  struct Instance;
  struct Runtime;

  std::shared_ptr<Instance> find(const InstanceId& id) const;
  std::shared_ptr<Instance> make_tree(const config::ConfigDoc& doc, const UserId& owner, bool ephemeral,
                                      const std::shared_ptr<Instance>& parent,
                                      std::vector<std::shared_ptr<Instance>>& created);
  std::vector<std::shared_ptr<Instance>> subtree_post_order(const std::shared_ptr<Instance>& root) const;
  void publish(Instance& inst);
  void start(Instance& inst);
  void stop(Instance& inst);
  EvolveOutcome apply_evolve(Instance& inst, const config::ConfigDoc& next, std::optional<std::string> rule);
  void swap_config(Instance& inst, const config::ConfigDoc& next);
  void tick(const std::shared_ptr<Runtime>& rt, std::uint64_t n);
  void route_event(const datahub::Event& ev);
  void emit(const InstanceId& id, const std::string& type, nlohmann::json payload);
  std::string program_entry(const config::ConfigDoc& doc, const UserId& owner) const;
  void worker_loop();

  registry::AssetRegistry& registry_;
  exec::ExecManager& exec_;
  datahub::DataHub& hub_;
  const ProgramRegistry& programs_;
  const Clock& clock_;
  EngineOptions options_;

  mutable std::shared_mutex map_mu_;
  std::map<InstanceId, std::shared_ptr<Instance>> instances_;
  std::uint64_t next_instance_ = 1;
  std::uint64_t next_snapshot_ = 1;
  std::vector<graph::RuleSpec> rule_specs_;

  std::mutex actions_mu_;
  std::condition_variable actions_cv_;
  std::deque<Action> actions_;
  bool stopping_ = false;
  std::thread worker_;
  std::uint64_t subscription_ = 0;
};

}  // namespace dtaas::lifecycle
