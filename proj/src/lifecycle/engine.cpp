#include "dtaas/lifecycle/engine.hpp"

#include <algorithm>
#include <atomic>

#include <spdlog/spdlog.h>

#include "dtaas/common/error.hpp"

namespace dtaas::lifecycle {

namespace fs = std::filesystem;
using nlohmann::json;
using config::ConfigDoc;

std::string_view phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::Created: return "Created";
    case Phase::Executing: return "Executing";
    case Phase::Terminated: return "Terminated";
  }
  return "Created";
}

json to_json(const InstanceView& v, bool with_config) {
  json children = json::array();
  for (const auto& c : v.children) children.push_back(c.str());
  json snaps = json::array();
  for (const auto& s : v.snapshots) snaps.push_back(s.str());
  json j = {{"id", v.id.str()},
            {"name", v.config ? v.config->name : ""},
            {"owner", v.owner},
            {"phase", phase_name(v.phase)},
            {"parent", v.parent ? json(v.parent->str()) : json(nullptr)},
            {"children", std::move(children)},
            {"workspace", v.workspace ? json(v.workspace->str()) : json(nullptr)},
            {"run", v.run ? json(v.run->str()) : json(nullptr)},
            {"snapshots", std::move(snaps)},
            {"config_version", v.config_version},
            {"ticks", v.ticks},
            {"ephemeral", v.ephemeral},
            {"created_at_ms", v.created_at_ms}};
  if (with_config && v.config) j["config"] = config::to_json(*v.config);
  return j;
}

json to_json(const EvolveOutcome& o) {
  return {{"applied", o.applied},
          {"rule", o.rule_id ? json(*o.rule_id) : json(nullptr)},
          {"changes", config::to_json(o.changes)},
          {"config_version", o.config_version}};
}

struct LifecycleEngine::Runtime {
  InstanceId id;
  std::mutex mu;
  std::unique_ptr<DtProgram> program;
  std::shared_ptr<const ConfigDoc> config;
  std::shared_ptr<const ConfigDoc> pending;
  std::atomic<std::uint64_t> ticks{0};
};

struct LifecycleEngine::Instance {
  InstanceId id;
  UserId owner;
  std::optional<InstanceId> parent;
  std::vector<std::shared_ptr<Instance>> children;
  std::shared_ptr<std::mutex> tree_mu;
  bool ephemeral = false;
  std::int64_t created_at_ms = 0;

  // Guarded by *tree_mu.
  Phase phase = Phase::Created;
  std::optional<WorkspaceId> workspace;
  std::optional<RunId> run;
  std::vector<SnapshotId> snapshots;
  std::shared_ptr<const ConfigDoc> config;
  std::uint64_t version = 1;
  graph::RuleBook rules;
  std::shared_ptr<Runtime> runtime = std::make_shared<Runtime>();

  mutable std::mutex view_mu;
  std::shared_ptr<const InstanceView> view;
};

namespace {

std::uint64_t numeric_suffix(const std::string& s, std::string_view prefix) {
  if (s.rfind(prefix, 0) != 0) return 0;
  try {
    return std::stoull(s.substr(prefix.size()));
  } catch (...) {
    return 0;
  }
}

bool same_structure(const ConfigDoc& a, const ConfigDoc& b) {
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (a.children[i].name != b.children[i].name || !same_structure(a.children[i], b.children[i])) return false;
  }
  return true;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::InvalidTransition, what); }

}  // namespace

LifecycleEngine::LifecycleEngine(registry::AssetRegistry& registry, exec::ExecManager& exec, datahub::DataHub& hub,
                                 const ProgramRegistry& programs, const Clock& clock, EngineOptions options)
    : registry_(registry), exec_(exec), hub_(hub), programs_(programs), clock_(clock), options_(std::move(options)) {
  fs::create_directories(options_.state_root);
  for (const auto& entry : fs::directory_iterator(options_.state_root)) {
    next_instance_ = std::max(next_instance_, numeric_suffix(entry.path().filename().string(), "dt-") + 1);
  }
  subscription_ = hub_.subscribe([this](const datahub::Event& e) {
    post([e](LifecycleEngine& engine) { engine.route_event(e); });
  });
  if (options_.mode == exec::RunMode::Realtime) worker_ = std::thread([this] { worker_loop(); });
}

LifecycleEngine::~LifecycleEngine() {
  hub_.unsubscribe(subscription_);
  {
    std::lock_guard lock(actions_mu_);
    stopping_ = true;
  }
  actions_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  std::vector<RunId> runs;
  {
    std::shared_lock lock(map_mu_);
    for (const auto& [id, inst] : instances_) {
      std::lock_guard tree(*inst->tree_mu);
      if (inst->run) runs.push_back(*inst->run);
    }
  }
  for (const auto& r : runs) {
    try {
      exec_.stop_run(r);
    } catch (const std::exception& e) {
      spdlog::warn("stopping {} on shutdown: {}", r.str(), e.what());
    }
  }
}

std::shared_ptr<LifecycleEngine::Instance> LifecycleEngine::find(const InstanceId& id) const {
  std::shared_lock lock(map_mu_);
  auto it = instances_.find(id);
  if (it == instances_.end()) throw Error(Errc::NotFound, "no DT instance '" + id.str() + "'");
  return it->second;
}

bool LifecycleEngine::exists(const InstanceId& id) const {
  std::shared_lock lock(map_mu_);
  return instances_.count(id) > 0;
}

void LifecycleEngine::publish(Instance& inst) {
  auto v = std::make_shared<InstanceView>();
  v->id = inst.id;
  v->owner = inst.owner;
  v->phase = inst.phase;
  v->parent = inst.parent;
  for (const auto& c : inst.children) v->children.push_back(c->id);
  v->workspace = inst.workspace;
  v->run = inst.run;
  v->snapshots = inst.snapshots;
  v->config = inst.config;
  v->config_version = inst.version;
  v->ephemeral = inst.ephemeral;
  v->created_at_ms = inst.created_at_ms;
  std::lock_guard lock(inst.view_mu);
  inst.view = std::move(v);
}

InstanceView LifecycleEngine::get(const InstanceId& id) const {
  auto inst = find(id);
  InstanceView v;
  {
    std::lock_guard lock(inst->view_mu);
    v = *inst->view;
  }
  v.ticks = inst->runtime->ticks.load();
  return v;
}

std::vector<InstanceView> LifecycleEngine::list(const std::optional<UserId>& owner) const {
  std::vector<InstanceId> ids;
  {
    std::shared_lock lock(map_mu_);
    for (const auto& [id, inst] : instances_) {
      if (!owner || inst->owner == *owner) ids.push_back(id);
    }
  }
  std::sort(ids.begin(), ids.end(), [](const InstanceId& a, const InstanceId& b) {
    return numeric_suffix(a.str(), "dt-") < numeric_suffix(b.str(), "dt-");
  });
  std::vector<InstanceView> out;
  for (const auto& id : ids) {
    try {
      out.push_back(get(id));
    } catch (const Error&) {
      // purged in between
    }
  }
  return out;
}

std::vector<std::shared_ptr<LifecycleEngine::Instance>> LifecycleEngine::subtree_post_order(
    const std::shared_ptr<Instance>& root) const {
  std::vector<std::shared_ptr<Instance>> out;
  std::function<void(const std::shared_ptr<Instance>&)> walk = [&](const std::shared_ptr<Instance>& n) {
    for (const auto& c : n->children) walk(c);
    out.push_back(n);
  };
  walk(root);
  return out;
}

std::shared_ptr<LifecycleEngine::Instance> LifecycleEngine::make_tree(const ConfigDoc& doc, const UserId& owner,
                                                                      bool ephemeral,
                                                                      const std::shared_ptr<Instance>& parent,
                                                                      std::vector<std::shared_ptr<Instance>>& created) {
  auto inst = std::make_shared<Instance>();
  inst->id = InstanceId("dt-" + std::to_string(next_instance_++));
  inst->owner = owner;
  inst->ephemeral = ephemeral;
  inst->created_at_ms = clock_.now_ms();
  inst->tree_mu = parent ? parent->tree_mu : std::make_shared<std::mutex>();
  if (parent) inst->parent = parent->id;
  inst->config = std::make_shared<const ConfigDoc>(doc);
  inst->runtime->id = inst->id;
  created.push_back(inst);
  for (const auto& child : doc.children) inst->children.push_back(make_tree(child, owner, ephemeral, inst, created));
  return inst;
}

InstanceView LifecycleEngine::create_dt(const ConfigDoc& doc, const UserId& caller, bool ephemeral) {
  if (caller.empty()) throw Error(Errc::Unauthorized, "anonymous caller");
  auto report = config::validate_config(doc, *registry_.resolver_for(caller));
  if (!report.valid) {
    throw config::ValidationError(Errc::ValidationFailed, report,
                                  "configuration '" + doc.name + "' is invalid (" +
                                      std::to_string(report.error_count()) + " errors)");
  }
  std::vector<std::shared_ptr<Instance>> created;
  std::vector<graph::RuleSpec> specs;
  {
    std::unique_lock lock(map_mu_);
    make_tree(doc, caller, ephemeral, nullptr, created);
    for (const auto& inst : created) instances_.emplace(inst->id, inst);
    specs = rule_specs_;
  }
  for (const auto& inst : created) {
    if (!ephemeral) {
      for (const auto& spec : specs) {
        if (spec.config && *spec.config != config::base_name(inst->config->name)) continue;
        try {
          inst->rules.register_rule(spec.rule, *inst->config);
        } catch (const Error& e) {
          spdlog::warn("rule '{}' not attached to {}: {}", spec.rule.id, inst->id.str(), e.what());
        }
      }
    }
    publish(*inst);
  }
  return get(created.front()->id);
}

std::string LifecycleEngine::program_entry(const ConfigDoc& doc, const UserId& owner) const {
  auto resolver = registry_.resolver_for(owner);
  auto entry_of = [&](const AssetId& id) -> std::optional<std::string> {
    auto rec = resolver->resolve(id);
    if (!rec) return std::nullopt;
    auto entry = rec->meta(std::string(registry::kEntryKey));
    if (entry && programs_.knows(*entry)) return entry;
    return std::nullopt;
  };
  for (const auto& p : doc.c_a.ft_pairs) {
    if (p.tool) {
      if (auto e = entry_of(*p.tool)) return *e;
    }
  }
  for (const auto& r : doc.c_a.ready_dts) {
    if (auto e = entry_of(r)) return *e;
  }
  return std::string(kEchoEntry);
}

void LifecycleEngine::tick(const std::shared_ptr<Runtime>& rt, std::uint64_t n) {
  std::vector<Action> actions;
  {
    std::lock_guard lock(rt->mu);
    if (!rt->program) return;
    if (rt->pending) {
      rt->program->on_config_changed(*rt->config, *rt->pending);
      rt->config = std::move(rt->pending);
      rt->pending.reset();
    }
    rt->ticks = n;
    TickContext ctx{rt->id, n, clock_.now_ms(), *rt->config, hub_, actions};
    rt->program->on_tick(ctx);
  }
  for (auto& a : actions) post(std::move(a));
}

void LifecycleEngine::start(Instance& inst) {
  const auto& ci = inst.config->c_i;
  auto ws = exec_.provision(ci.flavour, ci.cpu_units, ci.memory_mb, inst.id, inst.owner);
  auto rt = inst.runtime;
  try {
    {
      std::lock_guard lock(rt->mu);
      if (!rt->program) rt->program = programs_.make(program_entry(*inst.config, inst.owner), *inst.config);
      rt->config = inst.config;
      rt->pending.reset();
    }
    // What-if variants are stepped by their caller, never by the clock.
    const auto mode = inst.ephemeral ? exec::RunMode::Manual : options_.mode;
    inst.run = exec_.spawn_run(ws.id, ci.tick_ms, [this, rt](std::uint64_t n) { tick(rt, n); }, mode,
                               rt->ticks.load());
  } catch (...) {
    exec_.release(ws.id);
    throw;
  }
  inst.workspace = ws.id;
  inst.phase = Phase::Executing;
  publish(inst);
}

void LifecycleEngine::stop(Instance& inst) {
  if (inst.run) {
    exec_.stop_run(*inst.run);
    inst.run.reset();
  }
  if (inst.workspace) {
    exec_.release(*inst.workspace);
    inst.workspace.reset();
  }
}

void LifecycleEngine::execute_dt(const InstanceId& id) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  if (inst->phase != Phase::Created) invalid("execute requires Created, '" + id.str() + "' is " + std::string(phase_name(inst->phase)));
  const auto nodes = subtree_post_order(inst);
  for (const auto& n : nodes) {
    if (n->phase == Phase::Terminated) {
      invalid("descendant '" + n->id.str() + "' of '" + id.str() + "' is Terminated");
    }
  }
  auto report = config::validate_config(*inst->config, *registry_.resolver_for(inst->owner));
  if (!report.valid) {
    throw config::ValidationError(Errc::RevalidationFailed, report,
                                  "configuration of '" + id.str() + "' no longer validates");
  }
  if (inst->parent) {
    emit(id, "warning", {{"message", "executing a child DT independently of its parent"},
                         {"parent", inst->parent->str()}});
  }
  std::vector<std::shared_ptr<Instance>> started;
  try {
    for (const auto& n : nodes) {
      if (n->phase != Phase::Created) continue;
      start(*n);
      started.push_back(n);
    }
  } catch (...) {
    for (auto it = started.rbegin(); it != started.rend(); ++it) {
      stop(**it);
      (*it)->phase = Phase::Created;
      publish(**it);
    }
    throw;
  }
  emit(id, "executed", {{"instances", started.size()}});
}

SnapshotId LifecycleEngine::save_dt(const InstanceId& id) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  const auto nodes = subtree_post_order(inst);
  for (const auto& n : nodes) {
    if (n->phase != Phase::Executing) {
      invalid("save requires '" + n->id.str() + "' to be Executing, it is " + std::string(phase_name(n->phase)));
    }
  }
  std::map<InstanceId, SnapshotId> taken;
  for (const auto& n : nodes) {
    Snapshot snap;
    {
      std::unique_lock map_lock(map_mu_);
      snap.id = SnapshotId("snap-" + std::to_string(next_snapshot_++));
    }
    snap.instance = n->id;
    snap.captured_at_ms = clock_.now_ms();
    snap.config = *n->config;
    {
      auto& rt = *n->runtime;
      std::lock_guard rt_lock(rt.mu);
      snap.tick = rt.ticks.load();
      snap.program_state = rt.program ? rt.program->save_state() : json::object();
    }
    for (const auto& c : n->children) snap.children.push_back({c->id, taken.at(c->id)});
    write_snapshot(options_.state_root, snap);
    n->snapshots.push_back(snap.id);
    taken.emplace(n->id, snap.id);
    publish(*n);
  }
  return taken.at(id);
}

void LifecycleEngine::restore_dt(const InstanceId& id, const SnapshotId& snapshot) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  if (inst->phase != Phase::Terminated) {
    invalid("restore requires Terminated, '" + id.str() + "' is " + std::string(phase_name(inst->phase)));
  }
  std::vector<std::pair<std::shared_ptr<Instance>, Snapshot>> plan;
  std::function<void(const std::shared_ptr<Instance>&, const SnapshotId&)> collect =
      [&](const std::shared_ptr<Instance>& n, const SnapshotId& sid) {
        if (n->phase != Phase::Terminated) invalid("descendant '" + n->id.str() + "' is not Terminated");
        if (std::find(n->snapshots.begin(), n->snapshots.end(), sid) == n->snapshots.end()) {
          throw Error(Errc::UnknownSnapshot, "snapshot '" + sid.str() + "' does not belong to '" + n->id.str() + "'");
        }
        auto snap = read_snapshot(options_.state_root, n->id, sid);
        if (snap.config.name != n->config->name) {
          throw Error(Errc::UnknownSnapshot, "snapshot '" + sid.str() + "' was taken from a different configuration");
        }
        for (const auto& c : n->children) {
          auto link = std::find_if(snap.children.begin(), snap.children.end(),
                                   [&](const ChildSnapshot& cs) { return cs.instance == c->id; });
          if (link == snap.children.end()) {
            throw Error(Errc::UnknownSnapshot, "snapshot '" + sid.str() + "' has no state for child '" + c->id.str() + "'");
          }
          collect(c, link->snapshot);
        }
        plan.emplace_back(n, std::move(snap));
      };
  collect(inst, snapshot);
  for (auto& [n, snap] : plan) {
    auto program = programs_.make(program_entry(snap.config, n->owner), snap.config);
    program->load_state(snap.program_state);
    n->config = std::make_shared<const ConfigDoc>(snap.config);
    ++n->version;
    {
      std::lock_guard rt_lock(n->runtime->mu);
      n->runtime->program = std::move(program);
      n->runtime->config = n->config;
      n->runtime->pending.reset();
      n->runtime->ticks = snap.tick;
    }
    n->phase = Phase::Created;
    publish(*n);
  }
  emit(id, "restored", {{"snapshot", snapshot.str()}});
}

json LifecycleEngine::analyse_dt(const InstanceId& id, const AnalysisRequest& req) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  auto resolver = registry_.resolver_for(inst->owner);
  const auto& doc = *inst->config;
  const bool has_pipeline = std::any_of(doc.c_a.ft_pairs.begin(), doc.c_a.ft_pairs.end(), [&](const config::FtPair& p) {
    if (!p.function) return false;
    auto rec = resolver->resolve(*p.function);
    return rec && rec->meta("role") == std::optional<std::string>("analysis");
  });
  if (!has_pipeline) {
    throw Error(Errc::NoAnalysisPipeline, "'" + id.str() + "' has no function asset with role 'analysis'");
  }
  if (req.t0 > req.t1) throw Error(Errc::InvertedRange, "analysis range start after end");
  auto mode = req.mode;
  if (mode == AnalysisMode::Auto) {
    if (inst->phase != Phase::Executing) invalid("live analysis requires Executing; request mode 'historical' instead");
    mode = AnalysisMode::Live;
  }
  json result;
  AnalysisContext ctx{id, doc, hub_, clock_.now_ms()};
  if (mode == AnalysisMode::Live) {
    if (inst->phase != Phase::Executing) invalid("live analysis requires Executing");
    auto& rt = *inst->runtime;
    std::lock_guard rt_lock(rt.mu);
    AnalysisContext live{id, *rt.config, hub_, clock_.now_ms()};
    result = rt.program->analyse(req, live);
  } else {
    auto fresh = programs_.make(program_entry(doc, inst->owner), doc);
    result = fresh->replay(req, ctx);
  }
  result["instance"] = id.str();
  result["mode"] = analysis_mode_name(mode);
  return result;
}

void LifecycleEngine::swap_config(Instance& inst, const ConfigDoc& next) {
  inst.config = std::make_shared<const ConfigDoc>(next);
  ++inst.version;
  if (inst.phase == Phase::Executing) {
    std::lock_guard lock(inst.runtime->mu);
    inst.runtime->pending = inst.config;
  }
  publish(inst);
  for (std::size_t i = 0; i < inst.children.size(); ++i) swap_config(*inst.children[i], next.children[i]);
}

EvolveOutcome LifecycleEngine::apply_evolve(Instance& inst, const ConfigDoc& next, std::optional<std::string> rule) {
  const auto& current = *inst.config;
  if (config::base_name(next.name) != config::base_name(current.name)) {
    throw Error(Errc::RootMismatch, "evolve cannot rename '" + current.name + "' to '" + next.name + "'");
  }
  if (!same_structure(current, next)) {
    config::ValidationReport report;
    report.valid = false;
    report.diagnostics.push_back({config::Severity::Error, "EVOLVE-01",
                                  "child DTs cannot be added, removed or renamed on a live instance", "children"});
    throw config::ValidationError(Errc::ValidationFailed, report, "evolve would change the child structure");
  }
  auto resolver = registry_.resolver_for(inst.owner);
  auto report = config::validate_config(next, *resolver);
  if (!report.valid) {
    throw config::ValidationError(Errc::ValidationFailed, report, "evolved configuration is invalid");
  }
  const auto consistency = graph::check_consistency(graph::map_config(next, *resolver),
                                                    graph::builtin_consistency_queries());
  if (!consistency.passed) {
    for (const auto& r : consistency.results) {
      if (r.passed || r.severity != config::Severity::Error) continue;
      std::string offenders;
      for (const auto& o : r.offenders) offenders += (offenders.empty() ? "" : ", ") + o;
      report.diagnostics.push_back({config::Severity::Error, r.id, r.message + (offenders.empty() ? "" : ": " + offenders), ""});
    }
    report.valid = false;
    throw config::ValidationError(Errc::ValidationFailed, report, "evolved configuration fails consistency checks");
  }
  EvolveOutcome out;
  out.rule_id = std::move(rule);
  out.changes = config::diff_config(current, next);
  out.applied = true;
  if (!out.changes.empty() || next.name != current.name) {
    swap_config(inst, next);
    emit(inst.id, "config-changed",
         {{"version", inst.version},
          {"rule", out.rule_id ? json(*out.rule_id) : json(nullptr)},
          {"changes", config::to_json(out.changes)}});
  }
  out.config_version = inst.version;
  return out;
}

EvolveOutcome LifecycleEngine::evolve_dt(const InstanceId& id, const ConfigDoc& next) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  if (inst->phase == Phase::Terminated) invalid("evolve on Terminated '" + id.str() + "'");
  return apply_evolve(*inst, next, std::nullopt);
}

EvolveOutcome LifecycleEngine::evolve_dt(const InstanceId& id, const graph::RuleEvent& ev,
                                         const std::optional<std::string>& rule) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  if (inst->phase == Phase::Terminated) invalid("evolve on Terminated '" + id.str() + "'");
  const auto g = graph::map_config(*inst->config, *registry_.resolver_for(inst->owner));
  auto firing = inst->rules.fire(*inst->config, g, ev, rule);
  if (!firing) {
    emit(id, "warning", {{"message", "no reconfiguration rule matched event"}, {"event_type", ev.type},
                         {"event_source", ev.source}});
    EvolveOutcome out;
    out.config_version = inst->version;
    return out;
  }
  try {
    return apply_evolve(*inst, firing->candidate, firing->rule_id);
  } catch (const Error& e) {
    emit(id, "error", {{"message", e.what()}, {"rule", firing->rule_id}, {"code", errc_name(e.code())}});
    throw;
  }
}

void LifecycleEngine::terminate_dt(const InstanceId& id) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  if (inst->phase == Phase::Terminated) invalid("'" + id.str() + "' is already Terminated");
  if (inst->run) {
    exec_.stop_run(*inst->run);
    inst->run.reset();
  }
  auto finish = [this](Instance& n) {
    stop(n);
    n.phase = Phase::Terminated;
    {
      std::lock_guard rt_lock(n.runtime->mu);
      n.runtime->program.reset();
      n.runtime->pending.reset();
    }
    publish(n);
  };
  for (const auto& n : subtree_post_order(inst)) {
    if (n == inst || n->phase == Phase::Terminated) continue;
    finish(*n);
  }
  finish(*inst);
  emit(id, "terminated", json::object());
}

void LifecycleEngine::purge(const InstanceId& id) {
  auto inst = find(id);
  {
    std::unique_lock lock(*inst->tree_mu);
    if (!inst->ephemeral || inst->parent) throw Error(Errc::InvalidArgument, "only ephemeral roots can be purged");
    for (const auto& n : subtree_post_order(inst)) {
      if (n->phase != Phase::Terminated) invalid("purge requires '" + n->id.str() + "' to be Terminated");
    }
  }
  std::unique_lock lock(map_mu_);
  for (const auto& n : subtree_post_order(inst)) {
    instances_.erase(n->id);
    std::error_code ec;
    fs::remove_all(options_.state_root / n->id.str(), ec);
  }
}

void LifecycleEngine::register_rule(const InstanceId& id, graph::ReconfigRule rule) {
  auto inst = find(id);
  std::unique_lock lock(*inst->tree_mu);
  if (inst->phase == Phase::Terminated) invalid("cannot attach rules to Terminated '" + id.str() + "'");
  inst->rules.register_rule(std::move(rule), *inst->config);
}

std::vector<graph::ReconfigRule> LifecycleEngine::rules(const InstanceId& id) const {
  return find(id)->rules.rules();
}

void LifecycleEngine::add_rule_spec(graph::RuleSpec spec) {
  std::unique_lock lock(map_mu_);
  rule_specs_.push_back(std::move(spec));
}

graph::TwinGraph LifecycleEngine::graph(const InstanceId& id) const {
  const auto v = get(id);
  return graph::map_config(*v.config, *registry_.resolver_for(v.owner));
}

graph::ConsistencyReport LifecycleEngine::consistency(const InstanceId& id) const {
  return graph::check_consistency(graph(id), graph::builtin_consistency_queries());
}

std::uint64_t LifecycleEngine::advance(const InstanceId& id, std::uint64_t n) {
  auto inst = find(id);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::vector<RunId> runs;
    {
      std::unique_lock lock(*inst->tree_mu);
      for (const auto& node : subtree_post_order(inst)) {
        if (node->phase == Phase::Executing && node->run) runs.push_back(*node->run);
      }
    }
    if (runs.empty()) break;
    for (const auto& r : runs) exec_.advance(r, 1);
    // In realtime mode the worker thread owns the action queue.
    if (options_.mode == exec::RunMode::Manual) drain_actions();
  }
  return inst->runtime->ticks.load();
}

void LifecycleEngine::post(Action action) {
  {
    std::lock_guard lock(actions_mu_);
    actions_.push_back(std::move(action));
  }
  actions_cv_.notify_one();
}

namespace {
thread_local bool draining = false;
}

void LifecycleEngine::drain_actions() {
  // An action that itself advances an instance must not run the rest of
  // the queue underneath it.
  if (draining) return;
  draining = true;
  struct Reset {
    ~Reset() { draining = false; }
  } reset;
  while (true) {
    Action next;
    {
      std::lock_guard lock(actions_mu_);
      if (actions_.empty()) return;
      next = std::move(actions_.front());
      actions_.pop_front();
    }
    try {
      next(*this);
    } catch (const std::exception& e) {
      spdlog::warn("deferred action failed: {}", e.what());
    }
  }
}

void LifecycleEngine::worker_loop() {
  while (true) {
    {
      std::unique_lock lock(actions_mu_);
      actions_cv_.wait(lock, [&] { return stopping_ || !actions_.empty(); });
      if (stopping_) return;
    }
    drain_actions();
  }
}

void LifecycleEngine::route_event(const datahub::Event& ev) {
  const graph::RuleEvent rev{ev.type, ev.origin, ev.payload};
  std::vector<std::shared_ptr<Instance>> candidates;
  {
    std::shared_lock lock(map_mu_);
    for (const auto& [id, inst] : instances_) candidates.push_back(inst);
  }
  // An instance's own anomaly events reconfigure that instance only.
  const bool from_instance = ev.source == datahub::EventSource::DT && exists(InstanceId(ev.origin));
  for (const auto& inst : candidates) {
    if (from_instance && inst->id.str() != ev.origin) continue;
    const auto rules = inst->rules.rules();
    if (std::none_of(rules.begin(), rules.end(), [&](const graph::ReconfigRule& r) { return r.trigger.matches(rev); })) {
      continue;
    }
    if (get(inst->id).phase == Phase::Terminated) continue;
    try {
      evolve_dt(inst->id, rev);
    } catch (const std::exception& e) {
      spdlog::warn("event {} ({}) rejected for {}: {}", ev.id, ev.type, inst->id.str(), e.what());
    }
  }
}

void LifecycleEngine::emit(const InstanceId& id, const std::string& type, json payload) {
  datahub::Event e;
  e.source = datahub::EventSource::DT;
  e.origin = id.str();
  e.type = type;
  e.payload = std::move(payload);
  hub_.publish_event(std::move(e));
}

bool LifecycleEngine::references_asset(const AssetId& id) const {
  std::shared_lock lock(map_mu_);
  for (const auto& [iid, inst] : instances_) {
    std::shared_ptr<const InstanceView> v;
    {
      std::lock_guard view_lock(inst->view_mu);
      v = inst->view;
    }
    if (!v || v->phase == Phase::Terminated) continue;
    const auto refs = config::referenced_assets(*v->config);
    if (std::find(refs.begin(), refs.end(), id) != refs.end()) return true;
  }
  return false;
}

}  // namespace dtaas::lifecycle
