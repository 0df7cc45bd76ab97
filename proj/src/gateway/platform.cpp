#include "dtaas/gateway/platform.hpp"

#include <fstream>
#include <sstream>

#include "dtaas/common/error.hpp"
#include "dtaas/incubator/twin.hpp"

namespace dtaas::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

PlatformConfig parse_platform_config(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("platform config: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::ParseError, "platform config must be an object");
  PlatformConfig c;
  auto path = [&](const char* key, const fs::path& fallback) {
    if (!j.contains(key)) return base_dir / fallback;
    fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
  };
  try {
    if (j.contains("listen")) {
      const auto listen = j.at("listen").get<std::string>();
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "listen must be host:port");
      c.host = listen.substr(0, colon);
      c.port = std::stoi(listen.substr(colon + 1));
    }
    if (j.contains("pool")) {
      c.pool.cpu_units = j.at("pool").at("cpu_units").get<std::int64_t>();
      c.pool.memory_mb = j.at("pool").at("memory_mb").get<std::int64_t>();
    }
    c.asset_store = path("asset_store", c.asset_store);
    c.data_path = path("data_path", c.data_path);
    c.state_path = path("state_path", c.state_path);
    const auto mode = j.value("mode", std::string("realtime"));
    if (mode == "realtime") {
      c.mode = exec::RunMode::Realtime;
    } else if (mode == "manual") {
      c.mode = exec::RunMode::Manual;
    } else {
      throw Error(Errc::InvalidArgument, "mode must be 'realtime' or 'manual'");
    }
    if (j.contains("demo")) {
      const auto& d = j.at("demo");
      c.demo = d.value("enabled", true);
      c.emulator = d.value("emulator", true);
      c.seed = d.value("seed", c.seed);
    }
    for (const auto& p : j.value("principals", json::array())) {
      auto role = parse_role(p.at("role").get<std::string>());
      if (!role) throw Error(Errc::InvalidArgument, "unknown role '" + p.at("role").get<std::string>() + "'");
      c.principals.push_back({p.at("user").get<std::string>(), *role, p.at("token").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("platform config: ") + e.what());
  }
  return c;
}

PlatformConfig load_platform_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::NotFound, "cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto dir = file.parent_path();
  return parse_platform_config(ss.str(), dir.empty() ? fs::path(".") : dir);
}

Platform::Platform(PlatformConfig config) : config_(std::move(config)), tokens_(config_.principals) {
  if (config_.mode == exec::RunMode::Manual) {
    auto clock = std::make_unique<ManualClock>(0);
    manual_clock_ = clock.get();
    clock_ = std::move(clock);
  } else {
    clock_ = std::make_unique<SystemClock>();
  }
  registry_ = std::make_unique<registry::AssetRegistry>(config_.asset_store);
  hub_ = std::make_unique<datahub::DataHub>(config_.data_path, *clock_);
  exec_ = std::make_unique<exec::ExecManager>(config_.pool, *clock_);
  incubator::register_programs(programs_);
  lifecycle::EngineOptions opts;
  opts.mode = config_.mode;
  opts.state_root = config_.state_path;
  engine_ = std::make_unique<lifecycle::LifecycleEngine>(*registry_, *exec_, *hub_, programs_, *clock_, opts);
  registry_->set_in_use_probe([this](const AssetId& id) { return engine_->references_asset(id); });
  registry_->set_storage_observer(
      [this](const UserId& owner, std::uint64_t bytes) { exec_->record_asset_bytes(owner, bytes); });
  if (config_.demo) {
    demo_assets_ = incubator::bootstrap_demo_assets(*registry_);
    for (auto& spec : incubator::demo_rules()) engine_->add_rule_spec(std::move(spec));
    if (config_.emulator) {
      const auto doc = incubator::demo_config(*demo_assets_);
      auto opts = incubator::emulator_options(doc, config_.seed);
      emulator_ = std::make_unique<incubator::PtEmulator>(*hub_, opts, clock_->now_ms());
      if (config_.mode == exec::RunMode::Realtime) emulator_->start_realtime();
    }
  }
}

Platform::~Platform() {
  if (emulator_) emulator_->stop();
  engine_.reset();
  emulator_.reset();
}

void Platform::step(std::uint64_t n) {
  if (!manual_clock_) throw Error(Errc::InvalidArgument, "step is only available in manual mode");
  for (std::uint64_t i = 0; i < n; ++i) {
    if (emulator_) {
      manual_clock_->set(emulator_->now_ms());
      emulator_->step();
    }
    const auto views = engine_->list();
    std::map<InstanceId, lifecycle::Phase> phase;
    for (const auto& v : views) phase.emplace(v.id, v.phase);
    for (const auto& v : views) {
      if (v.phase != lifecycle::Phase::Executing) continue;
      // A child that runs under an executing parent is ticked through it.
      if (v.parent && phase.count(*v.parent) && phase.at(*v.parent) == lifecycle::Phase::Executing) continue;
      engine_->advance(v.id, 1);
    }
    if (!emulator_) manual_clock_->advance(100);
  }
}

}  // namespace dtaas::gateway
