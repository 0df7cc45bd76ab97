#include "dtaas/incubator/planner.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "dtaas/common/error.hpp"
#include "dtaas/incubator/twin.hpp"
#include "dtaas/lifecycle/engine.hpp"

namespace dtaas::incubator {

using nlohmann::json;
using lifecycle::LifecycleEngine;
using lifecycle::Phase;

namespace {

void publish(LifecycleEngine& engine, const InstanceId& id, const std::string& type, json payload) {
  datahub::Event e;
  e.source = datahub::EventSource::DT;
  e.origin = id.str();
  e.type = type;
  e.payload = std::move(payload);
  engine.hub().publish_event(std::move(e));
}

/// Pure-simulation copy of `doc`: PT channels and every connection that
/// touches them are dropped, plant bindings are pinned.
config::ConfigDoc simulation_base(const config::ConfigDoc& doc, double g_hat, double t_start, bool heater) {
  config::ConfigDoc sim = doc;
  sim.c_pt.channels.clear();
  sim.c_pt.endpoint.clear();
  auto& conns = sim.c_a.connections;
  conns.erase(std::remove_if(conns.begin(), conns.end(),
                             [](const config::Connection& c) {
                               return c.producer.ref == config::kPtRef || c.consumer.ref == config::kPtRef;
                             }),
              conns.end());
  sim.c_a.parameters["conductance"] = g_hat;
  sim.c_a.parameters["t_init"] = t_start;
  sim.c_a.parameters["heater_init"] = heater;
  return sim;
}

std::string sensor_key(const config::ConfigDoc& doc, std::string_view name) {
  const auto* ch = doc.c_pt.find(name);
  if (!ch || ch->role != config::ChannelRole::Sensor) {
    throw Error(Errc::NoHistory, "configuration '" + doc.name + "' has no '" + std::string(name) + "' sensor channel");
  }
  return ch->key;
}

}  // namespace

json to_json(const WhatIfResult& r) {
  json ranked = json::array();
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    const auto& c = r.ranked[i];
    ranked.push_back({{"rank", i + 1}, {"index", c.index}, {"params", to_json(c.params)}, {"score", c.score}});
  }
  json rejected = json::array();
  for (const auto& c : r.rejected) {
    rejected.push_back({{"index", c.index}, {"params", to_json(c.params)}, {"code", c.code}, {"message", c.message}});
  }
  return {{"ranked", ranked},   {"rejected", rejected},     {"g_hat", r.g_hat},
          {"t_start", r.t_start}, {"target", r.target}, {"horizon_ms", r.horizon_ms}};
}

std::vector<ControllerParams> candidates_from_json(const json& j) {
  if (!j.is_array()) throw Error(Errc::InvalidArgument, "candidates must be a list");
  std::vector<ControllerParams> out;
  for (const auto& c : j) {
    if (!c.is_object() || !c.contains("setpoint") || !c.contains("band") || !c.at("setpoint").is_number() ||
        !c.at("band").is_number()) {
      throw Error(Errc::InvalidArgument, "each candidate needs numeric 'setpoint' and 'band'");
    }
    out.push_back({c.at("setpoint").get<double>(), c.at("band").get<double>()});
  }
  return out;
}

WhatIfResult run_whatif(LifecycleEngine& engine, const InstanceId& id, const std::vector<ControllerParams>& candidates,
                        std::int64_t horizon_ms) {
  if (candidates.empty()) throw Error(Errc::EmptyCandidates, "what-if needs at least one candidate");
  if (horizon_ms <= 0) throw Error(Errc::InvalidArgument, "what-if horizon must be positive");
  const auto view = engine.get(id);
  const auto& doc = *view.config;
  auto& hub = engine.hub();
  const auto t_last = hub.latest(sensor_key(doc, "t_box"));
  if (!t_last) throw Error(Errc::NoHistory, "'" + id.str() + "' has no recorded temperature yet");
  const auto heater_last = hub.latest(sensor_key(doc, "heater"));
  const auto g_last = hub.latest(lifecycle::instance_series(id, "g_hat"));
  if (!g_last) throw Error(Errc::NoEstimate, "'" + id.str() + "' has no conductance estimate yet");

  WhatIfResult result;
  result.g_hat = g_last->value;
  result.t_start = t_last->value;
  result.target = TwinParams::from(doc).controller.setpoint;
  result.horizon_ms = horizon_ms;
  const auto base = simulation_base(doc, result.g_hat, result.t_start, heater_last && heater_last->value > 0.5);
  const auto ticks = static_cast<std::uint64_t>((horizon_ms + doc.c_i.tick_ms - 1) / doc.c_i.tick_ms);

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto variant = config::derive_variant(
        base, {{"c_a.parameters.setpoint", cand.setpoint}, {"c_a.parameters.band", cand.band}},
        "whatif-" + std::to_string(i + 1));
    std::optional<InstanceId> eph;
    try {
      eph = engine.create_dt(variant, view.owner, true).id;
    } catch (const config::ValidationError& e) {
      result.rejected.push_back({i, cand, std::string(errc_name(e.code())), e.what()});
      continue;
    }
    try {
      engine.execute_dt(*eph);
      engine.advance(*eph, ticks);
      lifecycle::AnalysisRequest req;
      req.mode = lifecycle::AnalysisMode::Live;
      req.params = {{"target", result.target}};
      const auto out = engine.analyse_dt(*eph, req);
      result.ranked.push_back({i, cand, out.at("mse").get<double>()});
      engine.terminate_dt(*eph);
      engine.purge(*eph);
    } catch (...) {
      try {
        if (engine.get(*eph).phase != Phase::Terminated) engine.terminate_dt(*eph);
        engine.purge(*eph);
      } catch (const std::exception& cleanup) {
        spdlog::warn("what-if cleanup of {} failed: {}", eph->str(), cleanup.what());
      }
      throw;
    }
  }
  std::stable_sort(result.ranked.begin(), result.ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.score < b.score; });
  return result;
}

bool apply_plan(LifecycleEngine& engine, const InstanceId& id, const ControllerParams& params) {
  const auto view = engine.get(id);
  try {
    const auto next = config::apply_overrides(
        *view.config, {{"c_a.parameters.setpoint", params.setpoint}, {"c_a.parameters.band", params.band}});
    engine.evolve_dt(id, next);
  } catch (const Error& e) {
    publish(engine, id, "error",
            {{"message", e.what()}, {"code", errc_name(e.code())}, {"candidate", to_json(params)}});
    return false;
  }
  const auto* ch = view.config->c_pt.find("controller");
  if (ch && (ch->role == config::ChannelRole::Command || ch->role == config::ChannelRole::Actuator)) {
    datahub::Command cmd;
    cmd.target = ch->key;
    cmd.name = "set_params";
    cmd.args = to_json(params);
    engine.hub().send_command(std::move(cmd));
  }
  return true;
}

std::vector<ControllerParams> planner_candidates(LifecycleEngine& engine, const InstanceId& id) {
  const auto view = engine.get(id);
  auto resolver = engine.registry().resolver_for(view.owner);
  for (const auto& pair : view.config->c_a.ft_pairs) {
    if (!pair.function) continue;
    auto rec = resolver->resolve(*pair.function);
    if (!rec || rec->meta("role") != std::optional<std::string>("planner")) continue;
    auto text = rec->meta("candidates");
    if (!text) return {};
    return candidates_from_json(json::parse(*text));
  }
  return {};
}

std::optional<RankedCandidate> plan(LifecycleEngine& engine, const InstanceId& id, const std::string& reason) {
  if (!engine.exists(id) || engine.get(id).phase != Phase::Executing) return std::nullopt;
  const auto candidates = planner_candidates(engine, id);
  if (candidates.empty()) return std::nullopt;
  const auto horizon = TwinParams::from(*engine.get(id).config).horizon_ms;
  WhatIfResult result;
  try {
    result = run_whatif(engine, id, candidates, horizon);
  } catch (const Error& e) {
    publish(engine, id, "warning", {{"message", std::string("re-planning skipped: ") + e.what()},
                                    {"code", errc_name(e.code())}});
    return std::nullopt;
  }
  if (result.ranked.empty()) return std::nullopt;
  const auto best = result.ranked.front();
  const bool applied = apply_plan(engine, id, best.params);
  publish(engine, id, "replanned",
          {{"reason", reason}, {"applied", applied}, {"winner", to_json(best.params)}, {"whatif", to_json(result)}});
  return applied ? std::optional<RankedCandidate>(best) : std::nullopt;
}

void mapek_tick(LifecycleEngine& engine, const InstanceId& id) {
  if (engine.get(id).phase != Phase::Executing) {
    throw Error(Errc::InvalidTransition, "the control loop needs '" + id.str() + "' to be Executing");
  }
  engine.advance(id, 1);
}

}  // namespace dtaas::incubator
