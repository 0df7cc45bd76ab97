#include "dtaas/incubator/twin.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "dtaas/common/error.hpp"
#include "dtaas/incubator/planner.hpp"
#include "dtaas/lifecycle/engine.hpp"

namespace dtaas::incubator {

using nlohmann::json;
using lifecycle::AnalysisContext;
using lifecycle::AnalysisRequest;
using lifecycle::TickContext;

namespace {

constexpr auto kMin = std::numeric_limits<std::int64_t>::min();
constexpr auto kMax = std::numeric_limits<std::int64_t>::max();

std::optional<std::string> sensor_key(const config::ConfigDoc& doc, std::string_view name) {
  const auto* ch = doc.c_pt.find(name);
  if (!ch || ch->role != config::ChannelRole::Sensor) return std::nullopt;
  return ch->key;
}

bool bool_param(const config::ConfigDoc& doc, const std::string& name, bool fallback) {
  auto it = doc.c_a.parameters.find(name);
  if (it == doc.c_a.parameters.end()) return fallback;
  if (const auto* b = std::get_if<bool>(&it->second)) return *b;
  if (const auto* d = std::get_if<double>(&it->second)) return *d != 0.0;
  return fallback;
}

template <class T>
T count_param(const config::ConfigDoc& doc, const std::string& name, T fallback) {
  auto v = config::number_param(doc, name);
  if (!v || !(*v >= 0) || !std::isfinite(*v)) return fallback;
  return static_cast<T>(std::llround(*v));
}

}  // namespace

TwinParams TwinParams::from(const config::ConfigDoc& doc) {
  TwinParams t;
  auto num = [&](const char* name, double fallback) { return config::number_param(doc, name).value_or(fallback); };
  t.plant.heat_capacity = num("heat_capacity", t.plant.heat_capacity);
  t.plant.conductance_closed = num("conductance_closed", t.plant.conductance_closed);
  t.plant.conductance_open = num("conductance_open", t.plant.conductance_open);
  t.plant.heater_power = num("heater_power", t.plant.heater_power);
  t.plant.ambient = num("ambient", t.plant.ambient);
  t.plant.sensor_noise_std = 0.0;
  t.controller.setpoint = num("setpoint", t.controller.setpoint);
  t.controller.band = num("band", t.controller.band);
  t.conductance = num("conductance", t.plant.conductance_closed);
  t.t_init = num("t_init", t.plant.ambient);
  t.heater_init = bool_param(doc, "heater_init", false);
  t.stride = std::max<std::size_t>(1, count_param<std::size_t>(doc, "stride", t.stride));
  t.forgetting = num("forgetting", t.forgetting);
  t.window = std::max<std::uint32_t>(1, count_param<std::uint32_t>(doc, "window", t.window));
  t.warmup = count_param<std::uint64_t>(doc, "warmup", t.warmup);
  t.plan_every = count_param<std::uint64_t>(doc, "plan_every", t.plan_every);
  t.horizon_ms = count_param<std::int64_t>(doc, "horizon_ms", t.horizon_ms);
  t.tick_ms = doc.c_i.tick_ms;
  if (!(t.forgetting > 0 && t.forgetting <= 1)) throw Error(Errc::InvalidArgument, "forgetting must lie in (0, 1]");
  return t;
}

EstimatorParams TwinParams::estimator() const {
  EstimatorParams e;
  e.heat_capacity = plant.heat_capacity;
  e.heater_power = plant.heater_power;
  e.ambient = plant.ambient;
  e.forgetting = forgetting;
  e.g_init = conductance;
  return e;
}

DetectorParams TwinParams::detector() const {
  DetectorParams d;
  d.conductance_closed = plant.conductance_closed;
  d.conductance_open = plant.conductance_open;
  d.window = window;
  d.warmup = warmup;
  return d;
}

IncubatorProgram::IncubatorProgram(const config::ConfigDoc& doc)
    : params_(TwinParams::from(doc)),
      t_box_key_(sensor_key(doc, "t_box")),
      heater_key_(sensor_key(doc, "heater")),
      sampler_(params_.stride, params_.plant.ambient),
      estimator_(EstimatorState::initial(params_.estimator())) {
  if (!heater_key_) t_box_key_.reset();
  sim_.t_box = params_.t_init;
  sim_.heater_on = params_.heater_init;
}

void IncubatorProgram::on_tick(const TickContext& ctx) {
  if (live()) {
    live_tick(ctx);
  } else {
    sim_tick(ctx);
  }
}

std::optional<std::string> IncubatorProgram::consume(std::int64_t ts, double t_box, bool heater, const InstanceId& id,
                                                     datahub::DataHub& hub) {
  auto obs = sampler_.push(ts, t_box, heater);
  if (!obs) return std::nullopt;
  const auto before = estimator_.updates;
  estimator_ = estimator_update(estimator_, params_.estimator(), *obs);
  if (estimator_.updates == before) return std::nullopt;
  hub.append_point({lifecycle::instance_series(id, "g_hat"), ts, estimator_.g_hat});
  return detect_anomaly(detector_, estimator_, params_.detector());
}

void IncubatorProgram::live_tick(const TickContext& ctx) {
  const auto from = cursor_ ? *cursor_ + 1 : kMin;
  const auto temps = ctx.hub.query_range(*t_box_key_, from, kMax);
  const auto heats = ctx.hub.query_range(*heater_key_, from, kMax);
  std::vector<std::string> anomalies;
  if (!temps.empty() && !heats.empty()) {
    const auto limit = std::min(temps.back().ts, heats.back().ts);
    std::map<std::int64_t, double> heater_at;
    for (const auto& h : heats) {
      if (h.ts <= limit) heater_at[h.ts] = h.value;
    }
    for (const auto& p : temps) {
      if (p.ts > limit) break;
      cursor_ = p.ts;
      auto h = heater_at.find(p.ts);
      if (h == heater_at.end()) continue;
      if (auto ev = consume(p.ts, p.value, h->second > 0.5, ctx.instance, ctx.hub)) anomalies.push_back(*ev);
    }
  }
  for (const auto& type : anomalies) {
    datahub::Event e;
    e.source = datahub::EventSource::DT;
    e.origin = ctx.instance.str();
    e.type = type;
    e.payload = {{"g_hat", estimator_.g_hat}, {"threshold", params_.detector().threshold()}};
    ctx.hub.publish_event(std::move(e));
  }
  ++ticks_since_plan_;
  const bool scheduled = params_.plan_every > 0 && ticks_since_plan_ >= params_.plan_every;
  if (!anomalies.empty() || scheduled) {
    ticks_since_plan_ = 0;
    const auto id = ctx.instance;
    const std::string reason = anomalies.empty() ? "schedule" : anomalies.back();
    ctx.post([id, reason](lifecycle::LifecycleEngine& engine) { plan(engine, id, reason); });
  }
}

void IncubatorProgram::sim_tick(const TickContext&) {
  PlantParams p = params_.plant;
  p.conductance_closed = params_.conductance;
  p.conductance_open = std::max(p.conductance_open, 4.0 * params_.conductance);
  sim_.heater_on = controller_step(sim_.t_box, params_.controller, sim_.heater_on);
  sim_ = plant_step(sim_, p, params_.tick_ms);
  trace_.push_back(sim_.t_box);
}

void IncubatorProgram::on_config_changed(const config::ConfigDoc&, const config::ConfigDoc& next) {
  auto p = TwinParams::from(next);
  if (p.stride != params_.stride || p.plant.ambient != params_.plant.ambient) {
    sampler_ = StrideSampler(p.stride, p.plant.ambient);
  }
  params_ = p;
  t_box_key_ = sensor_key(next, "t_box");
  heater_key_ = sensor_key(next, "heater");
  if (!heater_key_) t_box_key_.reset();
}

json IncubatorProgram::estimate_json() const {
  double ss = 0.0;
  for (double r : estimator_.residuals) ss += r * r;
  const double rms = estimator_.residuals.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(estimator_.residuals.size()));
  return {{"g_hat", estimator_.updates > 0 ? json(estimator_.g_hat) : json(nullptr)},
          {"updates", estimator_.updates},
          {"skipped", estimator_.skipped},
          {"uncertainty", estimator_.p_cov},
          {"residual_rms", rms},
          {"warmed_up", estimator_.updates >= params_.warmup},
          {"lid_open", detector_.lid_open}};
}

json IncubatorProgram::analyse(const AnalysisRequest& req, const AnalysisContext& ctx) {
  if (live()) {
    auto out = estimate_json();
    if (estimator_.updates > 0) {
      ctx.hub.append_point({lifecycle::instance_series(ctx.instance, "analysis.g_hat"), ctx.now_ms, estimator_.g_hat});
    }
    return out;
  }
  const double target = req.params.value("target", params_.controller.setpoint);
  double ss = 0.0;
  for (double t : trace_) ss += (t - target) * (t - target);
  return {{"mse", trace_.empty() ? json(nullptr) : json(ss / static_cast<double>(trace_.size()))},
          {"samples", trace_.size()},
          {"target", target},
          {"t_box", sim_.t_box}};
}

json IncubatorProgram::replay(const AnalysisRequest& req, const AnalysisContext& ctx) {
  if (!live()) throw Error(Errc::NoHistory, "a simulation twin has no recorded inputs to replay");
  const auto temps = ctx.hub.query_range(*t_box_key_, req.t0, req.t1);
  const auto heats = ctx.hub.query_range(*heater_key_, req.t0, req.t1);
  if (temps.empty() || heats.empty()) throw Error(Errc::NoHistory, "no telemetry recorded in the requested range");
  std::map<std::int64_t, double> heater_at;
  for (const auto& h : heats) heater_at[h.ts] = h.value;
  StrideSampler sampler(params_.stride, params_.plant.ambient);
  auto est = EstimatorState::initial(params_.estimator());
  std::uint64_t samples = 0;
  for (const auto& p : temps) {
    auto h = heater_at.find(p.ts);
    if (h == heater_at.end()) continue;
    ++samples;
    if (auto obs = sampler.push(p.ts, p.value, h->second > 0.5)) est = estimator_update(est, params_.estimator(), *obs);
  }
  return {{"g_hat", est.updates > 0 ? json(est.g_hat) : json(nullptr)},
          {"updates", est.updates},
          {"skipped", est.skipped},
          {"uncertainty", est.p_cov},
          {"samples", samples},
          {"from", temps.front().ts},
          {"to", temps.back().ts}};
}

json IncubatorProgram::save_state() const {
  return {{"sampler", sampler_.save()},
          {"estimator", to_json(estimator_)},
          {"detector", {{"lid_open", detector_.lid_open}, {"streak", detector_.streak}}},
          {"cursor", cursor_ ? json(*cursor_) : json(nullptr)},
          {"ticks_since_plan", ticks_since_plan_},
          {"sim", {{"t_box", sim_.t_box}, {"heater_on", sim_.heater_on}, {"t_ms", sim_.t_ms}}},
          {"trace", trace_}};
}

void IncubatorProgram::load_state(const json& state) {
  if (state.is_null() || state.empty()) return;
  sampler_.load(state.at("sampler"));
  estimator_ = estimator_state_from_json(state.at("estimator"));
  detector_.lid_open = state.at("detector").at("lid_open").get<bool>();
  detector_.streak = state.at("detector").at("streak").get<std::uint32_t>();
  const auto& c = state.at("cursor");
  cursor_ = c.is_null() ? std::nullopt : std::optional<std::int64_t>(c.get<std::int64_t>());
  ticks_since_plan_ = state.value("ticks_since_plan", std::uint64_t{0});
  const auto& s = state.at("sim");
  sim_.t_box = s.at("t_box").get<double>();
  sim_.heater_on = s.at("heater_on").get<bool>();
  sim_.t_ms = s.at("t_ms").get<std::int64_t>();
  trace_ = state.value("trace", std::vector<double>{});
}

void register_programs(lifecycle::ProgramRegistry& programs) {
  programs.add(std::string(kIncubatorEntry),
               [](const config::ConfigDoc& doc) { return std::make_unique<IncubatorProgram>(doc); });
}

}  // namespace dtaas::incubator
