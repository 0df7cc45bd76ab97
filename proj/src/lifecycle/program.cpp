#include "dtaas/lifecycle/program.hpp"

#include "dtaas/common/error.hpp"

namespace dtaas::lifecycle {

using nlohmann::json;

std::string instance_series(const InstanceId& id, std::string_view name) {
  return "dt." + id.str() + "." + std::string(name);
}

std::string_view analysis_mode_name(AnalysisMode m) noexcept {
  switch (m) {
    case AnalysisMode::Auto: return "auto";
    case AnalysisMode::Live: return "live";
    case AnalysisMode::Historical: return "historical";
  }
  return "auto";
}

std::optional<AnalysisMode> parse_analysis_mode(std::string_view text) noexcept {
  if (text == "auto") return AnalysisMode::Auto;
  if (text == "live") return AnalysisMode::Live;
  if (text == "historical") return AnalysisMode::Historical;
  return std::nullopt;
}

ProgramRegistry::ProgramRegistry() {
  add(std::string(kEchoEntry), [](const config::ConfigDoc& doc) { return std::make_unique<EchoProgram>(doc); });
}

void ProgramRegistry::add(std::string entry, ProgramFactory factory) {
  std::lock_guard lock(mu_);
  factories_[std::move(entry)] = std::move(factory);
}

bool ProgramRegistry::knows(std::string_view entry) const {
  std::lock_guard lock(mu_);
  return factories_.find(entry) != factories_.end();
}

std::unique_ptr<DtProgram> ProgramRegistry::make(std::string_view entry, const config::ConfigDoc& doc) const {
  ProgramFactory factory;
  {
    std::lock_guard lock(mu_);
    auto it = factories_.find(entry);
    if (it == factories_.end()) it = factories_.find(kEchoEntry);
    factory = it->second;
  }
  return factory(doc);
}

EchoProgram::EchoProgram(const config::ConfigDoc& doc) {
  for (const auto& ch : doc.c_pt.channels) {
    if (ch.role == config::ChannelRole::Sensor || ch.role == config::ChannelRole::Event) {
      channels_[ch.name].key = ch.key;
    }
  }
}

void EchoProgram::consume(Channel& ch, const std::vector<datahub::SeriesPoint>& pts) {
  for (const auto& p : pts) {
    ++ch.count;
    ch.sum += p.value;
    ch.cursor = p.ts;
  }
}

void EchoProgram::on_tick(const TickContext& ctx) {
  for (auto& [name, ch] : channels_) {
    const auto from = ch.cursor ? *ch.cursor + 1 : std::numeric_limits<std::int64_t>::min();
    // Points stamped at the cursor after it was taken are not revisited.
    const auto pts = ctx.hub.query_range(ch.key, from, std::numeric_limits<std::int64_t>::max());
    consume(ch, pts);
    if (!pts.empty()) {
      std::vector<datahub::SeriesPoint> mirrored;
      mirrored.reserve(pts.size());
      for (const auto& p : pts) mirrored.push_back({ctx.series(name), p.ts, p.value});
      ctx.hub.append_batch(mirrored);
    }
  }
}

json EchoProgram::save_state() const {
  json channels = json::object();
  for (const auto& [name, ch] : channels_) {
    json c = {{"count", ch.count}, {"sum", ch.sum}};
    c["cursor"] = ch.cursor ? json(*ch.cursor) : json(nullptr);
    channels[name] = std::move(c);
  }
  return {{"channels", std::move(channels)}};
}

void EchoProgram::load_state(const json& state) {
  if (!state.contains("channels")) return;
  for (auto& [name, ch] : channels_) {
    if (!state["channels"].contains(name)) continue;
    const auto& c = state["channels"][name];
    ch.count = c.value("count", std::uint64_t{0});
    ch.sum = c.value("sum", 0.0);
    ch.cursor = c["cursor"].is_null() ? std::nullopt : std::optional<std::int64_t>(c["cursor"].get<std::int64_t>());
  }
}

json EchoProgram::summary() const {
  json out = json::object();
  for (const auto& [name, ch] : channels_) {
    out[name] = {{"count", ch.count}, {"mean", ch.count ? json(ch.sum / static_cast<double>(ch.count)) : json(nullptr)}};
  }
  return out;
}

json EchoProgram::analyse(const AnalysisRequest&, const AnalysisContext& ctx) {
  for (const auto& [name, ch] : channels_) {
    if (ch.count) {
      ctx.hub.append_point({instance_series(ctx.instance, name + ".mean"), ctx.now_ms,
                            ch.sum / static_cast<double>(ch.count)});
    }
  }
  return {{"estimates", summary()}, {"anomalies", json::array()}};
}

json EchoProgram::replay(const AnalysisRequest& req, const AnalysisContext& ctx) {
  std::uint64_t total = 0;
  for (auto& [name, ch] : channels_) {
    consume(ch, ctx.hub.query_range(ch.key, req.t0, req.t1));
    total += ch.count;
  }
  if (total == 0) throw Error(Errc::NoHistory, "no stored input series for '" + ctx.instance.str() + "'");
  return {{"estimates", summary()}, {"anomalies", json::array()}};
}

}  // namespace dtaas::lifecycle
