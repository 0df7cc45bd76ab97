#include "dtaas/gateway/gateway.hpp"

#include <charconv>
#include <limits>

#include <spdlog/spdlog.h>

#include "dtaas/config/diff.hpp"
#include "dtaas/config/parser.hpp"
#include "dtaas/config/validator.hpp"
#include "dtaas/graph/query.hpp"
#include "dtaas/graph/rules.hpp"
#include "dtaas/incubator/planner.hpp"
#include "dtaas/incubator/twin.hpp"

namespace dtaas::gateway {

using nlohmann::json;
using lifecycle::Phase;

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::Unauthorized: return 401;
    case Errc::Forbidden: return 403;
    case Errc::NotFound:
    case Errc::UnknownSnapshot:
    case Errc::UnknownTrigger:
    case Errc::UnknownTarget: return 404;
    case Errc::Conflict:
    case Errc::InUse:
    case Errc::InvalidTransition:
    case Errc::NoAnalysisPipeline:
    case Errc::NoHistory:
    case Errc::NoEstimate:
    case Errc::AlreadyReleased:
    case Errc::WorkspaceReleased: return 409;
    case Errc::ValidationFailed:
    case Errc::RevalidationFailed:
    case Errc::RootMismatch:
    case Errc::UnknownPath:
    case Errc::DanglingReference: return 422;
    case Errc::CapacityExhausted: return 503;
    case Errc::InvalidArgument:
    case Errc::ParseError:
    case Errc::UnknownField:
    case Errc::MalformedQuery:
    case Errc::NonFinite:
    case Errc::InvertedRange:
    case Errc::EmptyCandidates: return 400;
    case Errc::Internal: return 500;
  }
  return 500;
}

Response error_response(const std::exception& e) {
  Response r;
  Errc code = Errc::Internal;
  if (const auto* err = dynamic_cast<const Error*>(&e)) code = err->code();
  r.status = http_status(code);
  r.body = {{"error", {{"code", errc_name(code)}, {"message", e.what()}}}};
  if (const auto* v = dynamic_cast<const config::ValidationError*>(&e)) r.body["report"] = config::to_json(v->report());
  return r;
}

std::optional<std::string> RouteContext::query(const std::string& name) const {
  auto it = request.query.find(name);
  if (it == request.query.end()) return std::nullopt;
  return it->second;
}

json RouteContext::json_body() const {
  if (request.body.empty()) return json::object();
  try {
    return json::parse(request.body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("request body: ") + e.what());
  }
}

namespace {

std::vector<std::string_view> split(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '/') {
      ++i;
      continue;
    }
    const auto end = path.find('/', i);
    out.push_back(path.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i));
    if (end == std::string_view::npos) break;
    i = end;
  }
  return out;
}

bool match(std::string_view pattern, std::string_view path, std::map<std::string, std::string>& params) {
  const auto ps = split(pattern);
  const auto xs = split(path);
  if (ps.size() != xs.size()) return false;
  std::map<std::string, std::string> found;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].size() > 2 && ps[i].front() == '{' && ps[i].back() == '}') {
      found.emplace(std::string(ps[i].substr(1, ps[i].size() - 2)), std::string(xs[i]));
    } else if (ps[i] != xs[i]) {
      return false;
    }
  }
  params = std::move(found);
  return true;
}

std::int64_t int_arg(const RouteContext& ctx, const std::string& name, std::int64_t fallback) {
  auto v = ctx.query(name);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(Errc::InvalidArgument, "query parameter '" + name + "' must be an integer");
  }
  return out;
}

bool flag_arg(const RouteContext& ctx, const std::string& name) {
  auto v = ctx.query(name);
  return v && (*v == "1" || *v == "true");
}

Response ok(json body, int status = 200) { return {status, std::move(body)}; }

/// Accepts `{"config": {...}}`, `{"config_text": "..."}` or a bare document.
config::ConfigDoc config_from_body(const json& body, const char* key = "config") {
  if (body.contains(std::string(key) + "_text")) return config::parse_config(body.at(std::string(key) + "_text").get<std::string>());
  if (body.contains(key)) return config::config_from_json(body.at(key));
  return config::config_from_json(body);
}

json view_json(const lifecycle::InstanceView& v) { return lifecycle::to_json(v, true); }

}  // namespace

Gateway::Gateway(Platform& platform) : platform_(platform) {
  add("GET", "/health", Access::Public, "health", [this](RouteContext&) {
    return ok({{"status", "ok"},
               {"mode", platform_.config().mode == exec::RunMode::Manual ? "manual" : "realtime"},
               {"time_ms", platform_.clock().now_ms()}});
  });
  add_asset_routes();
  add_dt_routes();
  add_data_routes();
  add_platform_routes();
}

void Gateway::add(std::string method, std::string pattern, Access access, std::string operation,
                  std::function<Response(RouteContext&)> handler) {
  routes_.push_back({std::move(method), std::move(pattern), access, std::move(operation), std::move(handler)});
}

void Gateway::require_owner(const RouteContext& ctx, const InstanceId& id) const {
  if (ctx.principal.role == Role::Admin) return;
  const auto v = platform_.engine().get(id);
  if (v.owner != ctx.principal.user) {
    throw Error(Errc::Forbidden, "'" + id.str() + "' belongs to another user");
  }
}

Response Gateway::handle(const Request& request) {
  const Route* route = nullptr;
  bool path_known = false;
  std::map<std::string, std::string> params;
  for (const auto& r : routes_) {
    std::map<std::string, std::string> p;
    if (!match(r.pattern, request.path, p)) continue;
    path_known = true;
    if (r.method == request.method) {
      route = &r;
      params = std::move(p);
      break;
    }
  }
  if (!route) {
    Response r;
    r.status = path_known ? 405 : 404;
    r.body = {{"error",
               {{"code", path_known ? "METHOD_NOT_ALLOWED" : errc_name(Errc::NotFound)},
                {"message", request.method + " " + request.path + (path_known ? " is not supported" : " is not a known endpoint")}}}};
    return r;
  }
  try {
    Principal anonymous;
    std::optional<Principal> principal;
    if (route->access != Access::Public) {
      principal = platform_.tokens().authenticate(request.authorization);
      if (!principal) throw Error(Errc::Unauthorized, "missing or invalid bearer token");
      if (!allowed(principal->role, route->access)) {
        throw Error(Errc::Forbidden, std::string(role_name(principal->role)) + " may not call " + route->method +
                                         " " + route->pattern);
      }
    }
    RouteContext ctx{request, principal ? *principal : anonymous, std::move(params)};
    return route->handler(ctx);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return error_response(Error(Errc::InvalidArgument, std::string("malformed request: ") + e.what()));
  } catch (const std::exception& e) {
    spdlog::error("{} {} failed: {}", request.method, request.path, e.what());
    return error_response(e);
  }
}

void Gateway::add_asset_routes() {
  auto& reg = platform_.registry();
  add("POST", "/assets", Access::Write, "register_asset", [&reg](RouteContext& ctx) {
    const auto id = reg.register_asset(registry::new_asset_from_json(ctx.json_body()), ctx.principal.user);
    return ok(registry::to_json(reg.get_asset(id, ctx.principal.user)), 201);
  });
  add("GET", "/assets", Access::Read, "list_assets", [&reg](RouteContext& ctx) {
    registry::AssetQuery q;
    if (auto k = ctx.query("kind")) {
      q.kind = registry::parse_kind(*k);
      if (!q.kind) throw Error(Errc::InvalidArgument, "unknown asset kind '" + *k + "'");
    }
    if (auto v = ctx.query("visibility")) {
      q.visibility = registry::parse_visibility(*v);
      if (!q.visibility) throw Error(Errc::InvalidArgument, "unknown visibility '" + *v + "'");
    }
    q.owner = ctx.query("owner");
    q.text = ctx.query("text");
    json out = json::array();
    for (const auto& r : reg.list_assets(q, ctx.principal.user)) out.push_back(registry::to_json(r));
    return ok({{"assets", out}});
  });
  add("GET", "/assets/{id}", Access::Read, "get_asset", [&reg](RouteContext& ctx) {
    return ok(registry::to_json(reg.get_asset(AssetId(ctx.param("id")), ctx.principal.user)));
  });
  add("GET", "/assets/{id}/content", Access::Read, "read_content", [&reg](RouteContext& ctx) {
    return ok({{"id", ctx.param("id")}, {"content", reg.read_content(AssetId(ctx.param("id")), ctx.principal.user)}});
  });
  add("PATCH", "/assets/{id}", Access::Write, "update_asset", [&reg](RouteContext& ctx) {
    return ok(registry::to_json(
        reg.update_asset(AssetId(ctx.param("id")), registry::patch_from_json(ctx.json_body()), ctx.principal.user)));
  });
  add("DELETE", "/assets/{id}", Access::Write, "delete_asset", [&reg](RouteContext& ctx) {
    reg.delete_asset(AssetId(ctx.param("id")), ctx.principal.user);
    return ok({{"deleted", ctx.param("id")}});
  });
  add("POST", "/assets/{id}/share", Access::Write, "share_asset", [&reg](RouteContext& ctx) {
    return ok(registry::to_json(reg.share_asset(AssetId(ctx.param("id")), ctx.principal.user)));
  });
}

void Gateway::add_dt_routes() {
  auto& engine = platform_.engine();
  add("POST", "/dts", Access::Write, "create_dt", [&engine](RouteContext& ctx) {
    const auto doc = config_from_body(ctx.json_body());
    return ok(view_json(engine.create_dt(doc, ctx.principal.user)), 201);
  });
  add("GET", "/dts", Access::Read, "list_dts", [&engine](RouteContext& ctx) {
    json out = json::array();
    for (const auto& v : engine.list(ctx.query("owner"))) {
      if (!v.ephemeral) out.push_back(lifecycle::to_json(v));
    }
    return ok({{"dts", out}});
  });
  add("GET", "/dts/{id}", Access::Read, "get_dt", [&engine](RouteContext& ctx) {
    return ok(view_json(engine.get(InstanceId(ctx.param("id")))));
  });
  add("POST", "/dts/{id}/execute", Access::Write, "execute_dt", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    engine.execute_dt(id);
    return ok(view_json(engine.get(id)));
  });
  add("POST", "/dts/{id}/save", Access::Write, "save_dt", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    const auto snap = engine.save_dt(id);
    return ok({{"instance", id.str()}, {"snapshot", snap.str()}}, 201);
  });
  add("POST", "/dts/{id}/restore", Access::Write, "restore_dt", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    const auto body = ctx.json_body();
    if (!body.contains("snapshot")) throw Error(Errc::InvalidArgument, "body needs 'snapshot'");
    engine.restore_dt(id, SnapshotId(body.at("snapshot").get<std::string>()));
    return ok(view_json(engine.get(id)));
  });
  add("POST", "/dts/{id}/terminate", Access::Write, "terminate_dt", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    engine.terminate_dt(id);
    return ok(view_json(engine.get(id)));
  });
  add("POST", "/dts/{id}/evolve", Access::Write, "evolve_dt", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    const auto body = ctx.json_body();
    if (body.contains("event")) {
      const auto& ev = body.at("event");
      graph::RuleEvent rev{ev.at("type").get<std::string>(), ev.value("source", ctx.principal.user),
                           ev.value("payload", json::object())};
      std::optional<std::string> rule;
      if (body.contains("rule")) rule = body.at("rule").get<std::string>();
      return ok(lifecycle::to_json(engine.evolve_dt(id, rev, rule)));
    }
    return ok(lifecycle::to_json(engine.evolve_dt(id, config_from_body(body))));
  });
  add("GET", "/dts/{id}/analysis", Access::Read, "analyse_dt", [&engine](RouteContext& ctx) {
    lifecycle::AnalysisRequest req;
    if (auto m = ctx.query("mode")) {
      auto mode = lifecycle::parse_analysis_mode(*m);
      if (!mode) throw Error(Errc::InvalidArgument, "unknown analysis mode '" + *m + "'");
      req.mode = *mode;
    }
    req.t0 = int_arg(ctx, "from", req.t0);
    req.t1 = int_arg(ctx, "to", req.t1);
    return ok(engine.analyse_dt(InstanceId(ctx.param("id")), req));
  });
  add("POST", "/dts/{id}/whatif", Access::Write, "run_whatif", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    const auto body = ctx.json_body();
    const auto candidates = incubator::candidates_from_json(body.value("candidates", json::array()));
    const auto horizon = body.contains("horizon_ms")
                             ? body.at("horizon_ms").get<std::int64_t>()
                             : incubator::TwinParams::from(*engine.get(id).config).horizon_ms;
    return ok(incubator::to_json(incubator::run_whatif(engine, id, candidates, horizon)));
  });
  add("GET", "/dts/{id}/rules", Access::Read, "list_rules", [&engine](RouteContext& ctx) {
    json out = json::array();
    for (const auto& r : engine.rules(InstanceId(ctx.param("id")))) out.push_back(graph::to_json(r));
    return ok({{"rules", out}});
  });
  add("POST", "/dts/{id}/rules", Access::Write, "register_rule", [this, &engine](RouteContext& ctx) {
    const InstanceId id(ctx.param("id"));
    require_owner(ctx, id);
    auto spec = graph::rule_spec_from_json(ctx.json_body());
    const auto j = graph::to_json(spec.rule);
    engine.register_rule(id, std::move(spec.rule));
    return ok(j, 201);
  });
  add("GET", "/graph/{id}", Access::Read, "map_config", [&engine](RouteContext& ctx) {
    const auto g = engine.graph(InstanceId(ctx.param("id")));
    return ok({{"instance", ctx.param("id")}, {"canonical", g.canonical()}, {"graph", g.to_json()}});
  });
  add("GET", "/graph/{id}/consistency", Access::Read, "check_consistency", [&engine](RouteContext& ctx) {
    return ok(graph::to_json(engine.consistency(InstanceId(ctx.param("id")))));
  });
  add("POST", "/graph/query", Access::Write, "run_query", [&engine](RouteContext& ctx) {
    const auto body = ctx.json_body();
    const auto g = engine.graph(InstanceId(body.at("dt").get<std::string>()));
    const auto q = graph::parse_query(body.at("query").get<std::string>());
    const auto rows = graph::run_query(g, q);
    return ok({{"count", rows.size()}, {"bindings", graph::bindings_to_json(g, rows)}});
  });
  add("POST", "/configs/validate", Access::Write, "validate_config", [this](RouteContext& ctx) {
    const auto doc = config_from_body(ctx.json_body());
    auto resolver = platform_.registry().resolver_for(ctx.principal.user);
    return ok(config::to_json(config::validate_config(doc, *resolver)));
  });
  add("POST", "/configs/diff", Access::Write, "diff_config", [](RouteContext& ctx) {
    const auto body = ctx.json_body();
    const auto a = config_from_body(body, "old");
    const auto b = config_from_body(body, "new");
    return ok({{"changes", config::to_json(config::diff_config(a, b))}});
  });
}

void Gateway::add_data_routes() {
  auto& hub = platform_.hub();
  add("GET", "/data/series", Access::Read, "series_keys", [&hub](RouteContext&) {
    return ok({{"keys", hub.series_keys()}});
  });
  add("GET", "/data/series/{key}", Access::Read, "query_range", [&hub](RouteContext& ctx) {
    const auto& key = ctx.param("key");
    const auto pts = hub.query_range(key, int_arg(ctx, "from", std::numeric_limits<std::int64_t>::min()),
                                     int_arg(ctx, "to", std::numeric_limits<std::int64_t>::max()));
    json out = json::array();
    for (const auto& p : pts) out.push_back({{"ts", p.ts}, {"value", p.value}});
    return ok({{"key", key}, {"points", out}});
  });
  add("GET", "/data/series/{key}/latest", Access::Read, "latest", [&hub](RouteContext& ctx) {
    const auto& key = ctx.param("key");
    auto p = hub.latest(key);
    if (!p) throw Error(Errc::NotFound, "series '" + key + "' has no points");
    return ok(datahub::to_json(*p));
  });
  add("POST", "/data/series/{key}", Access::Write, "append_batch", [&hub](RouteContext& ctx) {
    const auto& key = ctx.param("key");
    const auto body = ctx.json_body();
    std::vector<datahub::SeriesPoint> pts;
    for (const auto& p : body.at("points")) pts.push_back({key, p.at("ts").get<std::int64_t>(), p.at("value").get<double>()});
    hub.append_batch(pts);
    return ok({{"key", key}, {"appended", pts.size()}}, 201);
  });
  add("POST", "/events", Access::Write, "publish_event", [&hub](RouteContext& ctx) {
    const auto body = ctx.json_body();
    datahub::Event e;
    e.type = body.at("type").get<std::string>();
    if (e.type.empty()) throw Error(Errc::InvalidArgument, "event type must be nonempty");
    e.source = datahub::EventSource::User;
    if (body.contains("source")) {
      auto s = datahub::parse_source(body.at("source").get<std::string>());
      if (!s) throw Error(Errc::InvalidArgument, "unknown event source");
      e.source = *s;
    }
    e.origin = body.value("origin", ctx.principal.user);
    e.payload = body.value("payload", json::object());
    const auto id = hub.publish_event(std::move(e));
    return ok({{"id", id}}, 201);
  });
  add("GET", "/events", Access::Read, "poll_events", [&hub](RouteContext& ctx) {
    datahub::EventFilter f;
    f.type = ctx.query("type");
    f.origin = ctx.query("origin");
    if (auto s = ctx.query("source")) {
      f.source = datahub::parse_source(*s);
      if (!f.source) throw Error(Errc::InvalidArgument, "unknown event source '" + *s + "'");
    }
    f.limit = static_cast<std::size_t>(std::max<std::int64_t>(0, int_arg(ctx, "limit", 0)));
    json out = json::array();
    for (const auto& e : hub.poll_events(static_cast<std::uint64_t>(std::max<std::int64_t>(0, int_arg(ctx, "after", 0))), f)) {
      out.push_back(datahub::to_json(e));
    }
    return ok({{"events", out}, {"last_id", hub.last_event_id()}});
  });
  add("POST", "/commands", Access::Write, "send_command", [&hub](RouteContext& ctx) {
    const auto body = ctx.json_body();
    datahub::Command c;
    c.target = body.at("target").get<std::string>();
    c.name = body.at("name").get<std::string>();
    c.args = body.value("args", json::object());
    const auto id = hub.send_command(std::move(c));
    return ok({{"id", id}}, 201);
  });
  add("GET", "/commands", Access::Read, "commands", [&hub](RouteContext& ctx) {
    auto target = ctx.query("target");
    if (!target) throw Error(Errc::InvalidArgument, "query parameter 'target' is required");
    json out = json::array();
    for (const auto& c : hub.commands(*target)) out.push_back(datahub::to_json(c));
    return ok({{"commands", out}});
  });
  add("POST", "/commands/fetch", Access::Write, "fetch_commands", [&hub](RouteContext& ctx) {
    const auto target = ctx.json_body().at("target").get<std::string>();
    json out = json::array();
    for (const auto& c : hub.fetch_commands(target)) out.push_back(datahub::to_json(c));
    return ok({{"commands", out}});
  });
  add("POST", "/connectors", Access::Write, "register_connector", [&hub](RouteContext& ctx) {
    const auto body = ctx.json_body();
    const auto name = body.at("name").get<std::string>();
    if (name.empty()) throw Error(Errc::InvalidArgument, "connector name must be nonempty");
    const auto channels = body.at("channels").get<std::vector<std::string>>();
    hub.register_connector(name, channels);
    return ok({{"name", name}, {"channels", channels}}, 201);
  });
}

void Gateway::add_platform_routes() {
  auto& exec = platform_.exec();
  add("GET", "/workspaces", Access::Read, "workspaces", [&exec](RouteContext& ctx) {
    json out = json::array();
    for (const auto& w : exec.workspaces(flag_arg(ctx, "active"))) out.push_back(exec::to_json(w));
    const auto avail = exec.available();
    return ok({{"workspaces", out},
               {"active", exec.active_count()},
               {"available", {{"cpu_units", avail.cpu_units}, {"memory_mb", avail.memory_mb}}}});
  });
  add("GET", "/usage", Access::Read, "usage_report", [&exec](RouteContext& ctx) {
    const auto user = ctx.query("user").value_or(ctx.principal.user);
    const bool all = flag_arg(ctx, "all");
    if ((all || user != ctx.principal.user) && !allowed(ctx.principal.role, Access::UsageOther)) {
      throw Error(Errc::Forbidden, "only Admin may read other users' usage");
    }
    if (all) {
      json out = json::array();
      for (const auto& u : exec.usage_all()) out.push_back(exec::to_json(u));
      return ok({{"usage", out}});
    }
    return ok(exec::to_json(exec.usage_report(user)));
  });
  add("GET", "/admin/principals", Access::Admin, "list_principals", [this](RouteContext&) {
    json out = json::array();
    for (const auto& p : platform_.tokens().list()) out.push_back(to_json(p));
    return ok({{"principals", out}});
  });
  add("POST", "/admin/principals", Access::Admin, "add_principal", [this](RouteContext& ctx) {
    const auto body = ctx.json_body();
    auto role = parse_role(body.at("role").get<std::string>());
    if (!role) throw Error(Errc::InvalidArgument, "unknown role");
    Principal p{body.at("user").get<std::string>(), *role, body.at("token").get<std::string>()};
    platform_.tokens().add(p);
    return ok(to_json(p), 201);
  });
  add("DELETE", "/admin/principals/{user}", Access::Admin, "remove_principal", [this](RouteContext& ctx) {
    platform_.tokens().remove(ctx.param("user"));
    return ok({{"deleted", ctx.param("user")}});
  });
}

}  // namespace dtaas::gateway
