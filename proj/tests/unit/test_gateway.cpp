#include <doctest.h>

#include <set>

#include "dtaas/common/error.hpp"
#include "dtaas/config/parser.hpp"
#include "dtaas/config/validator.hpp"
#include "dtaas/incubator/demo.hpp"
#include "platform_support.hpp"

using namespace dtaas;
using namespace dtaas::gateway;
using nlohmann::json;

namespace {

/// The RBAC matrix, written out independently of allowed().
bool expected_allowed(Role role, Access access) {
  switch (role) {
    case Role::Viewer: return access == Access::Public || access == Access::Read;
    case Role::Developer: return access != Access::UsageOther && access != Access::Admin;
    case Role::Admin: return true;
  }
  return false;
}

std::string fill(const std::string& pattern) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{') {
      i = pattern.find('}', i);
      out += "placeholder";
    } else {
      out += pattern[i];
    }
  }
  return out;
}

std::string code(const Response& r) { return r.body.at("error").at("code").get<std::string>(); }

json incubator_body() { return {{"config_text", std::string(incubator::incubator_config_text())}}; }

}  // namespace

TEST_CASE("every error code has a stable name and a non-500 status") {
  std::set<std::string> names;
  for (int i = 0; i <= static_cast<int>(Errc::Internal); ++i) {
    const auto c = static_cast<Errc>(i);
    const auto name = std::string(errc_name(c));
    CHECK(!name.empty());
    CHECK(names.insert(name).second);
    CHECK((http_status(c) == 500) == (c == Errc::Internal));
    CHECK(http_status(c) >= 400);
  }
  CHECK(http_status(Errc::Unauthorized) == 401);
  CHECK(http_status(Errc::Forbidden) == 403);
  CHECK(http_status(Errc::NotFound) == 404);
  CHECK(http_status(Errc::InvalidTransition) == 409);
  CHECK(http_status(Errc::ValidationFailed) == 422);
  CHECK(error_response(std::runtime_error("boom")).status == 500);
}

TEST_CASE("route table covers each remote operation exactly once") {
  test::PlatformFixture f;
  std::map<std::string, int> ops;
  std::set<std::pair<std::string, std::string>> endpoints;
  for (const auto& r : f.gateway.routes()) {
    ++ops[r.operation];
    CHECK(endpoints.emplace(r.method, r.pattern).second);
  }
  for (const auto& [op, n] : ops) CHECK_MESSAGE(n == 1, op);
  for (const char* op : {"register_asset", "get_asset", "list_assets", "update_asset", "delete_asset", "share_asset",
                         "validate_config", "diff_config", "create_dt", "execute_dt", "save_dt", "restore_dt",
                         "analyse_dt", "evolve_dt", "terminate_dt", "map_config", "run_query", "check_consistency",
                         "register_rule", "query_range", "latest", "append_batch", "publish_event", "poll_events",
                         "send_command", "fetch_commands", "usage_report", "run_whatif", "health"}) {
    CHECK_MESSAGE(ops.count(op) == 1, op);
  }
}

TEST_CASE("authentication and unknown endpoints") {
  test::PlatformFixture f;
  CHECK(f.call("GET", "/health", nullptr, "").status == 200);
  auto r = f.call("GET", "/dts", nullptr, "");
  CHECK(r.status == 401);
  CHECK(code(r) == "UNAUTHORIZED");
  CHECK(f.call("GET", "/dts", nullptr, "wrong").status == 401);
  r = f.call("GET", "/nowhere");
  CHECK(r.status == 404);
  CHECK(code(r) == "NOT_FOUND");
  r = f.call("PUT", "/dts");
  CHECK(r.status == 405);
  CHECK(code(r) == "METHOD_NOT_ALLOWED");
  CHECK(f.call("POST", "/dts", nullptr, test::kViewerToken).status == 403);
  CHECK(f.call("GET", "/dts", nullptr, test::kViewerToken).status == 200);
}

TEST_CASE("RBAC sweep over the route table") {
  test::PlatformFixture f;
  const std::pair<Role, const char*> roles[] = {
      {Role::Viewer, test::kViewerToken}, {Role::Developer, test::kDevToken}, {Role::Admin, test::kAdminToken}};
  for (const auto& route : f.gateway.routes()) {
    for (const auto& [role, token] : roles) {
      const auto r = f.call(route.method, fill(route.pattern), json::object(), token);
      const bool want = expected_allowed(role, route.access);
      CHECK_MESSAGE((r.status != 403) == want, route.method << " " << route.pattern << " as " << role_name(role)
                                                             << " -> " << r.status);
      CHECK(r.status != 500);
    }
  }
  for (const auto& [role, token] : roles) {
    const auto other = f.call("GET", "/usage", nullptr, token, {{"user", "someone-else"}});
    CHECK((other.status != 403) == expected_allowed(role, Access::UsageOther));
    const auto own = f.call("GET", "/usage", nullptr, token);
    CHECK(own.status == 200);
  }
}

TEST_CASE("lifecycle over the gateway") {
  test::PlatformFixture f;
  auto r = f.call("POST", "/dts", incubator_body());
  REQUIRE(r.status == 201);
  const auto id = r.body.at("id").get<std::string>();
  CHECK(r.body.at("phase") == "Created");
  CHECK(f.call("GET", "/dts/" + id).body.at("config").at("name") == "incubator");

  // bob is a developer but not the owner
  r = f.call("POST", "/dts/" + id + "/execute", json::object(), test::kBobToken);
  CHECK(r.status == 403);
  CHECK(f.call("POST", "/dts/dt-999/execute", json::object(), test::kBobToken).status == 404);

  CHECK(f.call("POST", "/dts/" + id + "/save").status == 409);
  CHECK(f.call("POST", "/dts/" + id + "/execute").status == 200);
  f.platform.step(300);
  r = f.call("POST", "/dts/" + id + "/save");
  REQUIRE(r.status == 201);
  const auto snap = r.body.at("snapshot").get<std::string>();

  r = f.call("GET", "/dts/" + id + "/analysis");
  CHECK(r.status == 200);
  CHECK(r.body.at("mode") == "live");

  auto cfg = f.call("GET", "/dts/" + id).body.at("config");
  cfg["c_a"]["parameters"]["setpoint"] = 36.0;
  r = f.call("POST", "/dts/" + id + "/evolve", {{"config", cfg}});
  CHECK(r.status == 200);
  CHECK(r.body.at("applied") == true);
  cfg["c_a"]["parameters"]["band"] = -1.0;
  r = f.call("POST", "/dts/" + id + "/evolve", {{"config", cfg}});
  CHECK(r.status == 422);
  CHECK(r.body.contains("report"));

  r = f.call("POST", "/dts/" + id + "/evolve", {{"event", {{"type", "lid-open"}}}});
  CHECK(r.status == 200);
  CHECK(r.body.at("rule") == "lid-open-model");

  r = f.call("POST", "/dts/" + id + "/whatif",
             {{"candidates", json::array({{{"setpoint", 36.0}, {"band", 0.5}}, {{"setpoint", 36.0}, {"band", 5.0}}})},
              {"horizon_ms", 20000}});
  CHECK(r.status == 200);
  CHECK(r.body.at("ranked").size() == 2);
  CHECK(f.call("POST", "/dts/" + id + "/whatif", {{"candidates", json::array()}}).status == 400);

  CHECK(f.call("POST", "/dts/" + id + "/terminate").status == 200);
  r = f.call("POST", "/dts/" + id + "/terminate");
  CHECK(r.status == 409);
  CHECK(code(r) == "INVALID_TRANSITION");
  CHECK(f.call("GET", "/dts/" + id + "/analysis", nullptr, test::kDevToken, {{"mode", "historical"}}).status == 200);
  CHECK(f.call("POST", "/dts/" + id + "/restore", {{"snapshot", "snap-999"}}).status == 404);
  CHECK(f.call("POST", "/dts/" + id + "/restore", json::object()).status == 400);
  r = f.call("POST", "/dts/" + id + "/restore", {{"snapshot", snap}});
  CHECK(r.status == 200);
  CHECK(r.body.at("phase") == "Created");
}

TEST_CASE("asset endpoints") {
  test::PlatformFixture f;
  const json model = {{"kind", "Model"}, {"name", "box"}, {"ports", json::array({{{"name", "p"}, {"direction", "out"}}})},
                      {"content", "x"}};
  auto r = f.call("POST", "/assets", model);
  REQUIRE(r.status == 201);
  const auto id = r.body.at("id").get<std::string>();
  CHECK(f.call("POST", "/assets", model).status == 409);
  CHECK(f.call("GET", "/assets/" + id, nullptr, test::kBobToken).status == 403);
  r = f.call("POST", "/assets/" + id + "/share");
  CHECK(r.status == 200);
  const auto again = f.call("POST", "/assets/" + id + "/share");
  CHECK(again.status == 200);
  CHECK(again.body == r.body);
  CHECK(f.call("GET", "/assets/" + id, nullptr, test::kBobToken).status == 200);
  CHECK(f.call("GET", "/assets/" + id + "/content").body.at("content") == "x");
  CHECK(f.call("PATCH", "/assets/" + id, {{"name", "box2"}}).body.at("version") == 2);
  CHECK(f.call("GET", "/assets", nullptr, test::kDevToken, {{"kind", "Model"}}).body.at("assets").size() == 2);
  CHECK(f.call("GET", "/assets", nullptr, test::kDevToken, {{"kind", "Nope"}}).status == 400);
  CHECK(f.call("POST", "/assets", json::object({{"kind", "Model"}, {"name", "y"}, {"bogus", 1}})).status == 400);
  CHECK(f.call("DELETE", "/assets/" + id).status == 200);
  CHECK(f.call("GET", "/assets/" + id).status == 404);

  // demo assets are in use once the incubator exists
  const auto dt = f.call("POST", "/dts", incubator_body());
  REQUIRE(dt.status == 201);
  r = f.call("DELETE", "/assets/asset-2", nullptr, test::kAdminToken);
  CHECK(r.status != 200);
}

TEST_CASE("config, graph and data endpoints") {
  test::PlatformFixture f;
  auto r = f.call("POST", "/configs/validate", incubator_body());
  CHECK(r.status == 200);
  CHECK(r.body.at("valid") == true);
  r = f.call("POST", "/configs/validate", {{"config_text", "{ nope"}});
  CHECK(r.status == 400);
  CHECK(code(r) == "PARSE_ERROR");
  r = f.call("POST", "/configs/validate",
             {{"config", {{"name", "x"}, {"c_a", json::object()}, {"c_i", {{"flavour", "SharedPool"}, {"cpu_units", 1},
                                                                           {"memory_mb", 1}, {"tick_ms", 1}}}}}});
  CHECK(r.status == 200);
  CHECK(r.body.at("valid") == false);

  auto cfg = config::to_json(config::parse_config(incubator::incubator_config_text()));
  auto next = cfg;
  next["c_a"]["parameters"]["setpoint"] = 37.0;
  r = f.call("POST", "/configs/diff", {{"old", cfg}, {"new", next}});
  CHECK(r.status == 200);
  CHECK(r.body.at("changes").size() == 1);
  next["name"] = "other";
  CHECK(f.call("POST", "/configs/diff", {{"old", cfg}, {"new", next}}).status == 422);

  // invalid create carries the report
  auto bad = cfg;
  bad["c_a"]["connections"].push_back("asset-2.params -> asset-1.t_box");
  r = f.call("POST", "/dts", {{"config", bad}});
  CHECK(r.status == 422);
  CHECK(code(r) == "VALIDATION_FAILED");
  bool dep = false;
  for (const auto& d : r.body.at("report").at("diagnostics")) dep = dep || d.at("rule") == "DEP-01";
  CHECK(dep);

  const auto id = f.call("POST", "/dts", incubator_body()).body.at("id").get<std::string>();
  r = f.call("GET", "/graph/" + id);
  CHECK(r.status == 200);
  CHECK(r.body.at("canonical") == f.call("GET", "/graph/" + id).body.at("canonical"));
  CHECK(f.call("GET", "/graph/" + id + "/consistency").body.at("passed") == true);
  r = f.call("POST", "/graph/query", {{"dt", id}, {"query", "MATCH (f:Function)-[uses]->(m:Model) RETURN f, m"}});
  CHECK(r.status == 200);
  CHECK(r.body.at("count") == 1);
  r = f.call("POST", "/graph/query", {{"dt", id}, {"query", "MATCH ("}});
  CHECK(r.status == 400);
  CHECK(code(r) == "MALFORMED_QUERY");

  r = f.call("POST", "/data/series/lab.t", {{"points", json::array({{{"ts", 2}, {"value", 1.5}}, {{"ts", 1}, {"value", 0.5}}})}});
  CHECK(r.status == 201);
  r = f.call("GET", "/data/series/lab.t", nullptr, test::kViewerToken, {{"from", "0"}, {"to", "10"}});
  CHECK(r.body.at("points").size() == 2);
  CHECK(r.body.at("points")[0].at("ts") == 1);
  CHECK(f.call("GET", "/data/series/lab.t", nullptr, test::kDevToken, {{"from", "5"}, {"to", "1"}}).status == 400);
  CHECK(f.call("GET", "/data/series/lab.t", nullptr, test::kDevToken, {{"from", "x"}}).status == 400);
  CHECK(f.call("GET", "/data/series/lab.t/latest").body.at("value") == 1.5);
  CHECK(f.call("GET", "/data/series/none/latest").status == 404);

  r = f.call("POST", "/events", {{"type", "note"}, {"payload", {{"a", 1}}}});
  CHECK(r.status == 201);
  const auto ev = r.body.at("id").get<std::uint64_t>();
  r = f.call("GET", "/events", nullptr, test::kViewerToken, {{"after", std::to_string(ev - 1)}, {"type", "note"}});
  REQUIRE(r.body.at("events").size() == 1);
  CHECK(r.body.at("events")[0].at("origin") == "alice");

  CHECK(f.call("POST", "/commands", {{"target", "nowhere/x"}, {"name", "n"}}).status == 404);
  CHECK(f.call("POST", "/connectors", {{"name", "lab"}, {"channels", {"valve"}}}).status == 201);
  CHECK(f.call("POST", "/commands", {{"target", "lab/valve"}, {"name", "open"}}).status == 201);
  CHECK(f.call("POST", "/commands/fetch", {{"target", "lab/valve"}}).body.at("commands").size() == 1);
  CHECK(f.call("POST", "/commands/fetch", {{"target", "lab/valve"}}).body.at("commands").empty());
  CHECK(f.call("GET", "/commands", nullptr, test::kDevToken, {{"target", "lab/valve"}}).body.at("commands").size() == 1);
  CHECK(f.call("GET", "/commands").status == 400);

  CHECK(f.call("GET", "/workspaces").body.at("active") == 0);
  CHECK(f.call("GET", "/usage").body.at("user") == "alice");
  CHECK(f.call("GET", "/usage", nullptr, test::kAdminToken, {{"all", "1"}}).status == 200);
}

TEST_CASE("token administration") {
  test::PlatformFixture f;
  CHECK(f.call("GET", "/admin/principals", nullptr, test::kAdminToken).body.at("principals").size() == 4);
  // tokens are never echoed
  CHECK(f.call("GET", "/admin/principals", nullptr, test::kAdminToken).body.dump().find("dev-token") ==
        std::string::npos);
  auto r = f.call("POST", "/admin/principals", {{"user", "carol"}, {"role", "Viewer"}, {"token", "c-token"}},
                  test::kAdminToken);
  CHECK(r.status == 201);
  CHECK(f.call("GET", "/dts", nullptr, "c-token").status == 200);
  CHECK(f.call("POST", "/admin/principals", {{"user", "carol"}, {"role", "Viewer"}, {"token", "d"}}, test::kAdminToken)
            .status == 409);
  CHECK(f.call("DELETE", "/admin/principals/carol", nullptr, test::kAdminToken).status == 200);
  CHECK(f.call("GET", "/dts", nullptr, "c-token").status == 401);
  CHECK(f.call("DELETE", "/admin/principals/carol", nullptr, test::kAdminToken).status == 404);
}

TEST_CASE("platform config file") {
  const auto c = parse_platform_config(R"({
    // comment
    "listen": "0.0.0.0:9000",
    "pool": {"cpu_units": 4, "memory_mb": 512},
    "asset_store": "a", "data_path": "d", "state_path": "s",
    "mode": "manual",
    "demo": {"enabled": false},
    "principals": [{"user": "u", "role": "Admin", "token": "t"}]
  })",
                                       "/base");
  CHECK(c.host == "0.0.0.0");
  CHECK(c.port == 9000);
  CHECK(c.pool == exec::PoolCapacity{4, 512});
  CHECK(c.asset_store == std::filesystem::path("/base/a"));
  CHECK(c.mode == exec::RunMode::Manual);
  CHECK_FALSE(c.demo);
  REQUIRE(c.principals.size() == 1);
  CHECK_THROWS_AS(parse_platform_config(R"({"mode": "sometimes"})"), Error);
  CHECK_THROWS_AS(parse_platform_config("{"), Error);
  const auto shipped = load_platform_config(std::filesystem::path(DTAAS_SOURCE_DIR) / "configs/platform.cfg");
  CHECK(shipped.principals.size() == 3);
}
