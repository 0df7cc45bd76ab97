#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dtaas/common/error.hpp"
#include "dtaas/gateway/auth.hpp"
#include "dtaas/gateway/platform.hpp"

namespace dtaas::gateway {

struct Request {
  std::string method;
  /// Decoded path without the query string.
  std::string path;
  std::map<std::string, std::string> query;
  /// Value of the Authorization header, if any.
  std::string authorization;
  std::string body;
};

struct Response {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

/// HTTP status for each error code. Only Internal maps to 500.
int http_status(Errc code) noexcept;

/// `{"error": {"code", "message"}}` plus `"report"` for validation errors.
Response error_response(const std::exception& e);

struct RouteContext {
  const Request& request;
  const Principal& principal;
  std::map<std::string, std::string> params;

  const std::string& param(const std::string& name) const { return params.at(name); }
  std::optional<std::string> query(const std::string& name) const;
  /// Parsed body; throws Error(ParseError).
  nlohmann::json json_body() const;
};

struct Route {
  std::string method;
  /// Literal segments and `{name}` placeholders, e.g. `/dts/{id}/execute`.
  std::string pattern;
  Access access = Access::Read;
  /// Module operation served, for coverage checks.
  std::string operation;
  std::function<Response(RouteContext&)> handler;
};

/// Socket-free request router: authentication, RBAC and error mapping
/// around the module contracts.
class Gateway {
 public:
  explicit Gateway(Platform& platform);

  Response handle(const Request& request);
  const std::vector<Route>& routes() const noexcept { return routes_; }

 private:
  void add(std::string method, std::string pattern, Access access, std::string operation,
           std::function<Response(RouteContext&)> handler);
  void add_asset_routes();
  void add_dt_routes();
  void add_data_routes();
  void add_platform_routes();

  /// Throws Error(Forbidden) unless the caller owns the instance or is Admin.
  void require_owner(const RouteContext& ctx, const InstanceId& id) const;

  Platform& platform_;
  std::vector<Route> routes_;
};

/// HTTP front end over a Gateway.
class HttpServer {
 public:
  explicit HttpServer(Gateway& gateway);
  ~HttpServer();

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port; throws Error(Internal) when binding fails.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dtaas::gateway
