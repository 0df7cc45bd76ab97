#pragma once

#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/ids.hpp"

namespace dtaas::gateway {

enum class Role { Viewer, Developer, Admin };

std::string_view role_name(Role r) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct Principal {
  UserId user;
  Role role = Role::Viewer;
  /// Opaque bearer secret; never logged or returned.
  std::string token;
};

/// Public part of a principal.
nlohmann::json to_json(const Principal& p);

/// Static bearer-token table. One role per token.
class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(std::vector<Principal> principals);

  /// Accepts "Bearer <token>".
  std::optional<Principal> authenticate(std::string_view authorization) const;
  /// Throws Error(Conflict) on a duplicate user or token, Error(InvalidArgument)
  /// for empty fields.
  void add(Principal p);
  /// Throws Error(NotFound).
  void remove(const UserId& user);
  std::vector<Principal> list() const;

 private:
  mutable std::shared_mutex mu_;
  std::vector<Principal> principals_;
};

/// Endpoint classes the RBAC matrix is defined over.
enum class Access {
  Public,      // /health
  Read,        // GET on platform resources
  Write,       // every mutating call except the two below
  UsageOther,  // /usage?user=<someone else>
  Admin,       // token management
};

std::string_view access_name(Access a) noexcept;

/// Viewer: Public + Read. Developer: all but UsageOther and Admin.
/// Admin: everything.
bool allowed(Role role, Access access) noexcept;

}  // namespace dtaas::gateway
