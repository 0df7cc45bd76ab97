#include "dtaas/gateway/auth.hpp"

#include <algorithm>
#include <mutex>

#include "dtaas/common/error.hpp"

namespace dtaas::gateway {

std::string_view role_name(Role r) noexcept {
  switch (r) {
    case Role::Viewer: return "Viewer";
    case Role::Developer: return "Developer";
    case Role::Admin: return "Admin";
  }
  return "Viewer";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  for (auto r : {Role::Viewer, Role::Developer, Role::Admin}) {
    if (role_name(r) == text) return r;
  }
  return std::nullopt;
}

nlohmann::json to_json(const Principal& p) { return {{"user", p.user}, {"role", role_name(p.role)}}; }

TokenTable::TokenTable(std::vector<Principal> principals) {
  for (auto& p : principals) add(std::move(p));
}

std::optional<Principal> TokenTable::authenticate(std::string_view authorization) const {
  constexpr std::string_view prefix = "Bearer ";
  if (authorization.substr(0, prefix.size()) != prefix) return std::nullopt;
  const auto token = authorization.substr(prefix.size());
  if (token.empty()) return std::nullopt;
  std::shared_lock lock(mu_);
  for (const auto& p : principals_) {
    if (p.token == token) return p;
  }
  return std::nullopt;
}

void TokenTable::add(Principal p) {
  if (p.user.empty() || p.token.empty()) throw Error(Errc::InvalidArgument, "principal needs a user and a token");
  std::unique_lock lock(mu_);
  for (const auto& q : principals_) {
    if (q.user == p.user) throw Error(Errc::Conflict, "user '" + p.user + "' already has a token");
    if (q.token == p.token) throw Error(Errc::Conflict, "token already assigned");
  }
  principals_.push_back(std::move(p));
}

void TokenTable::remove(const UserId& user) {
  std::unique_lock lock(mu_);
  auto it = std::find_if(principals_.begin(), principals_.end(), [&](const Principal& p) { return p.user == user; });
  if (it == principals_.end()) throw Error(Errc::NotFound, "no principal '" + user + "'");
  principals_.erase(it);
}

std::vector<Principal> TokenTable::list() const {
  std::shared_lock lock(mu_);
  return principals_;
}

std::string_view access_name(Access a) noexcept {
  switch (a) {
    case Access::Public: return "public";
    case Access::Read: return "read";
    case Access::Write: return "write";
    case Access::UsageOther: return "usage-other";
    case Access::Admin: return "admin";
  }
  return "public";
}

bool allowed(Role role, Access access) noexcept {
  switch (access) {
    case Access::Public:
    case Access::Read: return true;
    case Access::Write: return role != Role::Viewer;
    case Access::UsageOther:
    case Access::Admin: return role == Role::Admin;
  }
  return false;
}

}  // namespace dtaas::gateway
