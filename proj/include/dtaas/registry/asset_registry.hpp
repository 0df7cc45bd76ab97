#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "dtaas/registry/asset.hpp"

namespace dtaas::registry {

/// File-backed catalogue of reusable DT assets.
///
/// Layout under the store root:
///   registry.log              one JSON line per mutation, replayed at startup
///   <owner>/<asset-id>/...    content of private assets
///   common/<asset-id>/...     content of shared assets
///
/// Readers run concurrently; mutations are serialized by a single writer lock.
class AssetRegistry {
 public:
  using InUseProbe = std::function<bool(const AssetId&)>;
  using StorageObserver = std::function<void(const UserId& owner, std::uint64_t bytes)>;

  explicit AssetRegistry(std::filesystem::path store_root);

  AssetRegistry(const AssetRegistry&) = delete;
  AssetRegistry& operator=(const AssetRegistry&) = delete;

  AssetId register_asset(NewAsset asset, const UserId& caller);
  AssetRecord get_asset(const AssetId& id, const UserId& caller) const;
  /// Matches all provided filters, restricted to what `caller` may see,
  /// ordered by (kind, name, id).
  std::vector<AssetRecord> list_assets(const AssetQuery& query, const UserId& caller) const;
  AssetRecord update_asset(const AssetId& id, const AssetPatch& patch, const UserId& caller);
  void delete_asset(const AssetId& id, const UserId& caller);
  AssetRecord share_asset(const AssetId& id, const UserId& caller);
  std::string read_content(const AssetId& id, const UserId& caller) const;

  /// Consulted on delete; returning true blocks the delete with Errc::InUse.
  void set_in_use_probe(InUseProbe probe);
  /// Notified with the byte count of every content write.
  void set_storage_observer(StorageObserver observer);

  /// Resolver seeing exactly the assets visible to `caller`.
  std::unique_ptr<AssetResolver> resolver_for(const UserId& caller) const;

  std::size_t size() const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  class CallerResolver;

  void replay();
  void append_log(const nlohmann::json& entry);
  const AssetRecord& find_or_throw(const AssetId& id) const;
  static bool visible_to(const AssetRecord& r, const UserId& caller);
  bool key_taken(const UserId& owner, const std::string& name, AssetKind kind,
                 const AssetId* ignore) const;
  std::filesystem::path content_dir(const AssetRecord& r) const;
  std::string write_content(const AssetRecord& r, const std::string& content);

  std::filesystem::path root_;
  mutable std::shared_mutex mutex_;
  std::map<AssetId, AssetRecord> records_;
  std::uint64_t next_seq_ = 1;
  std::ofstream log_;
  InUseProbe in_use_;
  StorageObserver on_stored_;
};

}  // namespace dtaas::registry
