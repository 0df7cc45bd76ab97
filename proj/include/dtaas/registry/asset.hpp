#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/ids.hpp"
#include "dtaas/common/scalar.hpp"

namespace dtaas::registry {

enum class AssetKind { Data, Model, Function, Tool, ReadyDT };
enum class Visibility { Private, Shared };
enum class PortDirection { In, Out };
enum class PayloadKind { Data, Command, Event };

std::string_view kind_name(AssetKind k) noexcept;
std::optional<AssetKind> parse_kind(std::string_view text) noexcept;
std::string_view visibility_name(Visibility v) noexcept;
std::optional<Visibility> parse_visibility(std::string_view text) noexcept;

struct Port {
  std::string name;
  PortDirection direction = PortDirection::In;
  PayloadKind payload = PayloadKind::Data;

  friend bool operator==(const Port&, const Port&) = default;
};

using Metadata = std::map<std::string, std::string>;

struct AssetRecord {
  AssetId id;
  AssetKind kind = AssetKind::Data;
  std::string name;
  UserId owner;
  Visibility visibility = Visibility::Private;
  std::uint64_t version = 0;
  std::string content_ref;
  std::vector<Port> ports;
  ParamMap params;
  Metadata metadata;

  const Port* find_port(std::string_view port_name) const;
  std::optional<std::string> meta(const std::string& key) const;

  friend bool operator==(const AssetRecord&, const AssetRecord&) = default;
};

/// Registration payload: a record without the registry-assigned fields.
struct NewAsset {
  AssetKind kind = AssetKind::Data;
  std::string name;
  std::vector<Port> ports;
  ParamMap params;
  Metadata metadata;
  std::string content;
};

struct AssetPatch {
  std::optional<std::string> name;
  std::optional<std::vector<Port>> ports;
  std::optional<ParamMap> params;
  std::optional<Metadata> metadata;
  std::optional<std::string> content;
};

/// Every field is optional; an empty query matches every visible asset.
struct AssetQuery {
  std::optional<AssetKind> kind;
  std::optional<UserId> owner;
  std::optional<Visibility> visibility;
  std::optional<std::string> text;
};

/// Metadata key a Tool asset must carry: the executable entry point.
inline constexpr std::string_view kEntryKey = "entry";

nlohmann::json to_json(const Port& p);
Port port_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AssetRecord& r);
AssetRecord record_from_json(const nlohmann::json& j);
NewAsset new_asset_from_json(const nlohmann::json& j);
AssetPatch patch_from_json(const nlohmann::json& j);

/// Read-only lookup used by composition validation and graph mapping.
class AssetResolver {
 public:
  virtual ~AssetResolver() = default;
  virtual std::optional<AssetRecord> resolve(const AssetId& id) const = 0;
};

/// Resolver over a fixed set of records; handy for tests and for
/// validating against a snapshot of the registry.
class MapResolver final : public AssetResolver {
 public:
  MapResolver() = default;
  explicit MapResolver(std::vector<AssetRecord> records);

  void add(AssetRecord record);
  std::optional<AssetRecord> resolve(const AssetId& id) const override;

 private:
  std::map<AssetId, AssetRecord> records_;
};

}  // namespace dtaas::registry
