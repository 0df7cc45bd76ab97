#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>

namespace dtaas {

/// Opaque string identifier tagged by the entity it names, so an asset id
/// cannot be passed where an instance id is expected.
template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend bool operator==(const Id&, const Id&) = default;
  friend auto operator<=>(const Id&, const Id&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Id& id) {
    return os << id.value_;
  }

 private:
  std::string value_;
};

using AssetId = Id<struct AssetTag>;
using InstanceId = Id<struct InstanceTag>;
using WorkspaceId = Id<struct WorkspaceTag>;
using SnapshotId = Id<struct SnapshotTag>;
using RunId = Id<struct RunTag>;

using UserId = std::string;

}  // namespace dtaas

template <class Tag>
struct std::hash<dtaas::Id<Tag>> {
  std::size_t operator()(const dtaas::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
