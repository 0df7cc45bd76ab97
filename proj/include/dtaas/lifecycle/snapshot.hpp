#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtaas/common/ids.hpp"
#include "dtaas/config/config_doc.hpp"

namespace dtaas::lifecycle {

inline constexpr std::string_view kSnapshotMagic = "DTSNAP";
inline constexpr int kSnapshotVersion = 1;

struct ChildSnapshot {
  InstanceId instance;
  SnapshotId snapshot;
};

/// Immutable once written: `state/<instance>/<snapshot>.snap`, a
/// `DTSNAP <version>` header line followed by one JSON document.
struct Snapshot {
  SnapshotId id;
  InstanceId instance;
  std::int64_t captured_at_ms = 0;
  config::ConfigDoc config;
  std::uint64_t tick = 0;
  nlohmann::json program_state;
  std::vector<ChildSnapshot> children;
};

std::filesystem::path snapshot_path(const std::filesystem::path& state_root, const InstanceId& instance,
                                    const SnapshotId& id);
void write_snapshot(const std::filesystem::path& state_root, const Snapshot& snap);
/// Throws Error(UnknownSnapshot) when missing, Error(ParseError) when the
/// header or body is malformed.
Snapshot read_snapshot(const std::filesystem::path& state_root, const InstanceId& instance, const SnapshotId& id);

}  // namespace dtaas::lifecycle
