#include "dtaas/lifecycle/snapshot.hpp"

#include <fstream>
#include <sstream>

#include "dtaas/common/error.hpp"
#include "dtaas/config/parser.hpp"

namespace dtaas::lifecycle {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path snapshot_path(const fs::path& state_root, const InstanceId& instance, const SnapshotId& id) {
  return state_root / instance.str() / (id.str() + ".snap");
}

void write_snapshot(const fs::path& state_root, const Snapshot& snap) {
  const auto path = snapshot_path(state_root, snap.instance, snap.id);
  fs::create_directories(path.parent_path());
  if (fs::exists(path)) throw Error(Errc::Conflict, "snapshot '" + snap.id.str() + "' already exists");
  json children = json::array();
  for (const auto& c : snap.children) children.push_back({{"instance", c.instance.str()}, {"snapshot", c.snapshot.str()}});
  const json body = {{"id", snap.id.str()},
                     {"instance", snap.instance.str()},
                     {"captured_at_ms", snap.captured_at_ms},
                     {"config", config::to_json(snap.config)},
                     {"runner", {{"tick", snap.tick}, {"program", snap.program_state}}},
                     {"children", std::move(children)}};
  // Write then rename so a crash never leaves a half-written snapshot.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << kSnapshotMagic << ' ' << kSnapshotVersion << '\n' << body.dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::Internal, "cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

Snapshot read_snapshot(const fs::path& state_root, const InstanceId& instance, const SnapshotId& id) {
  const auto path = snapshot_path(state_root, instance, id);
  std::ifstream in(path);
  if (!in) throw Error(Errc::UnknownSnapshot, "no snapshot '" + id.str() + "' for '" + instance.str() + "'");
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  hs >> magic >> version;
  if (magic != kSnapshotMagic || version != kSnapshotVersion) {
    throw Error(Errc::ParseError, path.string() + ": unsupported snapshot header '" + header + "'");
  }
  json body;
  try {
    in >> body;
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  Snapshot s;
  s.id = SnapshotId(body.at("id").get<std::string>());
  s.instance = InstanceId(body.at("instance").get<std::string>());
  s.captured_at_ms = body.at("captured_at_ms").get<std::int64_t>();
  s.config = config::config_from_json(body.at("config"));
  s.tick = body.at("runner").at("tick").get<std::uint64_t>();
  s.program_state = body.at("runner").at("program");
  for (const auto& c : body.at("children")) {
    s.children.push_back({InstanceId(c.at("instance").get<std::string>()), SnapshotId(c.at("snapshot").get<std::string>())});
  }
  return s;
}

}  // namespace dtaas::lifecycle
