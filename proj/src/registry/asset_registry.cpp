#include "dtaas/registry/asset_registry.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>
#include <tuple>

#include "dtaas/common/error.hpp"

namespace dtaas::registry {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kLogHeader = "# dtaas-registry v1";
constexpr std::string_view kIdPrefix = "asset-";
constexpr std::string_view kContentFile = "content.bin";

std::uint64_t seq_of(const AssetId& id) {
  const auto& s = id.str();
  if (s.rfind(kIdPrefix, 0) != 0) return 0;
  try {
    return std::stoull(s.substr(kIdPrefix.size()));
  } catch (...) {
    return 0;
  }
}

bool contains_ci(const std::string& haystack, const std::string& needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) { return std::tolower(a) == std::tolower(b); });
  return it != haystack.end();
}

void validate_shape(AssetKind kind, const std::string& name, const Metadata& metadata) {
  if (name.empty()) throw Error(Errc::InvalidArgument, "asset name must be nonempty");
  if (kind == AssetKind::Tool) {
    auto it = metadata.find(std::string(kEntryKey));
    if (it == metadata.end() || it->second.empty()) {
      throw Error(Errc::InvalidArgument, "Tool assets must declare an executable 'entry' in metadata");
    }
  }
}

}  // namespace

class AssetRegistry::CallerResolver final : public AssetResolver {
 public:
  CallerResolver(const AssetRegistry& registry, UserId caller)
      : registry_(registry), caller_(std::move(caller)) {}

  std::optional<AssetRecord> resolve(const AssetId& id) const override {
    std::shared_lock lock(registry_.mutex_);
    auto it = registry_.records_.find(id);
    if (it == registry_.records_.end() || !visible_to(it->second, caller_)) return std::nullopt;
    return it->second;
  }

 private:
  const AssetRegistry& registry_;
  UserId caller_;
};

AssetRegistry::AssetRegistry(fs::path store_root) : root_(std::move(store_root)) {
  fs::create_directories(root_);
  replay();
  const auto log_path = root_ / "registry.log";
  const bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
  log_.open(log_path, std::ios::app);
  if (!log_) throw Error(Errc::Internal, "cannot open " + log_path.string());
  if (fresh) log_ << kLogHeader << '\n' << std::flush;
}

void AssetRegistry::replay() {
  std::ifstream in(root_ / "registry.log");
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::parse_error&) {
      // A torn final line from a crash mid-append is dropped.
      if (in.peek() == EOF) break;
      throw Error(Errc::Internal, "corrupt registry.log at line " + std::to_string(line_no));
    }
    const auto op = entry.at("op").get<std::string>();
    if (op == "put") {
      auto rec = record_from_json(entry.at("record"));
      next_seq_ = std::max(next_seq_, seq_of(rec.id) + 1);
      records_.insert_or_assign(rec.id, std::move(rec));
    } else if (op == "delete") {
      AssetId id(entry.at("id").get<std::string>());
      next_seq_ = std::max(next_seq_, seq_of(id) + 1);
      records_.erase(id);
    }
  }
}

void AssetRegistry::append_log(const json& entry) {
  log_ << entry.dump() << '\n' << std::flush;
  if (!log_) throw Error(Errc::Internal, "registry log write failed");
}

const AssetRecord& AssetRegistry::find_or_throw(const AssetId& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw Error(Errc::NotFound, "asset '" + id.str() + "' not found");
  return it->second;
}

bool AssetRegistry::visible_to(const AssetRecord& r, const UserId& caller) {
  return r.owner == caller || r.visibility == Visibility::Shared;
}

bool AssetRegistry::key_taken(const UserId& owner, const std::string& name, AssetKind kind,
                              const AssetId* ignore) const {
  return std::any_of(records_.begin(), records_.end(), [&](const auto& kv) {
    const auto& r = kv.second;
    return r.owner == owner && r.name == name && r.kind == kind && (!ignore || r.id != *ignore);
  });
}

fs::path AssetRegistry::content_dir(const AssetRecord& r) const {
  return r.visibility == Visibility::Shared ? root_ / "common" / r.id.str()
                                            : root_ / r.owner / r.id.str();
}

std::string AssetRegistry::write_content(const AssetRecord& r, const std::string& content) {
  const auto dir = content_dir(r);
  fs::create_directories(dir);
  std::ofstream out(dir / kContentFile, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(Errc::Internal, "cannot write asset content for " + r.id.str());
  if (on_stored_ && !content.empty()) on_stored_(r.owner, content.size());
  return fs::relative(dir / kContentFile, root_).generic_string();
}

AssetId AssetRegistry::register_asset(NewAsset asset, const UserId& caller) {
  if (caller.empty()) throw Error(Errc::Unauthorized, "caller must be authenticated");
  validate_shape(asset.kind, asset.name, asset.metadata);

  std::unique_lock lock(mutex_);
  if (key_taken(caller, asset.name, asset.kind, nullptr)) {
    throw Error(Errc::Conflict, "asset (" + caller + ", " + asset.name + ", " +
                                    std::string(kind_name(asset.kind)) + ") already exists");
  }
  AssetRecord rec;
  rec.id = AssetId(std::string(kIdPrefix) + std::to_string(next_seq_));
  rec.kind = asset.kind;
  rec.name = std::move(asset.name);
  rec.owner = caller;
  rec.visibility = Visibility::Private;
  rec.version = 1;
  rec.ports = std::move(asset.ports);
  rec.params = std::move(asset.params);
  rec.metadata = std::move(asset.metadata);
  rec.content_ref = write_content(rec, asset.content);

  append_log({{"op", "put"}, {"record", to_json(rec)}});
  ++next_seq_;
  auto id = rec.id;
  records_.emplace(id, std::move(rec));
  return id;
}

AssetRecord AssetRegistry::get_asset(const AssetId& id, const UserId& caller) const {
  std::shared_lock lock(mutex_);
  const auto& r = find_or_throw(id);
  if (!visible_to(r, caller)) throw Error(Errc::Forbidden, "asset '" + id.str() + "' is private");
  return r;
}

std::vector<AssetRecord> AssetRegistry::list_assets(const AssetQuery& query,
                                                    const UserId& caller) const {
  std::vector<AssetRecord> out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, r] : records_) {
      if (!visible_to(r, caller)) continue;
      if (query.kind && r.kind != *query.kind) continue;
      if (query.owner && r.owner != *query.owner) continue;
      if (query.visibility && r.visibility != *query.visibility) continue;
      if (query.text && !query.text->empty()) {
        bool hit = contains_ci(r.name, *query.text);
        for (const auto& [k, v] : r.metadata) {
          if (hit) break;
          hit = contains_ci(k, *query.text) || contains_ci(v, *query.text);
        }
        if (!hit) continue;
      }
      out.push_back(r);
    }
  }
  std::sort(out.begin(), out.end(), [](const AssetRecord& a, const AssetRecord& b) {
    return std::tie(a.kind, a.name, a.id) < std::tie(b.kind, b.name, b.id);
  });
  return out;
}

AssetRecord AssetRegistry::update_asset(const AssetId& id, const AssetPatch& patch,
                                        const UserId& caller) {
  std::unique_lock lock(mutex_);
  const auto& current = find_or_throw(id);
  if (current.owner != caller) throw Error(Errc::Forbidden, "only the owner may update '" + id.str() + "'");

  AssetRecord next = current;
  if (patch.name) next.name = *patch.name;
  if (patch.ports) next.ports = *patch.ports;
  if (patch.params) next.params = *patch.params;
  if (patch.metadata) next.metadata = *patch.metadata;
  validate_shape(next.kind, next.name, next.metadata);
  if (patch.name && key_taken(next.owner, next.name, next.kind, &id)) {
    throw Error(Errc::Conflict, "asset (" + next.owner + ", " + next.name + ") already exists");
  }
  next.version = current.version + 1;
  if (patch.content) next.content_ref = write_content(next, *patch.content);

  append_log({{"op", "put"}, {"record", to_json(next)}});
  records_[id] = next;
  return next;
}

void AssetRegistry::delete_asset(const AssetId& id, const UserId& caller) {
  // The probe reads lifecycle state, which in turn resolves assets through
  // this registry; it must run before the writer lock is taken.
  {
    std::shared_lock lock(mutex_);
    const auto& r = find_or_throw(id);
    if (r.owner != caller) throw Error(Errc::Forbidden, "only the owner may delete '" + id.str() + "'");
  }
  if (in_use_ && in_use_(id)) {
    throw Error(Errc::InUse, "asset '" + id.str() + "' is referenced by a live DT");
  }
  std::unique_lock lock(mutex_);
  const auto& r = find_or_throw(id);
  if (r.owner != caller) throw Error(Errc::Forbidden, "only the owner may delete '" + id.str() + "'");
  std::error_code ec;
  fs::remove_all(content_dir(r), ec);
  append_log({{"op", "delete"}, {"id", id.str()}});
  records_.erase(id);
}

AssetRecord AssetRegistry::share_asset(const AssetId& id, const UserId& caller) {
  std::unique_lock lock(mutex_);
  auto& r = records_.at(find_or_throw(id).id);
  if (r.owner != caller) throw Error(Errc::Forbidden, "only the owner may share '" + id.str() + "'");
  if (r.visibility == Visibility::Shared) return r;

  const auto from = content_dir(r);
  AssetRecord next = r;
  next.visibility = Visibility::Shared;
  const auto to = content_dir(next);
  fs::create_directories(to.parent_path());
  if (fs::exists(from)) fs::rename(from, to);
  next.content_ref = fs::relative(to / kContentFile, root_).generic_string();

  append_log({{"op", "put"}, {"record", to_json(next)}});
  r = next;
  return next;
}

std::string AssetRegistry::read_content(const AssetId& id, const UserId& caller) const {
  std::shared_lock lock(mutex_);
  const auto& r = find_or_throw(id);
  if (!visible_to(r, caller)) throw Error(Errc::Forbidden, "asset '" + id.str() + "' is private");
  std::ifstream in(root_ / r.content_ref, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void AssetRegistry::set_in_use_probe(InUseProbe probe) {
  std::unique_lock lock(mutex_);
  in_use_ = std::move(probe);
}

void AssetRegistry::set_storage_observer(StorageObserver observer) {
  std::unique_lock lock(mutex_);
  on_stored_ = std::move(observer);
}

std::unique_ptr<AssetResolver> AssetRegistry::resolver_for(const UserId& caller) const {
  return std::make_unique<CallerResolver>(*this, caller);
}

std::size_t AssetRegistry::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

}  // namespace dtaas::registry
