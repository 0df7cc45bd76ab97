#include "dtaas/datahub/data_hub.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dtaas/common/error.hpp"

namespace dtaas::datahub {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Series log: 8-byte header, then 16-byte little-endian records.
constexpr std::array<unsigned char, 8> kSeriesMagic = {'D', 'T', 'H', 'S', 1, 0, 0, 0};
constexpr std::size_t kRecordSize = 16;
constexpr std::string_view kEventsHeader = "# dtaas-events v1";
constexpr std::string_view kCommandsHeader = "# dtaas-commands v1";

void put_u64(unsigned char* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint64_t get_u64(const unsigned char* in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

std::FILE* open_append(const fs::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "ab");
  if (!f) throw Error(Errc::Internal, "cannot open " + p.string() + ": " + std::strerror(errno));
  return f;
}

/// Reads a line-delimited JSON log. A trailing line that fails to parse is
/// a torn write and is dropped; anything else malformed is an error.
std::vector<json> read_json_lines(const fs::path& p, std::string_view header) {
  std::vector<json> out;
  std::ifstream in(p);
  if (!in) return out;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0) {
      if (lines[0] != header) throw Error(Errc::Internal, p.string() + ": unexpected header");
      continue;
    }
    if (lines[i].empty()) continue;
    try {
      out.push_back(json::parse(lines[i]));
    } catch (const json::parse_error&) {
      if (i + 1 == lines.size()) break;
      throw Error(Errc::Internal, p.string() + ": corrupt record at line " + std::to_string(i + 1));
    }
  }
  return out;
}

void ensure_header(const fs::path& p, std::FILE* f, std::string_view header) {
  if (!fs::exists(p) || fs::file_size(p) == 0) {
    std::fprintf(f, "%.*s\n", static_cast<int>(header.size()), header.data());
    std::fflush(f);
  }
}

/// Drops a torn trailing line so the next append starts on a fresh line.
void truncate_torn_tail(const fs::path& p) {
  if (!fs::exists(p)) return;
  const auto size = fs::file_size(p);
  if (size == 0) return;
  std::ifstream in(p, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.back() == '\n') return;
  const auto nl = data.rfind('\n');
  fs::resize_file(p, nl == std::string::npos ? 0 : nl + 1);
}

}  // namespace

struct DataHub::Series {
  mutable std::shared_mutex mu;
  std::vector<std::pair<std::int64_t, double>> points;
  std::FILE* log = nullptr;

  ~Series() {
    if (log) std::fclose(log);
  }

  void insert(std::int64_t ts, double v) {
    if (points.empty() || points.back().first <= ts) {
      points.emplace_back(ts, v);
      return;
    }
    auto it = std::upper_bound(points.begin(), points.end(), ts,
                               [](std::int64_t t, const auto& p) { return t < p.first; });
    points.emplace(it, ts, v);
  }
};

std::string_view source_name(EventSource s) noexcept {
  switch (s) {
    case EventSource::PT: return "PT";
    case EventSource::DT: return "DT";
    case EventSource::User: return "User";
  }
  return "DT";
}

std::optional<EventSource> parse_source(std::string_view text) noexcept {
  if (text == "PT") return EventSource::PT;
  if (text == "DT") return EventSource::DT;
  if (text == "User") return EventSource::User;
  return std::nullopt;
}

json to_json(const SeriesPoint& p) { return {{"key", p.key}, {"ts", p.ts}, {"value", p.value}}; }

json to_json(const Event& e) {
  return {{"id", e.id},         {"source", source_name(e.source)}, {"origin", e.origin},
          {"type", e.type},     {"payload", e.payload},            {"ts", e.ts}};
}

json to_json(const Command& c) {
  return {{"id", c.id},     {"target", c.target}, {"name", c.name},
          {"args", c.args}, {"ts", c.ts},         {"status", c.status == Delivery::Pending ? "pending" : "delivered"}};
}

Event event_from_json(const json& j) {
  Event e;
  e.id = j.value("id", std::uint64_t{0});
  const auto src = j.value("source", std::string("User"));
  auto parsed = parse_source(src);
  if (!parsed) throw Error(Errc::InvalidArgument, "unknown event source '" + src + "'");
  e.source = *parsed;
  e.origin = j.value("origin", std::string());
  if (!j.contains("type") || !j["type"].is_string() || j["type"].get<std::string>().empty()) {
    throw Error(Errc::InvalidArgument, "event needs a nonempty 'type'");
  }
  e.type = j["type"].get<std::string>();
  if (j.contains("payload")) e.payload = j["payload"];
  e.ts = j.value("ts", std::int64_t{0});
  return e;
}

Command command_from_json(const json& j) {
  Command c;
  c.id = j.value("id", std::uint64_t{0});
  if (!j.contains("target") || !j["target"].is_string()) throw Error(Errc::InvalidArgument, "command needs 'target'");
  if (!j.contains("name") || !j["name"].is_string()) throw Error(Errc::InvalidArgument, "command needs 'name'");
  c.target = j["target"].get<std::string>();
  c.name = j["name"].get<std::string>();
  if (j.contains("args")) c.args = j["args"];
  c.ts = j.value("ts", std::int64_t{0});
  c.status = j.value("status", std::string("pending")) == "delivered" ? Delivery::Delivered : Delivery::Pending;
  return c;
}

std::string encode_key(std::string_view key) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    const auto c = static_cast<unsigned char>(key[i]);
    const bool plain = std::isalnum(c) || c == '_' || c == '-' || (c == '.' && i > 0);
    if (plain) {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    }
  }
  return out;
}

std::string decode_key(std::string_view stem) {
  std::string out;
  for (std::size_t i = 0; i < stem.size(); ++i) {
    if (stem[i] == '%' && i + 2 < stem.size()) {
      out += static_cast<char>(std::stoi(std::string(stem.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += stem[i];
    }
  }
  return out;
}

DataHub::DataHub(fs::path root, const Clock& clock) : root_(std::move(root)), clock_(clock) {
  fs::create_directories(root_ / "series");
  load_series();
  load_events();
  load_commands();
}

DataHub::~DataHub() {
  if (events_log_) std::fclose(events_log_);
  if (commands_log_) std::fclose(commands_log_);
}

void DataHub::load_series() {
  for (const auto& entry : fs::directory_iterator(root_ / "series")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".log") continue;
    const auto path = entry.path();
    if (fs::file_size(path) < kSeriesMagic.size()) {
      // Crashed while writing the header: nothing was ever stored.
      fs::remove(path);
      continue;
    }
    std::ifstream in(path, std::ios::binary);
    std::array<unsigned char, 8> magic{};
    in.read(reinterpret_cast<char*>(magic.data()), magic.size());
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kSeriesMagic) {
      throw Error(Errc::Internal, path.string() + ": not a series log");
    }
    auto s = std::make_unique<Series>();
    std::array<unsigned char, kRecordSize> rec{};
    std::size_t whole = 0;
    while (in.read(reinterpret_cast<char*>(rec.data()), rec.size())) {
      const auto ts = static_cast<std::int64_t>(get_u64(rec.data()));
      double v = 0;
      const auto bits = get_u64(rec.data() + 8);
      std::memcpy(&v, &bits, sizeof v);
      s->insert(ts, v);
      ++whole;
    }
    in.close();
    const auto expected = kSeriesMagic.size() + whole * kRecordSize;
    if (fs::file_size(path) != expected) fs::resize_file(path, expected);  // torn trailing record
    s->log = open_append(path);
    series_.emplace(decode_key(path.stem().string()), std::move(s));
  }
}

void DataHub::load_events() {
  const auto path = root_ / "events.log";
  for (const auto& j : read_json_lines(path, kEventsHeader)) {
    auto e = event_from_json(j);
    next_event_id_ = std::max(next_event_id_, e.id + 1);
    events_.push_back(std::move(e));
  }
  truncate_torn_tail(path);
  events_log_ = open_append(path);
  ensure_header(path, events_log_, kEventsHeader);
}

void DataHub::load_commands() {
  const auto path = root_ / "commands.log";
  for (const auto& j : read_json_lines(path, kCommandsHeader)) {
    const auto op = j.value("op", std::string());
    if (op == "send") {
      auto c = command_from_json(j.at("command"));
      next_command_id_ = std::max(next_command_id_, c.id + 1);
      commands_.push_back(std::move(c));
    } else if (op == "delivered") {
      const auto id = j.at("id").get<std::uint64_t>();
      for (auto& c : commands_) {
        if (c.id == id) c.status = Delivery::Delivered;
      }
    }
  }
  truncate_torn_tail(path);
  commands_log_ = open_append(path);
  ensure_header(path, commands_log_, kCommandsHeader);
}

void DataHub::write_line(std::FILE* f, const json& j) {
  const auto text = j.dump() + "\n";
  if (std::fwrite(text.data(), 1, text.size(), f) != text.size() || std::fflush(f) != 0) {
    throw Error(Errc::Internal, "log write failed");
  }
}

DataHub::Series& DataHub::series_for(const std::string& key) {
  {
    std::shared_lock lock(series_mu_);
    auto it = series_.find(key);
    if (it != series_.end()) return *it->second;
  }
  std::unique_lock lock(series_mu_);
  auto it = series_.find(key);
  if (it != series_.end()) return *it->second;
  const auto path = root_ / "series" / (encode_key(key) + ".log");
  auto s = std::make_unique<Series>();
  s->log = open_append(path);
  if (std::fwrite(kSeriesMagic.data(), 1, kSeriesMagic.size(), s->log) != kSeriesMagic.size() ||
      std::fflush(s->log) != 0) {
    throw Error(Errc::Internal, "cannot initialise " + path.string());
  }
  return *series_.emplace(key, std::move(s)).first->second;
}

const DataHub::Series* DataHub::find_series(std::string_view key) const {
  std::shared_lock lock(series_mu_);
  auto it = series_.find(key);
  return it == series_.end() ? nullptr : it->second.get();
}

void DataHub::append_point(const SeriesPoint& p) {
  append_batch({p});
}

void DataHub::append_batch(const std::vector<SeriesPoint>& points) {
  for (const auto& p : points) {
    if (p.key.empty()) throw Error(Errc::InvalidArgument, "series key must be nonempty");
    if (!std::isfinite(p.value)) throw Error(Errc::NonFinite, "non-finite value for series '" + p.key + "'");
  }
  for (const auto& p : points) {
    auto& s = series_for(p.key);
    std::array<unsigned char, kRecordSize> rec{};
    std::uint64_t bits = 0;
    std::memcpy(&bits, &p.value, sizeof bits);
    put_u64(rec.data(), static_cast<std::uint64_t>(p.ts));
    put_u64(rec.data() + 8, bits);
    std::unique_lock lock(s.mu);
    if (std::fwrite(rec.data(), 1, rec.size(), s.log) != rec.size() || std::fflush(s.log) != 0) {
      throw Error(Errc::Internal, "append to series '" + p.key + "' failed");
    }
    s.insert(p.ts, p.value);
  }
}

std::vector<SeriesPoint> DataHub::query_range(std::string_view key, std::int64_t t0, std::int64_t t1) const {
  if (t0 > t1) throw Error(Errc::InvertedRange, "query range start after end");
  std::vector<SeriesPoint> out;
  const auto* s = find_series(key);
  if (!s) return out;
  std::shared_lock lock(s->mu);
  auto lo = std::lower_bound(s->points.begin(), s->points.end(), t0,
                             [](const auto& p, std::int64_t t) { return p.first < t; });
  auto hi = std::upper_bound(lo, s->points.end(), t1, [](std::int64_t t, const auto& p) { return t < p.first; });
  out.reserve(static_cast<std::size_t>(hi - lo));
  for (auto it = lo; it != hi; ++it) out.push_back({std::string(key), it->first, it->second});
  return out;
}

std::optional<SeriesPoint> DataHub::latest(std::string_view key) const {
  const auto* s = find_series(key);
  if (!s) return std::nullopt;
  std::shared_lock lock(s->mu);
  if (s->points.empty()) return std::nullopt;
  return SeriesPoint{std::string(key), s->points.back().first, s->points.back().second};
}

std::size_t DataHub::point_count(std::string_view key) const {
  const auto* s = find_series(key);
  if (!s) return 0;
  std::shared_lock lock(s->mu);
  return s->points.size();
}

std::vector<std::string> DataHub::series_keys() const {
  std::shared_lock lock(series_mu_);
  std::vector<std::string> keys;
  for (const auto& [k, s] : series_) keys.push_back(k);
  return keys;
}

std::uint64_t DataHub::publish_event(Event e) {
  if (e.type.empty()) throw Error(Errc::InvalidArgument, "event needs a nonempty type");
  {
    std::lock_guard lock(events_mu_);
    e.id = next_event_id_;
    if (e.ts == 0) e.ts = clock_.now_ms();
    write_line(events_log_, to_json(e));
    ++next_event_id_;
    events_.push_back(e);
  }
  std::vector<EventListener> listeners;
  {
    std::lock_guard lock(listeners_mu_);
    for (const auto& [token, fn] : listeners_) listeners.push_back(fn);
  }
  for (const auto& fn : listeners) fn(e);
  return e.id;
}

std::vector<Event> DataHub::poll_events(std::uint64_t after, const EventFilter& filter) const {
  std::lock_guard lock(events_mu_);
  std::vector<Event> out;
  auto it = std::upper_bound(events_.begin(), events_.end(), after,
                             [](std::uint64_t a, const Event& e) { return a < e.id; });
  for (; it != events_.end(); ++it) {
    if (filter.type && it->type != *filter.type) continue;
    if (filter.source && it->source != *filter.source) continue;
    if (filter.origin && it->origin != *filter.origin) continue;
    out.push_back(*it);
    if (filter.limit && out.size() >= filter.limit) break;
  }
  return out;
}

std::uint64_t DataHub::last_event_id() const {
  std::lock_guard lock(events_mu_);
  return next_event_id_ - 1;
}

std::uint64_t DataHub::subscribe(EventListener listener) {
  std::lock_guard lock(listeners_mu_);
  const auto token = next_listener_++;
  listeners_.emplace(token, std::move(listener));
  return token;
}

void DataHub::unsubscribe(std::uint64_t token) {
  std::lock_guard lock(listeners_mu_);
  listeners_.erase(token);
}

void DataHub::register_connector(const std::string& name, const std::vector<std::string>& channels) {
  std::lock_guard lock(commands_mu_);
  connectors_[name] = channels;
}

void DataHub::unregister_connector(const std::string& name) {
  std::lock_guard lock(commands_mu_);
  connectors_.erase(name);
}

bool DataHub::has_target(std::string_view target) const {
  std::lock_guard lock(commands_mu_);
  const auto slash = target.find('/');
  if (slash == std::string_view::npos) return false;
  auto it = connectors_.find(target.substr(0, slash));
  if (it == connectors_.end()) return false;
  const auto channel = target.substr(slash + 1);
  return std::find(it->second.begin(), it->second.end(), channel) != it->second.end();
}

std::uint64_t DataHub::send_command(Command c) {
  if (!has_target(c.target)) throw Error(Errc::UnknownTarget, "no connector channel '" + c.target + "'");
  std::lock_guard lock(commands_mu_);
  c.id = next_command_id_;
  c.status = Delivery::Pending;
  if (c.ts == 0) c.ts = clock_.now_ms();
  write_line(commands_log_, {{"op", "send"}, {"command", to_json(c)}});
  ++next_command_id_;
  commands_.push_back(std::move(c));
  return commands_.back().id;
}

std::vector<Command> DataHub::fetch_commands(std::string_view target) {
  std::lock_guard lock(commands_mu_);
  std::vector<Command> out;
  for (auto& c : commands_) {
    if (c.target != target || c.status != Delivery::Pending) continue;
    write_line(commands_log_, {{"op", "delivered"}, {"id", c.id}});
    c.status = Delivery::Delivered;
    out.push_back(c);
  }
  return out;
}

std::vector<Command> DataHub::commands(std::string_view target) const {
  std::lock_guard lock(commands_mu_);
  std::vector<Command> out;
  for (const auto& c : commands_) {
    if (c.target == target) out.push_back(c);
  }
  return out;
}

}  // namespace dtaas::datahub
