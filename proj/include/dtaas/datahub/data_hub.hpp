#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/clock.hpp"

namespace dtaas::datahub {

struct SeriesPoint {
  std::string key;
  std::int64_t ts = 0;
  double value = 0.0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

enum class EventSource { PT, DT, User };

std::string_view source_name(EventSource s) noexcept;
std::optional<EventSource> parse_source(std::string_view text) noexcept;

struct Event {
  std::uint64_t id = 0;
  EventSource source = EventSource::DT;
  /// Emitting entity: an instance id, connector name or user.
  std::string origin;
  std::string type;
  nlohmann::json payload = nlohmann::json::object();
  /// Assigned from the hub clock when zero.
  std::int64_t ts = 0;
};

struct EventFilter {
  std::optional<std::string> type;
  std::optional<EventSource> source;
  std::optional<std::string> origin;
  /// 0 = unlimited.
  std::size_t limit = 0;
};

enum class Delivery { Pending, Delivered };

struct Command {
  std::uint64_t id = 0;
  /// `<connector>/<channel>`.
  std::string target;
  std::string name;
  nlohmann::json args = nlohmann::json::object();
  std::int64_t ts = 0;
  Delivery status = Delivery::Pending;
};

nlohmann::json to_json(const SeriesPoint& p);
nlohmann::json to_json(const Event& e);
nlohmann::json to_json(const Command& c);
Event event_from_json(const nlohmann::json& j);
Command command_from_json(const nlohmann::json& j);

/// Reversible file-name encoding of a series key.
std::string encode_key(std::string_view key);
std::string decode_key(std::string_view file_stem);

/// Append-only store for time series, events and commands. Survives
/// restarts by replaying its logs; lives independently of any DT phase.
class DataHub {
 public:
  DataHub(std::filesystem::path root, const Clock& clock);
  ~DataHub();

  DataHub(const DataHub&) = delete;
  DataHub& operator=(const DataHub&) = delete;

  /// Throws Error(NonFinite) or Error(InvalidArgument) for an empty key.
  void append_point(const SeriesPoint& p);
  /// All-or-nothing validation, then appends in order.
  void append_batch(const std::vector<SeriesPoint>& points);

  /// Points with t0 <= ts <= t1 sorted by timestamp, ties in insertion
  /// order. Throws Error(InvertedRange).
  std::vector<SeriesPoint> query_range(std::string_view key, std::int64_t t0, std::int64_t t1) const;
  std::optional<SeriesPoint> latest(std::string_view key) const;
  std::size_t point_count(std::string_view key) const;
  std::vector<std::string> series_keys() const;

  std::uint64_t publish_event(Event e);
  /// Events with id > `after`, ascending.
  std::vector<Event> poll_events(std::uint64_t after, const EventFilter& filter = {}) const;
  std::uint64_t last_event_id() const;

  /// Callback run after every publish, outside hub locks.
  using EventListener = std::function<void(const Event&)>;
  std::uint64_t subscribe(EventListener listener);
  void unsubscribe(std::uint64_t token);

  void register_connector(const std::string& name, const std::vector<std::string>& channels);
  void unregister_connector(const std::string& name);
  bool has_target(std::string_view target) const;

  /// Throws Error(UnknownTarget).
  std::uint64_t send_command(Command c);
  /// Pending commands for `target`, marked Delivered (at most once).
  std::vector<Command> fetch_commands(std::string_view target);
  /// Every command ever sent to `target`, any status.
  std::vector<Command> commands(std::string_view target) const;

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  struct Series;

  Series& series_for(const std::string& key);
  const Series* find_series(std::string_view key) const;
  void load_series();
  void load_events();
  void load_commands();
  void write_line(std::FILE* f, const nlohmann::json& j);

  std::filesystem::path root_;
  const Clock& clock_;

  mutable std::shared_mutex series_mu_;
  std::map<std::string, std::unique_ptr<Series>, std::less<>> series_;

  mutable std::mutex events_mu_;
  std::vector<Event> events_;
  std::uint64_t next_event_id_ = 1;
  std::FILE* events_log_ = nullptr;

  mutable std::mutex listeners_mu_;
  std::map<std::uint64_t, EventListener> listeners_;
  std::uint64_t next_listener_ = 1;

  mutable std::mutex commands_mu_;
  std::map<std::string, std::vector<std::string>, std::less<>> connectors_;
  std::vector<Command> commands_;
  std::uint64_t next_command_id_ = 1;
  std::FILE* commands_log_ = nullptr;
};

}  // namespace dtaas::datahub
