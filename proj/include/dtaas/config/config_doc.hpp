#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/flavour.hpp"
#include "dtaas/common/ids.hpp"
#include "dtaas/common/scalar.hpp"

namespace dtaas::config {

/// Function/tool binding. A pair with only one side set is an unpaired
/// ("dangling") function or tool; the grammar decides whether that is legal.
struct FtPair {
  std::optional<AssetId> function;
  std::optional<AssetId> tool;

  bool complete() const noexcept { return function.has_value() && tool.has_value(); }
  friend bool operator==(const FtPair&, const FtPair&) = default;
};

/// `<ref>.<port>`: ref is an asset id of the same level, a child DT name,
/// `pt` (port = PT channel name) or `ext` (port = external endpoint name).
struct PortRef {
  std::string ref;
  std::string port;

  std::string str() const { return ref + "." + port; }
  friend bool operator==(const PortRef&, const PortRef&) = default;
};

inline constexpr std::string_view kPtRef = "pt";
inline constexpr std::string_view kExtRef = "ext";

struct Connection {
  PortRef producer;
  PortRef consumer;

  std::string str() const { return producer.str() + " -> " + consumer.str(); }
  friend bool operator==(const Connection&, const Connection&) = default;
};

/// Parses `"<ref>.<port> -> <ref>.<port>"`; throws Error(ParseError).
Connection parse_connection(std::string_view text);

/// C_a: asset composition and wiring.
struct CompositionSpec {
  std::vector<AssetId> data;
  std::vector<AssetId> models;
  std::vector<FtPair> ft_pairs;
  std::vector<AssetId> ready_dts;
  std::vector<std::string> child_dts;
  std::vector<Connection> connections;
  ParamMap parameters;

  friend bool operator==(const CompositionSpec&, const CompositionSpec&) = default;
};

/// C_i
struct InfraSpec {
  WorkspaceFlavour flavour = WorkspaceFlavour::IsolatedProcess;
  std::int64_t cpu_units = 1;
  std::int64_t memory_mb = 128;
  std::int64_t tick_ms = 100;

  friend bool operator==(const InfraSpec&, const InfraSpec&) = default;
};

enum class Direction { In, Out };

struct ExternalEndpoint {
  std::string name;
  std::string url;
  Direction direction = Direction::Out;

  friend bool operator==(const ExternalEndpoint&, const ExternalEndpoint&) = default;
};

/// C_e
struct ExternalSpec {
  std::vector<ExternalEndpoint> endpoints;

  friend bool operator==(const ExternalSpec&, const ExternalSpec&) = default;
};

enum class ChannelRole { Sensor, Actuator, Event, Command };

std::string_view role_name(ChannelRole r) noexcept;

struct PtChannel {
  std::string name;
  ChannelRole role = ChannelRole::Sensor;
  /// Series key for sensor/event channels, command target otherwise.
  std::string key;

  friend bool operator==(const PtChannel&, const PtChannel&) = default;
};

/// C_pt. Empty channels means a pure-simulation DT.
struct PtSpec {
  std::vector<PtChannel> channels;
  std::string endpoint;

  const PtChannel* find(std::string_view name) const;
  friend bool operator==(const PtSpec&, const PtSpec&) = default;
};

/// C_dt = {C_a, C_i, C_e, C_pt, children}; nests recursively.
struct ConfigDoc {
  std::string name;
  CompositionSpec c_a;
  InfraSpec c_i;
  ExternalSpec c_e;
  PtSpec c_pt;
  std::vector<ConfigDoc> children;

  const ConfigDoc* find_child(std::string_view child_name) const;
  friend bool operator==(const ConfigDoc&, const ConfigDoc&) = default;
};

/// Hierarchy depth l: 0 for a leaf, 1 + max over children otherwise.
std::size_t depth(const ConfigDoc& doc);

/// Name without the `~tag` suffix that derive_variant appends.
std::string_view base_name(std::string_view name) noexcept;

/// Every asset id referenced anywhere in the document tree.
std::vector<AssetId> referenced_assets(const ConfigDoc& doc);

std::optional<double> number_param(const ConfigDoc& doc, const std::string& name);

/// Canonical JSON form: every key present, lists always emitted.
nlohmann::json to_json(const ConfigDoc& doc);

}  // namespace dtaas::config
