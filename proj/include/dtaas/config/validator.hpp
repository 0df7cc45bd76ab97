#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtaas/common/error.hpp"
#include "dtaas/config/config_doc.hpp"
#include "dtaas/registry/asset.hpp"

namespace dtaas::config {

enum class Severity { Error, Warning };

/// Stable rule identifiers carried by diagnostics.
namespace rule {
inline constexpr std::string_view kGrammarNoPair = "GRAMMAR-01";
inline constexpr std::string_view kGrammarReadyDt = "GRAMMAR-02";
inline constexpr std::string_view kGrammarUnpaired = "GRAMMAR-03";
inline constexpr std::string_view kDependency = "DEP-01";
inline constexpr std::string_view kUnresolved = "REF-01";
inline constexpr std::string_view kKindMismatch = "REF-02";
inline constexpr std::string_view kChildRef = "REF-03";
inline constexpr std::string_view kConnectionRef = "REF-04";
inline constexpr std::string_view kUnknownPort = "PORT-01";
inline constexpr std::string_view kPortDirection = "PORT-02";
inline constexpr std::string_view kDataPorts = "DATA-01";
inline constexpr std::string_view kParamRange = "PARAM-01";
inline constexpr std::string_view kInfra = "INFRA-01";
inline constexpr std::string_view kExternalDup = "EXT-01";
inline constexpr std::string_view kChannelDup = "PT-01";
inline constexpr std::string_view kNoFeedback = "PT-02";
inline constexpr std::string_view kNoPhysicalTwin = "PT-03";
inline constexpr std::string_view kCycle = "CYCLE-01";
}  // namespace rule

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string rule;
  std::string message;
  std::string path;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct ValidationReport {
  bool valid = true;
  std::vector<Diagnostic> diagnostics;

  bool has(std::string_view rule_id) const;
  /// True when any error diagnostic's rule starts with `prefix`.
  bool has_error_prefix(std::string_view prefix) const;
  std::size_t error_count() const;

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

nlohmann::json to_json(const ValidationReport& report);

/// Checks, recursively over every nested document: composition grammar,
/// the F/T dependency rule, reference resolution and kinds, port
/// compatibility, parameter ranges, and the C_i/C_e/C_pt invariants.
/// Problems are reported as diagnostics, never thrown.
ValidationReport validate_config(const ConfigDoc& doc, const registry::AssetResolver& resolver);

/// Grammar verdict only (GRAMMAR-* rules of a single level).
std::vector<Diagnostic> check_grammar(const CompositionSpec& c_a, const std::string& path);

class ValidationError : public Error {
 public:
  ValidationError(Errc code, ValidationReport report, const std::string& message)
      : Error(code, message), report_(std::move(report)) {}

  const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

/// Numeric interval such as `(0, 10]` or `[20, inf)`.
struct Interval {
  double lo;
  double hi;
  bool lo_closed;
  bool hi_closed;

  bool contains(double v) const noexcept;
};

std::optional<Interval> parse_interval(std::string_view text);

}  // namespace dtaas::config
