#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dtaas {

/// Machine-readable error codes shared by every module. The gateway maps
/// each one onto an HTTP status; the names returned by errc_name() are part
/// of the wire contract and must stay stable.
enum class Errc {
  NotFound,
  Forbidden,
  Unauthorized,
  Conflict,
  InvalidArgument,
  InUse,
  ParseError,
  UnknownField,
  ValidationFailed,
  UnknownPath,
  RootMismatch,
  InvalidTransition,
  RevalidationFailed,
  CapacityExhausted,
  UnknownSnapshot,
  NoAnalysisPipeline,
  NoHistory,
  UnknownTrigger,
  MalformedQuery,
  DanglingReference,
  AlreadyReleased,
  WorkspaceReleased,
  NonFinite,
  InvertedRange,
  UnknownTarget,
  EmptyCandidates,
  NoEstimate,
  Internal,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace dtaas
