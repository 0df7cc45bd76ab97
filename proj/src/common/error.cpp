#include "dtaas/common/error.hpp"

namespace dtaas {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NotFound: return "NOT_FOUND";
    case Errc::Forbidden: return "FORBIDDEN";
    case Errc::Unauthorized: return "UNAUTHORIZED";
    case Errc::Conflict: return "CONFLICT";
    case Errc::InvalidArgument: return "INVALID_ARGUMENT";
    case Errc::InUse: return "IN_USE";
    case Errc::ParseError: return "PARSE_ERROR";
    case Errc::UnknownField: return "UNKNOWN_FIELD";
    case Errc::ValidationFailed: return "VALIDATION_FAILED";
    case Errc::UnknownPath: return "UNKNOWN_PATH";
    case Errc::RootMismatch: return "ROOT_MISMATCH";
    case Errc::InvalidTransition: return "INVALID_TRANSITION";
    case Errc::RevalidationFailed: return "REVALIDATION_FAILED";
    case Errc::CapacityExhausted: return "CAPACITY_EXHAUSTED";
    case Errc::UnknownSnapshot: return "UNKNOWN_SNAPSHOT";
    case Errc::NoAnalysisPipeline: return "NO_ANALYSIS_PIPELINE";
    case Errc::NoHistory: return "NO_HISTORY";
    case Errc::UnknownTrigger: return "UNKNOWN_TRIGGER";
    case Errc::MalformedQuery: return "MALFORMED_QUERY";
    case Errc::DanglingReference: return "DANGLING_REFERENCE";
    case Errc::AlreadyReleased: return "ALREADY_RELEASED";
    case Errc::WorkspaceReleased: return "WORKSPACE_RELEASED";
    case Errc::NonFinite: return "NON_FINITE";
    case Errc::InvertedRange: return "INVERTED_RANGE";
    case Errc::UnknownTarget: return "UNKNOWN_TARGET";
    case Errc::EmptyCandidates: return "EMPTY_CANDIDATES";
    case Errc::NoEstimate: return "NO_ESTIMATE";
    case Errc::Internal: return "INTERNAL";
  }
  return "INTERNAL";
}

}  // namespace dtaas
