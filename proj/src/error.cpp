#include "persuade/error.hpp"

namespace persuade {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kDuplicateId: return "duplicate_id";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kState: return "state";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kReferential: return "referential";
    case ErrorKind::kUnknownStrategy: return "unknown_strategy";
    case ErrorKind::kFrozen: return "frozen";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kUnknownTemplate: return "unknown_template";
    case ErrorKind::kMissingSlot: return "missing_slot";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kOutOfRange: return "out_of_range";
    case ErrorKind::kParseExhausted: return "parse_exhausted";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kHttpStatus: return "http_status";
    case ErrorKind::kRateLimited: return "rate_limited";
    case ErrorKind::kTimeout: return "timeout";
    case ErrorKind::kReplayMiss: return "replay_miss";
    case ErrorKind::kScriptMiss: return "script_miss";
    case ErrorKind::kUndefinedMetric: return "undefined_metric";
  }
  return "unknown";
}

}  // namespace persuade
