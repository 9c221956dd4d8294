#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace persuade {

enum class ErrorKind {
  kValidation,
  kDuplicateId,
  kNotFound,
  kConflict,
  kState,
  kConfig,
  kIo,
  kSchema,
  kReferential,
  kUnknownStrategy,
  kFrozen,
  kPrecondition,
  kUnknownTemplate,
  kMissingSlot,
  kParse,
  kOutOfRange,
  kParseExhausted,
  kTransport,
  kHttpStatus,
  kRateLimited,
  kTimeout,
  kReplayMiss,
  kScriptMiss,
  kUndefinedMetric,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A model reply that does not satisfy an output contract. Carries the raw
/// text so the caller can feed the failure back to the model.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw,
             ErrorKind kind = ErrorKind::kParse)
      : Error(kind, message), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Terminal failure of a retried structured call.
class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& message, std::vector<std::string> attempts)
      : Error(ErrorKind::kParseExhausted, message), attempts_(std::move(attempts)) {}

  const std::vector<std::string>& attempts() const noexcept { return attempts_; }

 private:
  std::vector<std::string> attempts_;
};

class GatewayError : public Error {
 public:
  GatewayError(ErrorKind kind, const std::string& message, int http_status = 0)
      : Error(kind, message), http_status_(http_status) {}

  int http_status() const noexcept { return http_status_; }

 private:
  int http_status_;
};

}  // namespace persuade
