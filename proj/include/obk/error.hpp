#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace obk {

// Wire-visible error codes. The names are what `err <seq> <CODE>` replies and
// JSON error bodies carry, so they must stay stable.
enum class ErrorCode {
  MalformedJson,
  UnknownKind,
  VersionMismatch,
  PayloadSchemaError,
  Filtered,
  DuplicateRun,
  NoOpenRun,
  AlreadyOpen,
  SeqRegression,
  NotOpen,
  UnknownRun,
  RunClosed,
  EndBeforeStart,
  DigestMismatch,
  AlreadyExists,
  PermissionDenied,
  NotARepository,
  RepositoryVersionMismatch,
  ReadOnly,
  TypeMismatch,
  InvalidCriteria,
  InvalidValue,
  UnknownAttachment,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  // Offending field path (e.g. "payload.run_number"), empty when not applicable.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace obk
