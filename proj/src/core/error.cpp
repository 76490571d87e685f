#include "obk/error.hpp"

namespace obk {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::PayloadSchemaError: return "PayloadSchemaError";
    case ErrorCode::Filtered: return "Filtered";
    case ErrorCode::DuplicateRun: return "DuplicateRun";
    case ErrorCode::NoOpenRun: return "NoOpenRun";
    case ErrorCode::AlreadyOpen: return "AlreadyOpen";
    case ErrorCode::SeqRegression: return "SeqRegression";
    case ErrorCode::NotOpen: return "NotOpen";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::RunClosed: return "RunClosed";
    case ErrorCode::EndBeforeStart: return "EndBeforeStart";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::AlreadyExists: return "AlreadyExists";
    case ErrorCode::PermissionDenied: return "PermissionDenied";
    case ErrorCode::NotARepository: return "NotARepository";
    case ErrorCode::RepositoryVersionMismatch: return "RepositoryVersionMismatch";
    case ErrorCode::ReadOnly: return "ReadOnly";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::InvalidCriteria: return "InvalidCriteria";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::UnknownAttachment: return "UnknownAttachment";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace obk
