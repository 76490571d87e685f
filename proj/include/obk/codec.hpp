#pragma once

// Canonical single-line JSON encoding of the domain types. Object keys are
// emitted in sorted order, timestamps as ISO-8601 UTC with milliseconds, the
// detector mask as "0x%08x". Decoders are strict: unknown or missing fields
// throw Error(PayloadSchemaError) naming the offending field path.

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "obk/envelope.hpp"
#include "obk/model.hpp"

namespace obk {

using Json = nlohmann::json;

Json to_json(const RunHeader& header);
Json to_json(const MrsMessage& message);
Json to_json(const IsInfo& info);
Json to_json(const IsAttribute& attribute);
Json to_json(const Attachment& attachment);
Json to_json(const Comment& comment);
Json to_json(const SearchCriteria& criteria);
Json to_json(const MessageEnvelope& envelope);
Json scalar_to_json(const Scalar& value);

// `path` prefixes the field names reported in errors.
RunHeader run_header_from_json(const Json& j, const std::string& path = {});
MrsMessage mrs_from_json(const Json& j, const std::string& path = {});
IsInfo is_info_from_json(const Json& j, const std::string& path = {});
Attachment attachment_from_json(const Json& j, const std::string& path = {});
Comment comment_from_json(const Json& j, const std::string& path = {});
// `type_name` is the scalar_type_name() form.
Scalar scalar_from_json(std::string_view type_name, const Json& value, const std::string& path = {});

// Envelope decoding with the full error taxonomy (MalformedJson, UnknownKind,
// VersionMismatch, PayloadSchemaError).
MessageEnvelope envelope_from_json(const Json& j);

template <typename T>
std::string encode_canonical(const T& value) {
  return to_json(value).dump();
}

// Plain-text form of a scalar as stored in XML element text: ints and floats
// in shortest round-trip decimal, bools true/false, strings verbatim, times ISO,
// lists as their canonical JSON array.
std::string scalar_to_text(const Scalar& value);
Scalar scalar_from_text(std::string_view type_name, std::string_view text, const std::string& path = {});

}  // namespace obk
