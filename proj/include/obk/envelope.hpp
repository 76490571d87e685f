#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "obk/model.hpp"

namespace obk {

inline constexpr int kEnvelopeVersion = 1;

struct SorPayload {
  std::uint64_t run_number = 0;
  std::uint64_t max_events = 0;
  TriggerType trigger_type;
  std::string beam_type;
  DetectorMask detector_mask;
  friend bool operator==(const SorPayload&, const SorPayload&) = default;
};

struct EorPayload {
  RunStatus status = RunStatus::Good;  // Good or Bad
  std::uint64_t num_events = 0;
  friend bool operator==(const EorPayload&, const EorPayload&) = default;
};

// Attachment metadata plus the raw bytes (base64 on the wire).
struct AttachmentUpload {
  Attachment meta;
  std::string content;
  friend bool operator==(const AttachmentUpload&, const AttachmentUpload&) = default;
};

// A comment before storage assigns its id; created_at is the envelope timestamp.
struct CommentPayload {
  std::string author;
  std::string text;
  CommentOrigin origin = CommentOrigin::Online;
  std::vector<AttachmentUpload> attachments;
  friend bool operator==(const CommentPayload&, const CommentPayload&) = default;
};

using EnvelopePayload = std::variant<SorPayload, EorPayload, MrsMessage, IsInfo, CommentPayload>;

struct MessageEnvelope {
  int version = kEnvelopeVersion;
  EnvelopeKind kind = EnvelopeKind::SOR;
  std::string partition;
  std::uint64_t seq = 0;
  Timestamp timestamp{};
  EnvelopePayload payload;
  friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;
};

EnvelopeKind payload_kind(const EnvelopePayload& payload);

}  // namespace obk
