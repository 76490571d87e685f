#include <variant>

#include "obk/error.hpp"
#include "obk/ingest.hpp"

namespace obk {
namespace {

void require_storable(const std::vector<std::string>& violations) {
  if (!violations.empty()) {
    throw Error(ErrorCode::PayloadSchemaError, "payload cannot be stored: " + violations.front(),
                "payload." + violations.front());
  }
}

}  // namespace

MessageEnvelope parse_envelope(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto j = Json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedJson, "line is not valid JSON");
  auto e = envelope_from_json(j);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SorPayload>) {
          RunHeader h;
          h.partition = e.partition;
          h.run_number = p.run_number;
          h.start_time = e.timestamp;
          h.max_events = p.max_events;
          h.trigger_type = p.trigger_type;
          h.beam_type = p.beam_type;
          h.detector_mask = p.detector_mask;
          require_storable(validate_header(h));
        } else if constexpr (std::is_same_v<T, MrsMessage>) {
          require_storable(validate_mrs(p));
        } else if constexpr (std::is_same_v<T, IsInfo>) {
          require_storable(validate_is_info(p));
        } else if constexpr (std::is_same_v<T, CommentPayload>) {
          Comment c;
          c.author = p.author;
          c.text = p.text;
          c.created_at = e.timestamp;
          for (const auto& a : p.attachments) c.attachments.push_back(a.meta);
          require_storable(validate_comment(c));
        }
      },
      e.payload);
  return e;
}

std::uint64_t salvage_seq(std::string_view line) {
  const auto j = Json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return 0;
  const auto it = j.find("seq");
  if (it == j.end() || !it->is_number_unsigned()) return 0;
  return it->get<std::uint64_t>();
}

}  // namespace obk
