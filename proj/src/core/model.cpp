#include "obk/model.hpp"

#include <array>
#include <cmath>
#include <set>
#include <tuple>

#include "obk/envelope.hpp"
#include "obk/error.hpp"

namespace obk {
namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::pair<std::string_view, Enum>, N>& table, std::string_view text) {
  for (const auto& [name, value] : table) {
    if (name == text) {
      return value;
    }
  }
  return std::nullopt;
}

constexpr std::array<std::pair<std::string_view, RunStatus>, 3> kStatuses{{
    {"Open", RunStatus::Open}, {"Good", RunStatus::Good}, {"Bad", RunStatus::Bad}}};
constexpr std::array<std::pair<std::string_view, Severity>, 4> kSeverities{{
    {"Information", Severity::Information},
    {"Warning", Severity::Warning},
    {"Error", Severity::Error},
    {"Fatal", Severity::Fatal}}};
constexpr std::array<std::pair<std::string_view, CommentOrigin>, 3> kOrigins{{
    {"Online", CommentOrigin::Online}, {"Offline", CommentOrigin::Offline}, {"Web", CommentOrigin::Web}}};
constexpr std::array<std::pair<std::string_view, EnvelopeKind>, 5> kKinds{{
    {"SOR", EnvelopeKind::SOR},
    {"EOR", EnvelopeKind::EOR},
    {"MRS", EnvelopeKind::MRS},
    {"IS", EnvelopeKind::IS},
    {"COMMENT", EnvelopeKind::COMMENT}}};
constexpr std::array<std::pair<std::string_view, SortKey>, 3> kSortKeys{{
    {"run_number", SortKey::RunNumber}, {"start_time", SortKey::StartTime}, {"num_events", SortKey::NumEvents}}};
constexpr std::array<std::pair<std::string_view, SortDir>, 2> kSortDirs{{{"asc", SortDir::Asc}, {"desc", SortDir::Desc}}};
constexpr std::array<std::pair<std::string_view, ScalarTag>, 6> kTags{{
    {"int", ScalarTag::Int},
    {"float", ScalarTag::Float},
    {"bool", ScalarTag::Bool},
    {"str", ScalarTag::Str},
    {"time", ScalarTag::Time},
    {"list", ScalarTag::List}}};

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<std::string_view, Enum>, N>& table, Enum value) {
  for (const auto& [name, v] : table) {
    if (v == value) {
      return name;
    }
  }
  return "?";
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

char lower_ascii(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::string_view to_string(RunStatus s) { return name_of(kStatuses, s); }
std::string_view to_string(Severity s) { return name_of(kSeverities, s); }
std::string_view to_string(CommentOrigin o) { return name_of(kOrigins, o); }
std::string_view to_string(EnvelopeKind k) { return name_of(kKinds, k); }
std::string_view to_string(SortKey k) { return name_of(kSortKeys, k); }
std::string_view to_string(SortDir d) { return name_of(kSortDirs, d); }
std::string_view to_string(ScalarTag t) { return name_of(kTags, t); }

std::optional<RunStatus> parse_run_status(std::string_view text) { return lookup(kStatuses, text); }
std::optional<Severity> parse_severity(std::string_view text) { return lookup(kSeverities, text); }
std::optional<CommentOrigin> parse_comment_origin(std::string_view text) { return lookup(kOrigins, text); }
std::optional<EnvelopeKind> parse_envelope_kind(std::string_view text) { return lookup(kKinds, text); }
std::optional<SortKey> parse_sort_key(std::string_view text) { return lookup(kSortKeys, text); }
std::optional<SortDir> parse_sort_dir(std::string_view text) { return lookup(kSortDirs, text); }
std::optional<ScalarTag> parse_scalar_tag(std::string_view text) { return lookup(kTags, text); }

TriggerType::TriggerType(Kind kind) : kind_(kind) {
  if (kind == Kind::Other) {
    throw Error(ErrorCode::InvalidValue, "Other trigger type needs a label; use from_label");
  }
}

std::optional<TriggerType> TriggerType::from_label(std::string_view label) {
  if (label == "Cosmic") return TriggerType{Kind::Cosmic};
  if (label == "Calibration") return TriggerType{Kind::Calibration};
  if (label == "Physics") return TriggerType{Kind::Physics};
  if (label.empty() || !valid_text(label)) {
    return std::nullopt;
  }
  TriggerType t;
  t.kind_ = Kind::Other;
  t.other_ = std::string(label);
  return t;
}

std::string_view TriggerType::label() const {
  switch (kind_) {
    case Kind::Cosmic: return "Cosmic";
    case Kind::Calibration: return "Calibration";
    case Kind::Physics: return "Physics";
    case Kind::Other: return other_;
  }
  return other_;
}

std::string detector_mask_format(DetectorMask mask) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "0x00000000";
  for (int i = 0; i < 8; ++i) {
    out[9 - i] = kHex[(mask.bits >> (4 * i)) & 0xFU];
  }
  return out;
}

DetectorMask detector_mask_parse(std::string_view text) {
  if (text.size() != 10 || text[0] != '0' || text[1] != 'x') {
    throw Error(ErrorCode::InvalidValue, "detector mask must be 0x followed by 8 hex digits");
  }
  std::uint32_t bits = 0;
  for (std::size_t i = 2; i < text.size(); ++i) {
    const int v = hex_value(text[i]);
    if (v < 0) {
      throw Error(ErrorCode::InvalidValue, "detector mask contains a non-hex character");
    }
    bits = (bits << 4U) | static_cast<std::uint32_t>(v);
  }
  return DetectorMask{bits};
}

std::vector<std::string> validate_header(const RunHeader& h) {
  std::vector<std::string> out;
  if (!valid_partition_name(h.partition)) out.emplace_back("invalid-partition");
  if (h.run_number == 0) out.emplace_back("zero-run-number");
  if (h.run_number > kMaxRunNumber) out.emplace_back("run-number-out-of-range");
  if (h.num_events > kMaxCount || h.max_events > kMaxCount) out.emplace_back("count-out-of-range");
  if (h.status == RunStatus::Open && h.end_time) out.emplace_back("open-with-end-time");
  if (h.status != RunStatus::Open && !h.end_time) out.emplace_back("closed-without-end-time");
  if (h.end_time && *h.end_time < h.start_time) out.emplace_back("end-before-start");
  if (!valid_text(h.beam_type)) out.emplace_back("invalid-beam-type");
  return out;
}

ScalarTag tag_of(const Scalar& value) {
  return static_cast<ScalarTag>(value.index());
}

ScalarTag element_tag_of(const ScalarList& list) { return static_cast<ScalarTag>(list.index()); }

std::string scalar_type_name(const Scalar& value) {
  if (const auto* list = std::get_if<ScalarList>(&value)) {
    return "list:" + std::string(to_string(element_tag_of(*list)));
  }
  return std::string(to_string(tag_of(value)));
}

const IsAttribute* IsInfo::find(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.name == name) {
      return &a;
    }
  }
  return nullptr;
}

std::vector<std::string> validate_mrs(const MrsMessage& m) {
  std::vector<std::string> out;
  if (m.message_name.empty() || !valid_text(m.message_name)) out.emplace_back("message_name");
  if (!valid_text(m.application)) out.emplace_back("application");
  if (!valid_text(m.text)) out.emplace_back("text");
  for (const auto& q : m.qualifiers) {
    if (!valid_text(q)) {
      out.emplace_back("qualifiers");
      break;
    }
  }
  return out;
}

namespace {

bool scalar_storable(const Scalar& value) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return std::isfinite(v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return valid_text(v);
        } else if constexpr (std::is_same_v<T, ScalarList>) {
          return std::visit(
              [](const auto& items) {
                for (const auto& item : items) {
                  using E = std::decay_t<decltype(item)>;
                  if constexpr (std::is_same_v<E, double>) {
                    if (!std::isfinite(item)) return false;
                  } else if constexpr (std::is_same_v<E, std::string>) {
                    if (!valid_text(item)) return false;
                  }
                }
                return true;
              },
              v);
        } else {
          return true;
        }
      },
      value);
}

}  // namespace

std::vector<std::string> validate_is_info(const IsInfo& info) {
  std::vector<std::string> out;
  if (info.server.empty() || !valid_text(info.server)) out.emplace_back("server");
  if (info.object_name.empty() || !valid_text(info.object_name)) out.emplace_back("object_name");
  if (info.class_name.empty() || !valid_text(info.class_name)) out.emplace_back("class_name");
  std::set<std::string_view> names;
  for (const auto& a : info.attributes) {
    if (a.name.empty() || !valid_text(a.name) || !names.insert(a.name).second) {
      out.emplace_back("attributes.name");
      break;
    }
    if (!scalar_storable(a.value)) {
      out.emplace_back("attributes.value");
      break;
    }
  }
  return out;
}

std::vector<std::string> validate_comment(const Comment& c) {
  std::vector<std::string> out;
  if (c.author.empty() || !valid_text(c.author)) out.emplace_back("author");
  if (!valid_text(c.text)) out.emplace_back("text");
  if (c.text.empty() && c.attachments.empty()) out.emplace_back("empty-comment");
  for (const auto& a : c.attachments) {
    if (!valid_filename(a.filename)) out.emplace_back("attachments.filename");
    if (!valid_media_type(a.media_type)) out.emplace_back("attachments.media_type");
    if (!valid_digest(a.digest)) out.emplace_back("attachments.digest");
    if (a.size_bytes > kMaxCount) out.emplace_back("attachments.size_bytes");
  }
  return out;
}

std::vector<std::string> validate_criteria(const SearchCriteria& c) {
  std::vector<std::string> out;
  if (c.status && *c.status == RunStatus::Open) out.emplace_back("status");
  if (c.start_from && c.start_to && *c.start_from > *c.start_to) out.emplace_back("start_from");
  return out;
}

bool iequals_ascii(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (lower_ascii(a[i]) != lower_ascii(b[i])) {
      return false;
    }
  }
  return true;
}

bool criteria_match(const SearchCriteria& c, const RunHeader& h, bool include_open) {
  if (h.status == RunStatus::Open) {
    if (!include_open || c.status) return false;
  } else if (c.status && *c.status != h.status) {
    return false;
  }
  if (c.max_events_at_most && h.max_events > *c.max_events_at_most) return false;
  if (c.start_from && h.start_time < *c.start_from) return false;
  if (c.start_to && h.start_time > *c.start_to) return false;
  if (c.beam_type && !iequals_ascii(*c.beam_type, h.beam_type)) return false;
  if (c.trigger_type && !(*c.trigger_type == h.trigger_type)) return false;
  return true;
}

bool criteria_order_before(const SearchCriteria& c, const RunHeader& a, const RunHeader& b) {
  auto key = [&](const RunHeader& h) -> std::int64_t {
    switch (c.sort_key) {
      case SortKey::RunNumber: return static_cast<std::int64_t>(h.run_number);
      case SortKey::StartTime: return to_epoch_ms(h.start_time);
      case SortKey::NumEvents: return static_cast<std::int64_t>(h.num_events);
    }
    return 0;
  };
  const auto ka = key(a);
  const auto kb = key(b);
  if (ka != kb) {
    return c.sort_dir == SortDir::Asc ? ka < kb : ka > kb;
  }
  return std::tie(a.partition, a.run_number) < std::tie(b.partition, b.run_number);
}

bool valid_partition_name(std::string_view name) {
  if (name.empty() || name.size() > 64) {
    return false;
  }
  for (std::size_t i = 0; i < name.size(); ++i) {
    const char c = name[i];
    const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (!alnum && (i == 0 || (c != '_' && c != '.' && c != '-'))) {
      return false;
    }
  }
  return true;
}

bool valid_text(std::string_view text) {
  const auto* p = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = p[i];
    if (c < 0x80) {
      if (c < 0x20 && c != '\t' && c != '\n' && c != '\r') return false;
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0U) == 0xC0U) {
      len = 2;
      cp = c & 0x1FU;
    } else if ((c & 0xF0U) == 0xE0U) {
      len = 3;
      cp = c & 0x0FU;
    } else if ((c & 0xF8U) == 0xF0U) {
      len = 4;
      cp = c & 0x07U;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((p[i + k] & 0xC0U) != 0x80U) return false;
      cp = (cp << 6U) | (p[i + k] & 0x3FU);
    }
    // Overlong forms, surrogates, out of range, XML non-characters.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp == 0xFFFE || cp == 0xFFFF) {
      return false;
    }
    i += len;
  }
  return true;
}

bool valid_filename(std::string_view name) {
  if (name.empty() || name == "." || name == ".." || name.size() > 255 || !valid_text(name)) {
    return false;
  }
  for (char c : name) {
    if (c == '/' || c == '\\' || c == '\n' || c == '\r' || c == '\t') {
      return false;
    }
  }
  return true;
}

bool valid_media_type(std::string_view type) {
  const auto slash = type.find('/');
  if (slash == std::string_view::npos || slash == 0 || slash + 1 == type.size()) {
    return false;
  }
  for (std::size_t i = 0; i < type.size(); ++i) {
    const char c = type[i];
    if (i == slash) continue;
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '!' ||
                    c == '#' || c == '$' || c == '&' || c == '-' || c == '^' || c == '_' || c == '.' || c == '+';
    if (!ok) return false;
  }
  return true;
}

bool valid_digest(std::string_view digest) {
  if (digest.size() != 64) return false;
  for (char c : digest) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

EnvelopeKind payload_kind(const EnvelopePayload& payload) { return static_cast<EnvelopeKind>(payload.index()); }

}  // namespace obk
