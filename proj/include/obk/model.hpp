#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "obk/time.hpp"

namespace obk {

// Counts and run numbers must fit the relational backend's signed 64-bit
// integers; run numbers are further bounded by the 10-digit file naming.
inline constexpr std::uint64_t kMaxCount = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
inline constexpr std::uint64_t kMaxRunNumber = 9'999'999'999ULL;

enum class RunStatus { Open, Good, Bad };
enum class Severity { Information, Warning, Error, Fatal };
enum class CommentOrigin { Online, Offline, Web };
enum class EnvelopeKind { SOR, EOR, MRS, IS, COMMENT };

std::string_view to_string(RunStatus s);
std::string_view to_string(Severity s);
std::string_view to_string(CommentOrigin o);
std::string_view to_string(EnvelopeKind k);

std::optional<RunStatus> parse_run_status(std::string_view text);
std::optional<Severity> parse_severity(std::string_view text);
std::optional<CommentOrigin> parse_comment_origin(std::string_view text);
std::optional<EnvelopeKind> parse_envelope_kind(std::string_view text);

// Cosmic | Calibration | Physics, or any other non-empty label.
// An "Other" label equal to one of the named kinds is normalized to that kind.
class TriggerType {
 public:
  enum class Kind { Cosmic, Calibration, Physics, Other };

  TriggerType() = default;
  explicit TriggerType(Kind kind);
  static std::optional<TriggerType> from_label(std::string_view label);

  Kind kind() const { return kind_; }
  std::string_view label() const;

  friend bool operator==(const TriggerType&, const TriggerType&) = default;

 private:
  Kind kind_ = Kind::Physics;
  std::string other_;
};

// 32-bit opaque subdetector bitmask, text form "0x" + 8 lowercase hex digits.
struct DetectorMask {
  std::uint32_t bits = 0;
  friend auto operator<=>(const DetectorMask&, const DetectorMask&) = default;
};

std::string detector_mask_format(DetectorMask mask);
// Throws Error(InvalidValue) unless the input is "0x" followed by exactly 8 hex digits.
DetectorMask detector_mask_parse(std::string_view text);

struct RunHeader {
  std::string partition;
  std::uint64_t run_number = 0;
  Timestamp start_time{};
  std::optional<Timestamp> end_time;
  RunStatus status = RunStatus::Open;
  std::uint64_t num_events = 0;
  std::uint64_t max_events = 0;
  TriggerType trigger_type;
  std::string beam_type;
  DetectorMask detector_mask;

  friend bool operator==(const RunHeader&, const RunHeader&) = default;
};

// Violation codes are stable strings, e.g. "closed-without-end-time".
std::vector<std::string> validate_header(const RunHeader& header);

struct MrsMessage {
  std::string message_name;
  Severity severity = Severity::Information;
  std::string application;
  std::string text;
  Timestamp timestamp{};
  std::vector<std::string> qualifiers;

  friend bool operator==(const MrsMessage&, const MrsMessage&) = default;
};

enum class ScalarTag { Int, Float, Bool, Str, Time, List };

// Homogeneous list; the alternative carries the element tag even when empty.
using ScalarList = std::variant<std::vector<std::int64_t>, std::vector<double>, std::vector<bool>,
                                std::vector<std::string>, std::vector<Timestamp>>;
using Scalar = std::variant<std::int64_t, double, bool, std::string, Timestamp, ScalarList>;

ScalarTag tag_of(const Scalar& value);
// Element tag of a list value (never List).
ScalarTag element_tag_of(const ScalarList& list);
// "int", "float", "bool", "str", "time", or "list:<element>".
std::string scalar_type_name(const Scalar& value);
std::string_view to_string(ScalarTag tag);
std::optional<ScalarTag> parse_scalar_tag(std::string_view text);

struct IsAttribute {
  std::string name;
  Scalar value;
  friend bool operator==(const IsAttribute&, const IsAttribute&) = default;
};

struct IsInfo {
  std::string server;
  std::string object_name;
  std::string class_name;
  std::vector<IsAttribute> attributes;
  Timestamp timestamp{};

  friend bool operator==(const IsInfo&, const IsInfo&) = default;
  const IsAttribute* find(std::string_view name) const;
};

struct Attachment {
  std::string filename;
  std::string media_type;
  std::uint64_t size_bytes = 0;
  std::string digest;  // lowercase hex SHA-256 of the content

  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct Comment {
  std::uint64_t comment_id = 0;  // assigned by storage, 1..k per run
  std::string author;
  Timestamp created_at{};
  std::string text;
  CommentOrigin origin = CommentOrigin::Web;
  std::vector<Attachment> attachments;

  friend bool operator==(const Comment&, const Comment&) = default;
};

enum class SortKey { RunNumber, StartTime, NumEvents };
enum class SortDir { Asc, Desc };

std::string_view to_string(SortKey k);
std::string_view to_string(SortDir d);
std::optional<SortKey> parse_sort_key(std::string_view text);
std::optional<SortDir> parse_sort_dir(std::string_view text);

struct SearchCriteria {
  std::optional<RunStatus> status;  // Good or Bad only
  std::optional<std::uint64_t> max_events_at_most;
  std::optional<Timestamp> start_from;  // inclusive
  std::optional<Timestamp> start_to;    // inclusive
  std::optional<std::string> beam_type;  // exact, ASCII case-insensitive
  std::optional<TriggerType> trigger_type;
  SortKey sort_key = SortKey::RunNumber;
  SortDir sort_dir = SortDir::Desc;

  friend bool operator==(const SearchCriteria&, const SearchCriteria&) = default;
};

std::vector<std::string> validate_criteria(const SearchCriteria& criteria);

// Conjunction of every present criterion. Open runs only pass when include_open.
bool criteria_match(const SearchCriteria& criteria, const RunHeader& header, bool include_open);
// Strict weak order for (sort_key, sort_dir), ties by ascending (partition, run_number).
bool criteria_order_before(const SearchCriteria& criteria, const RunHeader& a, const RunHeader& b);

// Field-level checks applied by storage before persisting a record. Each
// returns the list of violated rules, empty when the record is storable.
std::vector<std::string> validate_mrs(const MrsMessage& message);
std::vector<std::string> validate_is_info(const IsInfo& info);
std::vector<std::string> validate_comment(const Comment& comment);

bool iequals_ascii(std::string_view a, std::string_view b);

// Partition names double as directory names: [A-Za-z0-9][A-Za-z0-9_.-]{0,63}.
bool valid_partition_name(std::string_view name);
// Rejects invalid UTF-8, C0 controls other than TAB/LF/CR, and U+FFFE/U+FFFF.
bool valid_text(std::string_view text);
bool valid_filename(std::string_view name);
bool valid_media_type(std::string_view type);
bool valid_digest(std::string_view digest);

}  // namespace obk
