#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace obk {

// UTC, millisecond resolution everywhere.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// "2002-08-14T12:30:00.000Z". Years outside 0000..9999 are not representable.
std::string format_timestamp(Timestamp t);

// Strict inverse of format_timestamp: exactly 24 characters, calendar-valid.
std::optional<Timestamp> parse_timestamp(std::string_view text);

Timestamp now_utc();

inline std::int64_t to_epoch_ms(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_epoch_ms(std::int64_t ms) { return Timestamp{std::chrono::milliseconds{ms}}; }

}  // namespace obk
