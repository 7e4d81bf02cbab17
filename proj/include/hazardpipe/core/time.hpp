#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace hazardpipe {

// UTC, millisecond precision.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Millis = std::chrono::milliseconds;

inline Timestamp from_epoch_ms(std::int64_t ms) { return Timestamp{Millis{ms}}; }
inline std::int64_t to_epoch_ms(Timestamp t) { return t.time_since_epoch().count(); }

Timestamp now_utc();

// "2024-05-01T12:00:00.000Z"
std::string format_iso8601(Timestamp t);
// Accepts the format produced by format_iso8601 (fractional part optional).
// Throws Error{"BadTimestamp"}.
Timestamp parse_iso8601(const std::string& text);

inline double seconds_between(Timestamp a, Timestamp b) {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace hazardpipe
