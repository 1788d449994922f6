#pragma once

#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace smartenergy {

// All simulated and wall-clock instants are whole seconds on the system clock.
// Meter and scenario timestamps are building-local wall time; no zone math.
using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional 'T' or ' ' separator,
// optional fractional seconds (truncated) and an optional trailing 'Z' or
// +hh:mm offset (ignored: the wall time is taken as written). A bare date
// means midnight.
std::optional<Timestamp> parse_iso8601(std::string_view text);

// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(Timestamp t);

inline std::chrono::sys_days day_of(Timestamp t) {
  return std::chrono::floor<std::chrono::days>(t);
}

inline Seconds time_of_day(Timestamp t) {
  return t - std::chrono::time_point_cast<Seconds>(day_of(t));
}

inline double hours_between(Timestamp a, Timestamp b) {
  return static_cast<double>((b - a).count()) / 3600.0;
}

// Source of "now" for everything that stamps events. Replays use a simulated
// clock; the live service uses the system clock. Both feed the same pipeline.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now());
  }
};

class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(Timestamp start = Timestamp{}) : now_(start.time_since_epoch().count()) {}
  Timestamp now() const override { return Timestamp{Seconds{now_.load()}}; }
  void set(Timestamp t) { now_.store(t.time_since_epoch().count()); }

 private:
  std::atomic<long long> now_;
};

}  // namespace smartenergy
