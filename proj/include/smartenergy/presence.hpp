#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smartenergy/geoloc.hpp"
#include "smartenergy/timeutil.hpp"

namespace smartenergy::presence {

inline constexpr double kDefaultJitterM = 20.0;

// Circular region around a building. A user is Inside once fixes stay closer
// than enter_radius_m and Outside once they stay beyond exit_radius_m; the
// band between the two radii never changes state.
struct GeoFence {
  std::string fence_id;
  geoloc::LatLon center;
  double enter_radius_m = 300.0;
  double exit_radius_m = 400.0;
  int min_dwell_fixes = 3;

  // Throws std::invalid_argument when the radii, dwell or the hysteresis band
  // (which must exceed twice the jitter amplitude) are inconsistent.
  void validate(double jitter_m = kDefaultJitterM) const;
};

enum class Occupancy { Unknown, Inside, Outside };

const char* to_string(Occupancy o);
std::optional<Occupancy> occupancy_from_string(std::string_view s);

struct PresenceState {
  Occupancy state = Occupancy::Unknown;
  std::optional<Occupancy> candidate;
  int streak = 0;
  std::optional<Timestamp> last_fix_time;

  bool operator==(const PresenceState&) const = default;
};

enum class EventKind { Enter, Exit };

const char* to_string(EventKind k);

struct PresenceEvent {
  std::string user;
  std::string fence_id;
  EventKind kind = EventKind::Enter;
  Timestamp at{};

  bool operator==(const PresenceEvent&) const = default;
};

struct StepResult {
  PresenceState state;
  std::vector<PresenceEvent> events;
  bool rejected = false;  // stale or invalid fix; state is unchanged
  double distance_m = 0.0;
};

double distance_to_fence(const geoloc::GeoFix& fix, const GeoFence& fence);

// Advances one (user, fence) machine by one fix stamped at `at`.
StepResult step(const PresenceState& state, const GeoFence& fence, const std::string& user,
                const geoloc::GeoFix& fix, Timestamp at);

}  // namespace smartenergy::presence
