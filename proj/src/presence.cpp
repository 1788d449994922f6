#include "smartenergy/presence.hpp"

namespace smartenergy::presence {

void GeoFence::validate(double jitter_m) const {
  if (fence_id.empty()) throw std::invalid_argument("fence id must not be empty");
  if (!(enter_radius_m > 0.0)) throw std::invalid_argument("fence " + fence_id + ": enter radius must be > 0");
  if (!(exit_radius_m > enter_radius_m)) {
    throw std::invalid_argument("fence " + fence_id + ": exit radius must exceed enter radius");
  }
  if (!(exit_radius_m - enter_radius_m > 2.0 * jitter_m)) {
    throw std::invalid_argument("fence " + fence_id + ": hysteresis band must exceed twice the jitter");
  }
  if (min_dwell_fixes < 1) throw std::invalid_argument("fence " + fence_id + ": dwell must be positive");
  if (center.lat < -90.0 || center.lat > 90.0 || center.lon < -180.0 || center.lon > 180.0) {
    throw std::invalid_argument("fence " + fence_id + ": center out of range");
  }
}

const char* to_string(Occupancy o) {
  switch (o) {
    case Occupancy::Unknown: return "Unknown";
    case Occupancy::Inside: return "Inside";
    case Occupancy::Outside: return "Outside";
  }
  return "?";
}

std::optional<Occupancy> occupancy_from_string(std::string_view s) {
  if (s == "Unknown" || s == "unknown") return Occupancy::Unknown;
  if (s == "Inside" || s == "inside") return Occupancy::Inside;
  if (s == "Outside" || s == "outside") return Occupancy::Outside;
  return std::nullopt;
}

const char* to_string(EventKind k) { return k == EventKind::Enter ? "Enter" : "Exit"; }

double distance_to_fence(const geoloc::GeoFix& fix, const GeoFence& fence) {
  return geoloc::haversine_m(fix.position(), fence.center);
}

StepResult step(const PresenceState& state, const GeoFence& fence, const std::string& user,
                const geoloc::GeoFix& fix, Timestamp at) {
  StepResult out;
  out.state = state;
  if (fix.quality != geoloc::FixQuality::Fix || (state.last_fix_time && at < *state.last_fix_time)) {
    out.rejected = true;
    return out;
  }

  auto& next = out.state;
  next.last_fix_time = at;
  const double d = distance_to_fence(fix, fence);
  out.distance_m = d;

  std::optional<Occupancy> support;
  if (d < fence.enter_radius_m) {
    support = Occupancy::Inside;
  } else if (d > fence.exit_radius_m) {
    support = Occupancy::Outside;
  }

  // In-band fixes, and fixes agreeing with the settled state, clear any
  // pending transition.
  if (!support || *support == next.state) {
    next.candidate.reset();
    next.streak = 0;
    return out;
  }

  if (next.candidate == support) {
    ++next.streak;
  } else {
    next.candidate = support;
    next.streak = 1;
  }
  if (next.streak >= fence.min_dwell_fixes) {
    next.state = *support;
    next.candidate.reset();
    next.streak = 0;
    out.events.push_back(
        {user, fence.fence_id, *support == Occupancy::Inside ? EventKind::Enter : EventKind::Exit, at});
  }
  return out;
}

}  // namespace smartenergy::presence
