#include "doctest.h"
#include "support.hpp"

#include "smartenergy/presence.hpp"

using namespace smartenergy;
using namespace smartenergy::presence;

namespace {

const GeoFence kFence{"home", {35.19, -97.47}, 300.0, 400.0, 3};

geoloc::GeoFix fix_at(double distance_m, double bearing = 90.0) {
  const auto p = oracle::destination(kFence.center.lat, kFence.center.lon, bearing, distance_m);
  geoloc::GeoFix f;
  f.latitude = p.lat;
  f.longitude = p.lon;
  f.quality = geoloc::FixQuality::Fix;
  return f;
}

struct Run {
  PresenceState state;
  std::vector<PresenceEvent> events;
  Timestamp t = Timestamp{Seconds{1'300'000'000}};

  void feed(double d) {
    t += Seconds{60};
    auto r = step(state, kFence, "alice", fix_at(d), t);
    state = r.state;
    events.insert(events.end(), r.events.begin(), r.events.end());
  }
};

}  // namespace

TEST_CASE("dwell fixes inside settle an unknown state") {
  Run run;
  run.feed(50);
  run.feed(50);
  CHECK(run.state.state == Occupancy::Unknown);
  CHECK(run.events.empty());
  run.feed(50);
  CHECK(run.state.state == Occupancy::Inside);
  REQUIRE(run.events.size() == 1);
  CHECK(run.events[0].kind == EventKind::Enter);
  CHECK(run.events[0].fence_id == "home");
}

TEST_CASE("alternating fixes straddling the enter radius never leave") {
  Run run;
  run.state.state = Occupancy::Inside;
  for (int i = 0; i < 1000; ++i) run.feed(i % 2 ? 290 : 310);
  CHECK(run.state.state == Occupancy::Inside);
  CHECK(run.events.empty());
}

TEST_CASE("in-band fix resets the streak, then three far fixes exit") {
  Run run;
  run.state.state = Occupancy::Inside;
  run.feed(350);
  run.feed(410);
  run.feed(420);
  CHECK(run.state.state == Occupancy::Inside);
  run.feed(430);
  CHECK(run.state.state == Occupancy::Outside);
  REQUIRE(run.events.size() == 1);
  CHECK(run.events[0].kind == EventKind::Exit);

  Run interrupted;
  interrupted.state.state = Occupancy::Inside;
  interrupted.feed(410);
  interrupted.feed(420);
  interrupted.feed(350);
  interrupted.feed(430);
  interrupted.feed(440);
  CHECK(interrupted.state.state == Occupancy::Inside);
}

TEST_CASE("stale and invalid fixes are rejected without touching state") {
  PresenceState s;
  const Timestamp t{Seconds{1'300'000'000}};
  auto r = step(s, kFence, "alice", fix_at(50), t);
  CHECK_FALSE(r.rejected);
  auto stale = step(r.state, kFence, "alice", fix_at(50), t - Seconds{1});
  CHECK(stale.rejected);
  CHECK(stale.state == r.state);
  auto nofix = fix_at(50);
  nofix.quality = geoloc::FixQuality::NoFix;
  CHECK(step(r.state, kFence, "alice", nofix, t + Seconds{1}).rejected);
  // Equal timestamps are accepted.
  CHECK_FALSE(step(r.state, kFence, "alice", fix_at(50), t).rejected);
}

TEST_CASE("distance to fence") {
  geoloc::GeoFix at_center;
  at_center.latitude = kFence.center.lat;
  at_center.longitude = kFence.center.lon;
  at_center.quality = geoloc::FixQuality::Fix;
  CHECK(distance_to_fence(at_center, kFence) == 0.0);

  const GeoFence equator{"eq", {0.0, 0.0}, 300, 400, 3};
  geoloc::GeoFix north;
  north.latitude = 1.0;
  north.quality = geoloc::FixQuality::Fix;
  CHECK(std::fabs(distance_to_fence(north, equator) - 111194.93) < 0.01);
  CHECK(distance_to_fence(north, equator) == doctest::Approx(oracle::vector_distance_m(1, 0, 0, 0)).epsilon(1e-12));

  // Two fences, same fix, independent answers.
  const GeoFence other{"office", {35.21, -97.445}, 300, 400, 3};
  const auto f = fix_at(1000);
  const double a = distance_to_fence(f, kFence);
  const double b = distance_to_fence(f, other);
  CHECK(a == doctest::Approx(1000.0).epsilon(1e-9));
  CHECK(b == doctest::Approx(oracle::vector_distance_m(f.latitude, f.longitude, 35.21, -97.445)).epsilon(1e-9));
  CHECK(distance_to_fence(f, kFence) == a);
}

TEST_CASE("fence validation") {
  CHECK_NOTHROW(kFence.validate(20));
  auto narrow = kFence;
  narrow.exit_radius_m = 330;
  CHECK_THROWS_AS(narrow.validate(20), std::invalid_argument);
  auto inverted = kFence;
  inverted.exit_radius_m = 200;
  CHECK_THROWS_AS(inverted.validate(20), std::invalid_argument);
  auto nodwell = kFence;
  nodwell.min_dwell_fixes = 0;
  CHECK_THROWS_AS(nodwell.validate(20), std::invalid_argument);
}

TEST_CASE("random traces: events only after a full dwell of supporting fixes") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> d(0, 700);
  for (int trial = 0; trial < 200; ++trial) {
    Run run;
    std::vector<double> trace;
    std::vector<std::size_t> at;
    for (int i = 0; i < 200; ++i) {
      // Sticky random walk so transitions actually happen.
      const double v = (i && rng() % 4) ? trace.back() : d(rng);
      trace.push_back(v);
      const auto before = run.events.size();
      run.feed(v);
      if (run.events.size() > before) at.push_back(trace.size() - 1);
    }
    std::optional<EventKind> last;
    for (std::size_t k = 0; k < at.size(); ++k) {
      const auto& e = run.events[k];
      if (last) CHECK(*last != e.kind);
      last = e.kind;
      for (std::size_t j = at[k] - 2; j <= at[k]; ++j) {
        if (e.kind == EventKind::Enter) {
          CHECK(trace[j] < 300.0 + 1e-6);
        } else {
          CHECK(trace[j] > 400.0 - 1e-6);
        }
      }
    }
  }
}
