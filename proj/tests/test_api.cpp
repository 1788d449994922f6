#include <set>

#include "doctest.h"
#include "httplib.h"
#include "smartenergy/api.hpp"
#include "smartenergy/config.hpp"
#include "support.hpp"

using namespace smartenergy;
using api::Request;
using runtime::Json;

namespace {

const Timestamp kStart = *parse_iso8601("2011-10-03T08:00:00");

struct Fixture {
  config::Config cfg = config::load_config(oracle::source_dir() / "config" / "reference.yaml");
  SimulatedClock clock{kStart};
  std::unique_ptr<runtime::Controller> ctl;

  explicit Fixture(std::optional<std::string> token = std::nullopt) {
    cfg.api_token = std::move(token);
    ctl = std::make_unique<runtime::Controller>(cfg, clock, kStart);
    ctl->seed_presence("alice", "home", presence::Occupancy::Inside);
    ctl->seed_presence("alice", "office", presence::Occupancy::Outside);
  }

  api::Response call(const std::string& method, const std::string& path, const std::string& body = {},
                     std::map<std::string, std::string> query = {}) {
    Request r;
    r.method = method;
    r.path = path;
    r.body = body;
    r.query = std::move(query);
    return api::api_dispatch(*ctl, r);
  }
};

Json body(const api::Response& r) { return Json::parse(r.body); }

}  // namespace

TEST_CASE("routing and methods") {
  Fixture f;
  CHECK(f.call("GET", "/api/devices").status == 200);
  CHECK(f.call("POST", "/api/devices").status == 405);
  CHECK(f.call("GET", "/api/location").status == 405);
  CHECK(f.call("GET", "/api/nowhere").status == 404);
  CHECK(f.call("GET", "/status").status == 404);
  CHECK(f.call("GET", "/api/devices/desktop/state").status == 405);
  CHECK(f.call("POST", "/api/policies").status == 405);
  CHECK(f.call("GET", "/api/report/energy").status == 200);
  CHECK(f.call("GET", "/api/report/rollup").status == 200);
  CHECK(body(f.call("GET", "/api/zzz"))["error"] == "not_found");

  const auto devices = body(f.call("GET", "/api/devices"))["devices"];
  CHECK(devices.size() == 16);
  const auto fridge = std::find_if(devices.begin(), devices.end(), [](const Json& d) { return d["id"] == "fridge1"; });
  REQUIRE(fridge != devices.end());
  CHECK((*fridge)["exempt"] == true);
  CHECK((*fridge)["state"] == "ON");
}

TEST_CASE("token guard") {
  Fixture f("s3cret");
  CHECK(f.call("GET", "/api/devices").status == 401);
  Request r;
  r.method = "GET";
  r.path = "/api/devices";
  r.headers["x-api-token"] = "s3cret";
  CHECK(api::api_dispatch(*f.ctl, r).status == 200);
  r.headers.clear();
  r.headers["authorization"] = "Bearer s3cret";
  CHECK(api::api_dispatch(*f.ctl, r).status == 200);
  r.headers["authorization"] = "Bearer nope";
  CHECK(api::api_dispatch(*f.ctl, r).status == 401);
}

TEST_CASE("location posts") {
  Fixture f;
  const auto seq = f.ctl->log().last_seq();
  for (const auto* bad : {"", "{", "[]", R"({"lat":1,"lon":2})", R"({"user":"alice"})", R"({"user":"alice","lat":"x","lon":2})",
                          R"({"user":"alice","nmea":5})", R"({"user":"alice","lat":1,"lon":2,"ts":"soon"})"}) {
    CHECK(f.call("POST", "/api/location", bad).status == 400);
  }
  // malformed bodies never reach the log
  CHECK(f.ctl->log().last_seq() == seq);

  const auto rejected = f.call("POST", "/api/location", R"({"user":"alice","nmea":"$GPGGA,1*00"})");
  CHECK(rejected.status == 422);
  CHECK(body(rejected)["accepted"] == false);
  CHECK(f.ctl->log().last_seq() == seq + 1);
  CHECK(f.call("POST", "/api/location", R"({"user":"mallory","lat":35.19,"lon":-97.47})").status == 404);

  const auto home = f.cfg.fence("home")->center;
  auto post = [&](double dist_m, int minute) {
    const auto p = oracle::destination(home.lat, home.lon, 90.0, dist_m);
    Json b{{"user", "alice"}, {"lat", p.lat}, {"lon", p.lon},
           {"ts", format_iso8601(kStart + std::chrono::minutes{minute})}};
    return f.call("POST", "/api/location", b.dump());
  };
  CHECK(body(post(10, 1))["events"].empty());
  post(900, 2);
  post(900, 3);
  const auto exit = body(post(900, 4));
  REQUIRE(exit["events"].size() == 1);
  CHECK(exit["events"][0]["event"] == "Exit");
  CHECK(exit["events"][0]["fence"] == "home");

  const auto presence = body(f.call("GET", "/api/presence/alice"));
  CHECK(presence["mode"] == "luxury");
  REQUIRE(presence["fences"].size() == 2);
  CHECK(presence["fences"][0]["fence"] == "home");
  CHECK(presence["fences"][0]["state"] == "Outside");
  CHECK(presence["fences"][0]["distance_m"].get<double>() == doctest::Approx(900).epsilon(1e-6));
  CHECK(f.call("GET", "/api/presence/mallory").status == 404);
}

TEST_CASE("device state") {
  Fixture f;
  CHECK(f.call("POST", "/api/devices/desktop/state", R"({"state":"ON"})").status == 200);
  CHECK(f.ctl->snapshot()->devices.at("desktop").state == devicenet::SwitchState::On);
  CHECK(f.call("POST", "/api/devices/desktop/state", R"({"state":"dim"})").status == 400);
  CHECK(f.call("POST", "/api/devices/desktop/state", "nope").status == 400);
  CHECK(f.call("POST", "/api/devices/toaster/state", R"({"state":"ON"})").status == 404);
  const auto exempt = f.call("POST", "/api/devices/fridge1/state", R"({"state":"OFF"})");
  CHECK(exempt.status == 409);
  CHECK(body(exempt)["error"] == "exempt");

  const auto put = f.call("PUT", "/api/policies/campus-dark",
                          R"({"realm":"campus","scope":"realm:campus","action":"MandateOff","note":"saving"})");
  CHECK(put.status == 200);
  CHECK(body(put)["rule"]["devices"].size() == 8);
  CHECK(f.ctl->snapshot()->devices.at("desktop").state == devicenet::SwitchState::Off);
  const auto conflict = f.call("POST", "/api/devices/desktop/state", R"({"state":"ON"})");
  CHECK(conflict.status == 409);
  CHECK(body(conflict)["error"] == "policy");
  CHECK(body(conflict)["decision"]["desired"] == "OFF");
}

TEST_CASE("policy edits") {
  Fixture f;
  CHECK(body(f.call("GET", "/api/policies"))["rules"].size() >= 1);
  CHECK(f.call("PUT", "/api/policies/x", "[1]").status == 400);
  CHECK(f.call("PUT", "/api/policies/x", R"({"id":"y","realm":"campus","scope":"*","action":"Defer"})").status == 400);
  CHECK(f.call("PUT", "/api/policies/x", R"({"realm":"campus","scope":"*","action":"Explode"})").status == 400);
  CHECK(f.call("PUT", "/api/policies/x", R"({"realm":"nowhere","scope":"*","action":"Defer"})").status == 400);
  // cross-realm scope
  CHECK(f.call("PUT", "/api/policies/x", R"({"realm":"campus","devices":["fridge1"],"action":"MandateOn"})").status ==
        400);
  const auto seq = f.ctl->log().last_seq();
  CHECK(f.call("PUT", "/api/policies/x", R"({"realm":"cse-dept","scope":"group:desktop","action":"MandateOn"})")
            .status == 200);
  CHECK(f.ctl->log().since(seq).front().kind == runtime::RecordKind::PolicyEdit);
  CHECK(f.ctl->snapshot()->devices.at("desktop").state == devicenet::SwitchState::On);
}

TEST_CASE("mode changes") {
  Fixture f;
  for (int i = 1; i <= 5; ++i) f.ctl->set_device("home-light-" + std::to_string(i), devicenet::SwitchState::On, "manual");
  CHECK(f.call("POST", "/api/users/alice/mode", R"({"mode":"spartan"})").status == 400);
  CHECK(f.call("POST", "/api/users/alice/mode", R"({})").status == 400);
  CHECK(f.call("POST", "/api/users/bob/mode", R"({"mode":"frugal"})").status == 404);
  CHECK(f.call("POST", "/api/users/alice/mode", R"({"mode":{"name":"custom","fractions":{"home":{"lighting":2}}}})")
            .status == 400);

  const auto r = body(f.call("POST", "/api/users/alice/mode", R"({"mode":"frugal"})"));
  CHECK(r["changed"] == true);
  std::set<std::string> off, on;
  for (const auto& c : r["commands"]) (c["state"] == "OFF" ? off : on).insert(c["device"].get<std::string>());
  CHECK(off == std::set<std::string>{"home-light-4", "home-light-5"});
  // still inside, so the participating laptop is mandated on
  CHECK(on == std::set<std::string>{"home-laptop"});

  const auto custom = f.call("POST", "/api/users/alice/mode",
                             R"({"mode":{"name":"custom","fractions":{"home":{"lighting":0.2,"laptop":1}}}})");
  CHECK(custom.status == 200);
  int lit = 0;
  for (int i = 1; i <= 5; ++i)
    lit += f.ctl->snapshot()->devices.at("home-light-" + std::to_string(i)).state == devicenet::SwitchState::On;
  CHECK(lit == 1);
}

TEST_CASE("events cursor") {
  Fixture f;
  const auto all = body(f.call("GET", "/api/events"));
  CHECK(all["events"].size() == 2);
  CHECK(all["next"] == 2);
  f.call("POST", "/api/devices/desktop/state", R"({"state":"ON"})");
  const auto page = body(f.call("GET", "/api/events", {}, {{"since", "2"}, {"limit", "1"}}));
  REQUIRE(page["events"].size() == 1);
  CHECK(page["events"][0]["seq"] == 3);
  CHECK(page["next"] == 3);
  const auto rest = body(f.call("GET", "/api/events", {}, {{"since", "3"}}));
  CHECK(rest["events"].size() + 3 == f.ctl->log().last_seq());
  const auto idle = body(f.call("GET", "/api/events", {}, {{"since", "999"}, {"wait_ms", "20"}}));
  CHECK(idle["events"].empty());
  CHECK(idle["next"] == 999);
  CHECK(f.call("GET", "/api/events", {}, {{"since", "-1"}}).status == 400);
  CHECK(f.call("GET", "/api/events", {}, {{"limit", "x"}}).status == 400);
}

TEST_CASE("energy report") {
  Fixture f;
  f.clock.set(kStart + std::chrono::hours{1});
  const auto r = body(f.call("GET", "/api/report/energy"));
  REQUIRE(r["sites"].size() == 2);
  CHECK(r["sites"][0]["site"] == "home");
  // fridge from the start of an on phase: 9 + 9 + 9 + 6 minutes at 185 W
  const double fridge_kwh = 185.0 * 33.0 / 60.0 / 1000.0;
  CHECK(r["sites"][0]["total_kwh"].get<double>() == doctest::Approx(fridge_kwh));
  CHECK(r["comparison"].back()["site"] == "combined");
  CHECK(f.call("GET", "/api/report/energy", {}, {{"from", "bad"}}).status == 400);
  CHECK(f.call("GET", "/api/report/energy", {},
               {{"from", "2011-10-03T10:00:00"}, {"to", "2011-10-03T09:00:00"}})
            .status == 400);
  const auto roll = body(f.call("GET", "/api/report/rollup"));
  CHECK(roll["realms"][0]["realm"] == "community");
  CHECK(roll["realms"][0]["subtree_kwh"].get<double>() == doctest::Approx(fridge_kwh));
}

TEST_CASE("http round trip") {
  Fixture f;
  api::ApiServer server(*f.ctl, "127.0.0.1", 0);
  REQUIRE(server.port() > 0);
  httplib::Client client("127.0.0.1", server.port());
  auto got = client.Get("/api/devices");
  REQUIRE(got);
  CHECK(got->status == 200);
  CHECK(Json::parse(got->body)["devices"].size() == 16);
  CHECK(got->get_header_value("Access-Control-Allow-Origin") == "*");

  auto posted = client.Post("/api/devices/desktop/state", R"({"state":"ON"})", "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 200);
  CHECK(f.ctl->snapshot()->devices.at("desktop").state == devicenet::SwitchState::On);

  auto events = client.Get("/api/events?since=2&limit=5");
  REQUIRE(events);
  CHECK(Json::parse(events->body)["events"][0]["kind"] == "DeviceCommand");

  auto put = client.Put("/api/policies/z", "{", "application/json");
  REQUIRE(put);
  CHECK(put->status == 400);
  server.stop();
}
