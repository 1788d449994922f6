#include "smartenergy/api.hpp"

#include <algorithm>
#include <charconv>
#include <vector>

#include "httplib.h"

namespace smartenergy::api {

using runtime::Json;

namespace {

Response reply(int status, const Json& body) { return {status, body.dump()}; }

Response error(int status, const std::string& code, const std::string& detail = {}) {
  Json j{{"error", code}};
  if (!detail.empty()) j["detail"] = detail;
  return reply(status, j);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const auto end = path.find('/', pos);
    const auto part = path.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    if (!part.empty()) out.push_back(part);
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

Json commands_json(const std::vector<runtime::CommandOutcome>& cmds) {
  Json out = Json::array();
  for (const auto& c : cmds) {
    out.push_back({{"device", c.device_id}, {"state", devicenet::to_string(c.requested)}, {"reply", c.reply}, {"ok", c.ok}});
  }
  return out;
}

std::optional<Timestamp> query_time(const Request& r, const char* key) {
  const auto it = r.query.find(key);
  if (it == r.query.end()) return std::nullopt;
  return parse_iso8601(it->second);
}

std::optional<std::uint64_t> query_uint(const Request& r, const char* key) {
  const auto it = r.query.find(key);
  if (it == r.query.end()) return std::nullopt;
  std::uint64_t v = 0;
  const auto& s = it->second;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

Json parse_body(const Request& r) { return Json::parse(r.body, nullptr, false); }

Response location(runtime::Controller& c, const Request& r) {
  const auto body = parse_body(r);
  if (body.is_discarded() || !body.is_object() || !body.contains("user") || !body["user"].is_string()) {
    return error(400, "bad_request", "body needs a user and either nmea or lat/lon");
  }
  runtime::LocationInput in;
  if (body.contains("nmea")) {
    if (!body["nmea"].is_string()) return error(400, "bad_request", "nmea must be a string");
    in.nmea = body["nmea"].get<std::string>();
  } else if (body.contains("lat") && body.contains("lon") && body["lat"].is_number() && body["lon"].is_number()) {
    in.position = geoloc::LatLon{body["lat"].get<double>(), body["lon"].get<double>()};
  } else {
    return error(400, "bad_request", "body needs nmea or numeric lat/lon");
  }
  if (body.contains("ts")) {
    if (!body["ts"].is_string()) return error(400, "bad_request", "ts must be an ISO timestamp");
    in.at = parse_iso8601(body["ts"].get<std::string>());
    if (!in.at) return error(400, "bad_request", "ts must be an ISO timestamp");
  }
  const auto user = body["user"].get<std::string>();
  const auto result = c.post_location(user, in);
  Json events = Json::array();
  for (const auto& e : result.events) {
    events.push_back({{"user", e.user}, {"fence", e.fence_id}, {"event", presence::to_string(e.kind)},
                      {"at", format_iso8601(e.at)}});
  }
  Json out{{"accepted", result.accepted}, {"events", events}, {"commands", commands_json(result.commands)}};
  if (!result.accepted) {
    out["reason"] = result.reason;
    return reply(result.reason == "unknown user" ? 404 : 422, out);
  }
  return reply(200, out);
}

Response presence_of(runtime::Controller& c, const std::string& user) {
  if (!c.user(user)) return error(404, "unknown_user", user);
  const auto snap = c.snapshot();
  Json fences = Json::array();
  for (const auto& [key, st] : snap->presence) {
    if (key.first != user) continue;
    auto j = runtime::to_json(st);
    j["fence"] = key.second;
    const auto d = c.distance_m(user, key.second);
    j["distance_m"] = d ? Json(*d) : Json(nullptr);
    fences.push_back(j);
  }
  return reply(200, {{"user", user}, {"mode", snap->modes.at(user).name}, {"fences", fences}});
}

Response device_list(runtime::Controller& c) {
  Json out = Json::array();
  for (const auto& v : c.devices()) {
    const auto& cfg = c.config();
    const auto d = std::find_if(cfg.devices.begin(), cfg.devices.end(),
                                [&](const auto& x) { return x.device_id == v.device_id; });
    out.push_back({{"id", v.device_id},
                   {"name", d->name},
                   {"building", d->building},
                   {"group", d->group},
                   {"realm", d->realm},
                   {"state", devicenet::to_string(v.state)},
                   {"since", format_iso8601(v.state_since)},
                   {"exempt", v.exempt},
                   {"watts", v.watts}});
  }
  return reply(200, {{"devices", out}});
}

Response device_state(runtime::Controller& c, const std::string& id, const Request& r) {
  const auto body = parse_body(r);
  if (body.is_discarded() || !body.is_object() || !body.contains("state") || !body["state"].is_string()) {
    return error(400, "bad_request", "body needs state ON or OFF");
  }
  const auto state = devicenet::switch_state_from_string(body["state"].get<std::string>());
  if (!state) return error(400, "bad_request", "state must be ON or OFF");
  const auto result = c.set_device(id, *state, "api");
  switch (result.status) {
    case runtime::SetStatus::NotFound:
      return error(404, "unknown_device", id);
    case runtime::SetStatus::Exempt:
      return reply(409, {{"error", "exempt"}, {"device", id}, {"reply", result.reply}});
    case runtime::SetStatus::PolicyConflict:
      return reply(409, {{"error", "policy"}, {"device", id}, {"decision", runtime::to_json(*result.conflict)}});
    case runtime::SetStatus::Ok:
      break;
  }
  const auto views = c.devices();
  const auto v = std::find_if(views.begin(), views.end(), [&](const auto& x) { return x.device_id == id; });
  return reply(200, {{"device", id},
                     {"state", devicenet::to_string(v->state)},
                     {"since", format_iso8601(v->state_since)},
                     {"reply", result.reply}});
}

Response policies(runtime::Controller& c) {
  Json out = Json::array();
  for (const auto& r : c.rules()) out.push_back(runtime::to_json(r));
  return reply(200, {{"rules", out}});
}

Response put_policy(runtime::Controller& c, const std::string& id, const Request& r) {
  auto body = parse_body(r);
  if (body.is_discarded() || !body.is_object()) return error(400, "bad_request", "body must be a rule object");
  if (body.contains("id") && body["id"] != id) return error(400, "bad_request", "rule id differs from path");
  body["id"] = id;
  body.erase("generated");
  try {
    auto rule = runtime::rule_from_json(body, c.config());
    const auto result = c.upsert_rule(std::move(rule));
    const auto rules = c.rules();
    const auto stored = std::find_if(rules.begin(), rules.end(), [&](const auto& x) { return x.rule_id == id; });
    return reply(200, {{"rule", runtime::to_json(*stored)}, {"commands", commands_json(result.commands)}});
  } catch (const policy::ValidationError& e) {
    return error(400, "validation", e.what());
  }
}

Response user_mode(runtime::Controller& c, const std::string& user, const Request& r) {
  if (!c.user(user)) return error(404, "unknown_user", user);
  const auto body = parse_body(r);
  if (body.is_discarded() || !body.is_object() || !body.contains("mode")) {
    return error(400, "bad_request", "body needs a mode name or fraction table");
  }
  try {
    policy::UserMode mode;
    if (body["mode"].is_string()) {
      try {
        mode = c.config().user_mode(body["mode"].get<std::string>());
      } catch (const policy::ConfigError& e) {
        return error(400, "unknown_mode", e.what());
      }
    } else {
      mode = runtime::user_mode_from_json(body["mode"]);
    }
    const auto result = c.set_user_mode(user, mode);
    return reply(200, {{"user", user}, {"mode", mode.name}, {"changed", result.changed},
                       {"commands", commands_json(result.commands)}});
  } catch (const policy::ValidationError& e) {
    return error(400, "validation", e.what());
  }
}

Response energy_report(runtime::Controller& c, const Request& r) {
  const auto from = query_time(r, "from").value_or(c.start());
  const auto to = query_time(r, "to").value_or(c.clock().now());
  if ((r.query.count("from") && !query_time(r, "from")) || (r.query.count("to") && !query_time(r, "to"))) {
    return error(400, "bad_request", "from/to must be ISO timestamps");
  }
  if (to < from) return error(400, "bad_request", "to precedes from");
  Json sites = Json::array();
  const auto totals = c.site_totals(from, to);
  for (const auto& s : totals) {
    Json devices = Json::array();
    for (const auto& d : s.devices) devices.push_back({{"device", d.device_id}, {"group", d.group}, {"kwh", d.kwh}});
    sites.push_back({{"site", s.site}, {"devices", devices}, {"total_kwh", s.total_kwh}});
  }
  Json cmp = Json::array();
  for (const auto& row : energy::comparison_report(totals, c.estimates()).rows) {
    auto ratio = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    cmp.push_back({{"site", row.site},
                   {"actual_kwh", row.actual_kwh},
                   {"luxury_kwh", row.luxury_kwh},
                   {"moderate_kwh", row.moderate_kwh},
                   {"frugal_kwh", row.frugal_kwh},
                   {"ratio_luxury", ratio(row.ratio_luxury)},
                   {"ratio_moderate", ratio(row.ratio_moderate)},
                   {"ratio_frugal", ratio(row.ratio_frugal)}});
  }
  return reply(200, {{"from", format_iso8601(from)}, {"to", format_iso8601(to)}, {"sites", sites}, {"comparison", cmp}});
}

Response rollup_report(runtime::Controller& c, const Request& r) {
  const auto from = query_time(r, "from").value_or(c.start());
  const auto to = query_time(r, "to").value_or(c.clock().now());
  if (to < from) return error(400, "bad_request", "to precedes from");
  Json out = Json::array();
  for (const auto& t : c.rollup(from, to)) {
    out.push_back({{"realm", t.realm_id}, {"depth", t.depth}, {"own_kwh", t.own_kwh}, {"subtree_kwh", t.subtree_kwh}});
  }
  return reply(200, {{"from", format_iso8601(from)}, {"to", format_iso8601(to)}, {"realms", out}});
}

Response events(runtime::Controller& c, const Request& r) {
  if ((r.query.count("since") && !query_uint(r, "since")) || (r.query.count("wait_ms") && !query_uint(r, "wait_ms")) ||
      (r.query.count("limit") && !query_uint(r, "limit"))) {
    return error(400, "bad_request", "since, wait_ms and limit must be non-negative integers");
  }
  const auto since = query_uint(r, "since").value_or(0);
  const auto wait = std::min<std::uint64_t>(query_uint(r, "wait_ms").value_or(0), 30000);
  const auto limit = static_cast<std::size_t>(query_uint(r, "limit").value_or(1000));
  const auto records = wait ? c.log().wait_since(since, std::chrono::milliseconds{wait}, limit)
                            : c.log().since(since, limit);
  Json out = Json::array();
  for (const auto& e : records) {
    out.push_back({{"seq", e.seq}, {"ts", format_iso8601(e.ts)}, {"kind", runtime::to_string(e.kind)},
                   {"payload", e.payload}});
  }
  const auto last = records.empty() ? since : records.back().seq;
  return reply(200, {{"events", out}, {"next", last}});
}

}  // namespace

Response api_dispatch(runtime::Controller& c, const Request& r) {
  if (const auto& token = c.config().api_token) {
    const auto it = r.headers.find("x-api-token");
    const auto auth = r.headers.find("authorization");
    const bool ok = (it != r.headers.end() && it->second == *token) ||
                    (auth != r.headers.end() && auth->second == "Bearer " + *token);
    if (!ok) return error(401, "unauthorized");
  }
  const auto p = split_path(r.path);
  if (p.size() < 2 || p[0] != "api") return error(404, "not_found", r.path);
  const auto& m = r.method;
  auto route = [&](std::initializer_list<const char*> parts) {
    if (p.size() != parts.size() + 1) return false;
    std::size_t i = 1;
    for (const char* part : parts) {
      if (std::string_view(part) != "*" && p[i] != part) return false;
      ++i;
    }
    return true;
  };
  auto method_is = [&](const char* want) { return m == want; };
  try {
    if (route({"location"})) return method_is("POST") ? location(c, r) : error(405, "method_not_allowed");
    if (route({"presence", "*"})) return method_is("GET") ? presence_of(c, p[2]) : error(405, "method_not_allowed");
    if (route({"devices"})) return method_is("GET") ? device_list(c) : error(405, "method_not_allowed");
    if (route({"devices", "*", "state"})) {
      return method_is("POST") ? device_state(c, p[2], r) : error(405, "method_not_allowed");
    }
    if (route({"policies"})) return method_is("GET") ? policies(c) : error(405, "method_not_allowed");
    if (route({"policies", "*"})) return method_is("PUT") ? put_policy(c, p[2], r) : error(405, "method_not_allowed");
    if (route({"users", "*", "mode"})) {
      return method_is("POST") ? user_mode(c, p[2], r) : error(405, "method_not_allowed");
    }
    if (route({"report", "energy"})) return method_is("GET") ? energy_report(c, r) : error(405, "method_not_allowed");
    if (route({"report", "rollup"})) return method_is("GET") ? rollup_report(c, r) : error(405, "method_not_allowed");
    if (route({"events"})) return method_is("GET") ? events(c, r) : error(405, "method_not_allowed");
  } catch (const policy::ConfigError& e) {
    return error(400, "config", e.what());
  } catch (const std::invalid_argument& e) {
    return error(400, "bad_request", e.what());
  }
  return error(404, "not_found", r.path);
}

struct ApiServer::Impl {
  httplib::Server server;
};

ApiServer::ApiServer(runtime::Controller& controller, const std::string& host, int port) : impl_(std::make_unique<Impl>()) {
  auto handler = [&controller](const httplib::Request& hr, httplib::Response& hres) {
    Request r;
    r.method = hr.method;
    r.path = hr.path;
    r.body = hr.body;
    for (const auto& [k, v] : hr.params) r.query[k] = v;
    for (const auto& [k, v] : hr.headers) {
      std::string key = k;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      r.headers[key] = v;
    }
    const auto res = api_dispatch(controller, r);
    hres.status = res.status;
    hres.set_content(res.body, "application/json");
    hres.set_header("Access-Control-Allow-Origin", "*");
  };
  impl_->server.Get(R"(/.*)", handler);
  impl_->server.Post(R"(/.*)", handler);
  impl_->server.Put(R"(/.*)", handler);
  impl_->server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& hres) {
    hres.set_header("Access-Control-Allow-Origin", "*");
    hres.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    hres.set_header("Access-Control-Allow-Headers", "Content-Type, X-Api-Token, Authorization");
    hres.status = 204;
  });
  port_ = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw std::runtime_error("cannot bind API server on " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace smartenergy::api
