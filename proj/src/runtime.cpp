#include "smartenergy/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace smartenergy::runtime {

using policy::ConfigError;
using policy::ValidationError;

namespace {

Json opt_time(const std::optional<Timestamp>& t) { return t ? Json(format_iso8601(*t)) : Json(nullptr); }

Timestamp time_field(const Json& j, const char* key) {
  const auto t = parse_iso8601(j.at(key).get<std::string>());
  if (!t) throw ValidationError(std::string("bad timestamp in ") + key);
  return *t;
}

SwitchState state_field(const Json& j, const char* key) {
  const auto s = devicenet::switch_state_from_string(j.at(key).get<std::string>());
  if (!s) throw ValidationError(std::string("bad switch state in ") + key);
  return *s;
}

bool is_generated_rule(const std::string& rule_id) { return rule_id.rfind("mode/", 0) == 0; }

}  // namespace

Json to_json(const presence::PresenceState& s) {
  Json j;
  j["state"] = presence::to_string(s.state);
  j["candidate"] = s.candidate ? Json(presence::to_string(*s.candidate)) : Json(nullptr);
  j["streak"] = s.streak;
  j["last_fix"] = opt_time(s.last_fix_time);
  return j;
}

presence::PresenceState presence_state_from_json(const Json& j) {
  presence::PresenceState s;
  const auto occ = presence::occupancy_from_string(j.at("state").get<std::string>());
  if (!occ) throw ValidationError("bad presence state");
  s.state = *occ;
  if (!j.at("candidate").is_null()) s.candidate = presence::occupancy_from_string(j["candidate"].get<std::string>());
  s.streak = j.at("streak").get<int>();
  if (!j.at("last_fix").is_null()) s.last_fix_time = time_field(j, "last_fix");
  return s;
}

Json to_json(const policy::PolicyRule& r) {
  Json j;
  j["id"] = r.rule_id;
  j["realm"] = r.realm_id;
  j["scope"] = r.selector;
  j["devices"] = r.devices;
  if (r.condition) {
    j["when"] = {{"user", r.condition->user},
                 {"fence", r.condition->fence_id},
                 {"state", presence::to_string(r.condition->required)}};
  } else {
    j["when"] = nullptr;
  }
  j["action"] = policy::to_string(r.action);
  j["note"] = r.priority_note;
  j["generated"] = r.generated;
  return j;
}

policy::PolicyRule rule_from_json(const Json& j, const config::Config& cfg) {
  if (!j.is_object()) throw ValidationError("rule must be an object");
  auto text = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key) || j[key].is_null()) {
      if (required) throw ValidationError(std::string("rule needs '") + key + "'");
      return {};
    }
    if (!j[key].is_string()) throw ValidationError(std::string("rule field '") + key + "' must be a string");
    return j[key].get<std::string>();
  };
  policy::PolicyRule r;
  r.rule_id = text("id", true);
  r.realm_id = text("realm", true);
  r.selector = text("scope", false);
  r.priority_note = text("note", false);
  const auto action = policy::action_from_string(text("action", true));
  if (!action) throw ValidationError("rule action must be MandateOn, MandateOff or Defer");
  r.action = *action;
  if (j.contains("devices") && !j["devices"].is_null()) {
    if (!j["devices"].is_array()) throw ValidationError("rule devices must be a list");
    for (const auto& d : j["devices"]) {
      if (!d.is_string()) throw ValidationError("rule devices must be strings");
      r.devices.push_back(d.get<std::string>());
    }
  } else {
    if (r.selector.empty()) throw ValidationError("rule needs 'scope' or 'devices'");
    try {
      const policy::RealmTree tree(cfg.realms);
      r.devices = policy::expand_selector(r.selector, tree, cfg.devices);
    } catch (const ConfigError& e) {
      throw ValidationError(e.what());
    }
  }
  if (j.contains("when") && !j["when"].is_null()) {
    const auto& w = j["when"];
    if (!w.is_object() || !w.contains("user") || !w.contains("fence") || !w.contains("state") ||
        !w["user"].is_string() || !w["fence"].is_string() || !w["state"].is_string()) {
      throw ValidationError("rule condition needs user, fence and state");
    }
    const auto occ = presence::occupancy_from_string(w["state"].get<std::string>());
    if (!occ || *occ == presence::Occupancy::Unknown) throw ValidationError("condition state must be Inside or Outside");
    r.condition = policy::PresenceCondition{w["user"].get<std::string>(), w["fence"].get<std::string>(), *occ};
  }
  r.generated = j.contains("generated") && j["generated"].is_boolean() && j["generated"].get<bool>();
  std::sort(r.devices.begin(), r.devices.end());
  return r;
}

Json to_json(const policy::Decision& d) {
  Json j;
  j["device"] = d.device_id;
  j["desired"] = devicenet::to_string(d.desired);
  Json prov = Json::array();
  for (const auto& p : d.provenance) {
    prov.push_back({{"realm", p.realm_id}, {"rule", p.rule_id}, {"action", policy::to_string(p.action)}});
  }
  j["provenance"] = prov;
  return j;
}

Json to_json(const policy::UserMode& m) {
  Json j;
  j["name"] = m.name;
  Json fr = Json::object();
  for (const auto& [site, groups] : m.fractions) {
    for (const auto& [group, f] : groups) fr[site][group] = f;
  }
  j["fractions"] = fr;
  return j;
}

policy::UserMode user_mode_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("fractions") || !j["fractions"].is_object()) {
    throw ValidationError("mode needs a fractions object");
  }
  policy::UserMode m;
  m.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "custom";
  for (const auto& [site, groups] : j["fractions"].items()) {
    if (!groups.is_object()) throw ValidationError("fractions must map site -> group -> number");
    for (const auto& [group, f] : groups.items()) {
      if (!f.is_number()) throw ValidationError("fraction for " + site + "/" + group + " must be a number");
      m.fractions[site][group] = f.get<double>();
    }
  }
  m.validate();
  return m;
}

Json to_json(const energy::LedgerEntry& e) {
  return {{"device", e.device_id},
          {"site", e.site},
          {"t0", format_iso8601(e.t0)},
          {"t1", format_iso8601(e.t1)},
          {"state", devicenet::to_string(e.state)},
          {"anchor", format_iso8601(e.anchor)},
          {"wh", e.wh}};
}

energy::LedgerEntry ledger_entry_from_json(const Json& j) {
  energy::LedgerEntry e;
  e.device_id = j.at("device").get<std::string>();
  e.site = j.at("site").get<std::string>();
  e.t0 = time_field(j, "t0");
  e.t1 = time_field(j, "t1");
  e.state = state_field(j, "state");
  e.anchor = time_field(j, "anchor");
  e.wh = j.at("wh").get<double>();
  return e;
}

Json to_json(const RuntimeState& s) {
  Json j;
  j["last_seq"] = s.last_seq;
  Json devices = Json::object();
  for (const auto& [id, d] : s.devices) {
    devices[id] = {{"state", devicenet::to_string(d.state)}, {"since", format_iso8601(d.since)}};
  }
  j["devices"] = devices;
  Json pres = Json::array();
  for (const auto& [key, st] : s.presence) {
    auto e = to_json(st);
    e["user"] = key.first;
    e["fence"] = key.second;
    pres.push_back(e);
  }
  j["presence"] = pres;
  Json ledger = Json::array();
  for (const auto& e : s.ledger.entries()) ledger.push_back(to_json(e));
  j["ledger"] = ledger;
  Json modes = Json::object();
  for (const auto& [user, m] : s.modes) modes[user] = to_json(m);
  j["modes"] = modes;
  Json rules = Json::array();
  for (const auto& r : s.authored_rules) rules.push_back(to_json(r));
  j["rules"] = rules;
  return j;
}

RuntimeState runtime_state_from_json(const Json& j) {
  RuntimeState s;
  s.last_seq = j.at("last_seq").get<std::uint64_t>();
  for (const auto& [id, d] : j.at("devices").items()) s.devices[id] = {state_field(d, "state"), time_field(d, "since")};
  for (const auto& p : j.at("presence")) {
    s.presence[{p.at("user").get<std::string>(), p.at("fence").get<std::string>()}] = presence_state_from_json(p);
  }
  for (const auto& e : j.at("ledger")) s.ledger.append(ledger_entry_from_json(e));
  for (const auto& [user, m] : j.at("modes").items()) s.modes[user] = user_mode_from_json(m);
  const config::Config none;
  for (const auto& r : j.at("rules")) s.authored_rules.push_back(rule_from_json(r, none));
  return s;
}

Controller::Controller(config::Config cfg, Clock& clock, Timestamp start, ControllerOptions options)
    : cfg_(std::move(cfg)), clock_(clock), start_(start), op_clock_(start) {
  log_ = options.log_file ? std::make_unique<EventLog>(*options.log_file) : std::make_unique<EventLog>();
  const auto descs = descriptors();
  fleet_ = std::make_unique<devicenet::Fleet>(descs, op_clock_);
  if (options.use_socket) {
    server_ = std::make_unique<devicenet::FleetServer>(*fleet_, 0);
    channel_ = std::make_unique<devicenet::TcpChannel>("127.0.0.1", server_->port());
  } else {
    channel_ = std::make_unique<devicenet::InProcessChannel>(*fleet_);
  }
  engine_ = std::make_unique<policy::PolicyEngine>(policy::RealmTree(cfg_.realms), cfg_.fence_ids(), descs, cfg_.rules,
                                                   cfg_.users);
  for (const auto& u : cfg_.users) {
    for (const auto& f : cfg_.fences) presence_[{u.user_id, f.fence_id}] = presence::PresenceState{};
  }
  publish();
}

Controller::~Controller() {
  channel_.reset();
  if (server_) server_->stop();
}

std::vector<devicenet::DeviceDescriptor> Controller::descriptors() const {
  auto out = cfg_.devices;
  for (auto& d : out) d.state_since = start_;
  return out;
}

Timestamp Controller::begin_op() {
  const auto now = std::max(clock_.now(), op_clock_.now());
  op_clock_.set(now);
  return now;
}

EventRecord Controller::record(RecordKind kind, Json payload) {
  auto rec = log_->append(op_clock_.now(), kind, std::move(payload));
  if (observer_) observer_(rec, build_state());
  return rec;
}

void Controller::set_observer(Observer observer) {
  std::lock_guard lock(queue_);
  observer_ = std::move(observer);
}

RuntimeState Controller::build_state() const {
  RuntimeState s;
  s.last_seq = log_->last_seq();
  for (const auto& d : fleet_->devices()) s.devices[d.id()] = {d.state(), d.state_since()};
  s.presence = presence_;
  s.ledger = ledger_;
  for (const auto& u : engine_->users()) s.modes[u.user_id] = u.mode;
  s.authored_rules = engine_->authored_rules();
  return s;
}

void Controller::publish() {
  auto snap = std::make_shared<const RuntimeState>(build_state());
  std::lock_guard lock(snap_mu_);
  snapshot_ = std::move(snap);
}

std::shared_ptr<const RuntimeState> Controller::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snapshot_;
}

SwitchState Controller::current(const std::string& id) const { return fleet_->device(id).state(); }

policy::PresenceContext Controller::presence_context() const {
  std::lock_guard lock(queue_);
  policy::PresenceContext ctx;
  for (const auto& [key, st] : presence_) ctx.set(key.first, key.second, st.state);
  return ctx;
}

void Controller::meter(const std::string& id, Timestamp now) {
  const auto t0 = ledger_.metered_until(id).value_or(start_);
  if (!(now > t0)) return;
  const auto dev = fleet_->device(id);
  energy::LedgerEntry e{id, dev.descriptor().building, t0, now, dev.state(), dev.state_since(),
                        fleet_->meter_read(id, t0, now)};
  ledger_.append(e);
  record(RecordKind::LedgerAppend, to_json(e));
}

CommandOutcome Controller::command(const std::string& id, SwitchState s, const std::string& source, const Json& why) {
  const auto now = op_clock_.now();
  Json cmd{{"device", id}, {"state", devicenet::to_string(s)}, {"source", source}};
  if (!why.is_null()) cmd["decision"] = why;
  record(RecordKind::DeviceCommand, cmd);

  const auto dev = fleet_->device(id);
  const bool transition = !dev.descriptor().exempt && dev.state() != s;
  // The interval under the old state closes before the switch flips.
  if (transition) meter(id, now);

  CommandOutcome out;
  out.device_id = id;
  out.requested = s;
  out.reply = channel_->exchange("SET " + id + " " + devicenet::to_string(s));
  const auto parsed = devicenet::parse_reply(out.reply);
  out.ok = parsed && parsed->kind == devicenet::Reply::Kind::Ok;
  Json reply{{"device", id}, {"reply", out.reply}, {"applied", out.ok && transition}};
  if (out.ok) reply["state"] = devicenet::to_string(s);
  record(RecordKind::DeviceReply, reply);
  return out;
}

std::vector<CommandOutcome> Controller::execute(const policy::Evaluation& ev, const std::string& source) {
  for (const auto& d : ev.decisions) {
    auto j = to_json(d);
    j["source"] = source;
    record(RecordKind::Decision, j);
  }
  std::vector<CommandOutcome> out;
  for (const auto& c : ev.commands) out.push_back(command(c.device_id, c.state, source, to_json(c.decision)));
  return out;
}

LocationResult Controller::post_location(const std::string& user, const LocationInput& input) {
  std::lock_guard lock(queue_);
  const auto now = begin_op();
  LocationResult result;
  auto reject = [&](const std::string& reason, Json extra = Json::object()) {
    extra["user"] = user;
    extra["reason"] = reason;
    record(RecordKind::FixRejected, extra);
    result.accepted = false;
    result.reason = reason;
    publish();
    return result;
  };
  if (!engine_->user(user)) return reject("unknown user");

  geoloc::GeoFix fix;
  Timestamp at = input.at.value_or(now);
  if (input.nmea) {
    const auto parsed = geoloc::parse_nmea(*input.nmea);
    if (!parsed.ok()) {
      return reject(geoloc::to_string(parsed.status), {{"detail", parsed.detail}, {"nmea", *input.nmea}});
    }
    fix = *parsed.fix;
    if (fix.quality != geoloc::FixQuality::Fix) return reject("NoFix", {{"nmea", *input.nmea}});
    // GGA carries only the time of day; the arrival date completes it.
    auto stamped = Timestamp{day_of(at)} + fix.time_of_day;
    if (stamped > at + std::chrono::hours{12}) stamped -= std::chrono::hours{24};
    if (stamped < at - std::chrono::hours{12}) stamped += std::chrono::hours{24};
    at = stamped;
  } else if (input.position) {
    const auto p = *input.position;
    if (!std::isfinite(p.lat) || !std::isfinite(p.lon) || std::fabs(p.lat) > 90.0 || std::fabs(p.lon) > 180.0) {
      return reject("invalid position");
    }
    fix.latitude = p.lat;
    fix.longitude = p.lon;
    fix.quality = geoloc::FixQuality::Fix;
    fix.time_of_day = time_of_day(at);
    fix.source_sentence = "LATLON";
  } else {
    return reject("empty payload");
  }

  std::vector<std::pair<PresenceKey, presence::StepResult>> steps;
  for (const auto& f : cfg_.fences) {
    const PresenceKey key{user, f.fence_id};
    auto r = presence::step(presence_[key], f, user, fix, at);
    if (r.rejected) return reject("stale fix", {{"at", format_iso8601(at)}});
    steps.emplace_back(key, std::move(r));
  }
  Json fences = Json::array();
  for (auto& [key, r] : steps) {
    presence_[key] = r.state;
    distance_[key] = r.distance_m;
    fences.push_back({{"fence", key.second}, {"distance_m", r.distance_m}, {"presence", to_json(r.state)}});
    result.events.insert(result.events.end(), r.events.begin(), r.events.end());
  }
  record(RecordKind::FixAccepted, {{"user", user},
                                   {"at", format_iso8601(at)},
                                   {"lat", fix.latitude},
                                   {"lon", fix.longitude},
                                   {"source", fix.source_sentence},
                                   {"fences", fences}});
  result.accepted = true;

  for (const auto& ev : result.events) {
    record(RecordKind::Presence, {{"user", ev.user},
                                  {"fence", ev.fence_id},
                                  {"event", presence::to_string(ev.kind)},
                                  {"at", format_iso8601(ev.at)}});
    const auto evaluation =
        engine_->on_presence_event(ev, presence_context(), [this](const std::string& id) { return current(id); });
    auto outcomes = execute(evaluation, "presence");
    result.commands.insert(result.commands.end(), outcomes.begin(), outcomes.end());
  }
  publish();
  return result;
}

void Controller::seed_presence(const std::string& user, const std::string& fence, presence::Occupancy state) {
  std::lock_guard lock(queue_);
  begin_op();
  if (!engine_->user(user)) throw ConfigError("unknown user " + user);
  if (!cfg_.fence(fence)) throw ConfigError("unknown fence " + fence);
  presence::PresenceState st;
  st.state = state;
  presence_[{user, fence}] = st;
  record(RecordKind::Presence, {{"user", user}, {"fence", fence}, {"seed", true}, {"presence", to_json(st)}});
  publish();
}

SetResult Controller::set_device(const std::string& device_id, SwitchState state, const std::string& source) {
  std::lock_guard lock(queue_);
  begin_op();
  SetResult result;
  const auto* desc = engine_->device(device_id);
  if (!desc) {
    if (source == "manual") throw ConfigError("unknown device " + device_id);
    result.status = SetStatus::NotFound;
    result.reply = "ERR " + device_id + " UNKNOWN";
    return result;
  }
  if (!desc->exempt) {
    // Organizational mandates outrank manual control; a user's own mode
    // rules do not.
    const auto decision = engine_->decide(device_id, presence_context());
    if (decision && decision->desired != state) {
      const bool organizational = std::any_of(decision->provenance.begin(), decision->provenance.end(), [](const auto& p) {
        return p.action != policy::Action::Defer && !is_generated_rule(p.rule_id);
      });
      if (organizational) {
        record(RecordKind::DeviceCommand, {{"device", device_id},
                                           {"state", devicenet::to_string(state)},
                                           {"source", source},
                                           {"refused", "policy"},
                                           {"decision", to_json(*decision)}});
        result.status = SetStatus::PolicyConflict;
        result.conflict = decision;
        publish();
        return result;
      }
    }
  }
  const auto outcome = command(device_id, state, source, nullptr);
  result.reply = outcome.reply;
  result.status = outcome.ok ? SetStatus::Ok : SetStatus::Exempt;
  publish();
  return result;
}

EditResult Controller::set_user_mode(const std::string& user, const policy::UserMode& mode) {
  std::lock_guard lock(queue_);
  begin_op();
  const auto* u = engine_->user(user);
  if (!u) throw ConfigError("unknown user " + user);
  mode.validate();
  EditResult result;
  if (u->mode == mode) return result;
  const auto ev = engine_->set_user_mode(user, mode, presence_context(), [this](const std::string& id) { return current(id); });
  result.changed = true;
  record(RecordKind::PolicyEdit, {{"op", "mode"}, {"user", user}, {"mode", to_json(mode)}});
  result.commands = execute(ev, "mode");
  publish();
  return result;
}

EditResult Controller::upsert_rule(policy::PolicyRule rule) {
  std::lock_guard lock(queue_);
  begin_op();
  const auto ev = engine_->upsert_rule(rule, presence_context(), [this](const std::string& id) { return current(id); });
  EditResult result;
  result.changed = true;
  const auto& stored = *std::find_if(engine_->authored_rules().begin(), engine_->authored_rules().end(),
                                     [&](const auto& r) { return r.rule_id == rule.rule_id; });
  record(RecordKind::PolicyEdit, {{"op", "rule"}, {"rule", to_json(stored)}});
  result.commands = execute(ev, "policy");
  publish();
  return result;
}

void Controller::checkpoint() {
  std::lock_guard lock(queue_);
  const auto now = begin_op();
  for (const auto& d : fleet_->devices()) meter(d.id(), now);
  publish();
}

void Controller::apply(const EventRecord& rec) {
  std::lock_guard lock(queue_);
  op_clock_.set(std::max(op_clock_.now(), rec.ts));
  const auto& p = rec.payload;
  const auto lookup = [this](const std::string& id) { return current(id); };
  switch (rec.kind) {
    case RecordKind::FixAccepted: {
      const auto user = p.at("user").get<std::string>();
      for (const auto& f : p.at("fences")) {
        const PresenceKey key{user, f.at("fence").get<std::string>()};
        presence_[key] = presence_state_from_json(f.at("presence"));
        distance_[key] = f.at("distance_m").get<double>();
      }
      break;
    }
    case RecordKind::Presence:
      if (p.contains("seed")) {
        presence_[{p.at("user").get<std::string>(), p.at("fence").get<std::string>()}] =
            presence_state_from_json(p.at("presence"));
      }
      break;
    case RecordKind::DeviceReply:
      if (p.at("applied").get<bool>()) {
        fleet_->apply_transition(p.at("device").get<std::string>(), state_field(p, "state"), rec.ts);
      }
      break;
    case RecordKind::LedgerAppend:
      ledger_.append(ledger_entry_from_json(p));
      break;
    case RecordKind::PolicyEdit:
      if (p.at("op") == "mode") {
        engine_->set_user_mode(p.at("user").get<std::string>(), user_mode_from_json(p.at("mode")), presence_context(),
                               lookup);
      } else {
        engine_->upsert_rule(rule_from_json(p.at("rule"), cfg_), presence_context(), lookup);
      }
      break;
    case RecordKind::FixRejected:
    case RecordKind::Decision:
    case RecordKind::DeviceCommand:
      break;
  }
  log_->adopt(rec);
  if (observer_) observer_(rec, build_state());
  publish();
}

std::vector<devicenet::DeviceView> Controller::devices() const {
  std::lock_guard lock(queue_);
  return fleet_->list();
}

std::vector<policy::PolicyRule> Controller::rules() const {
  std::lock_guard lock(queue_);
  return engine_->rules();
}

const policy::UserProfile* Controller::user(const std::string& id) const {
  std::lock_guard lock(queue_);
  return engine_->user(id);
}

std::optional<policy::Decision> Controller::decide(const std::string& device_id) const {
  std::lock_guard lock(queue_);
  return engine_->decide(device_id, presence_context());
}

std::optional<double> Controller::distance_m(const std::string& user, const std::string& fence) const {
  std::lock_guard lock(queue_);
  const auto it = distance_.find({user, fence});
  if (it == distance_.end()) return std::nullopt;
  return it->second;
}

std::vector<energy::SiteTotal> Controller::site_totals(Timestamp t0, Timestamp t1) const {
  energy::EnergyLedger ledger;
  {
    // Intervals still open since the last transition are metered up to the
    // current instant without touching the stored ledger.
    std::lock_guard lock(queue_);
    ledger = ledger_;
    const auto now = std::max(clock_.now(), op_clock_.now());
    for (const auto& d : fleet_->devices()) {
      const auto from = ledger.metered_until(d.id()).value_or(start_);
      if (now > from) {
        ledger.append({d.id(), d.descriptor().building, from, now, d.state(), d.state_since(),
                       d.meter_read(from, now)});
      }
    }
  }
  std::vector<energy::SiteTotal> out;
  for (const auto& f : cfg_.fences) {
    const bool has_devices = std::any_of(cfg_.devices.begin(), cfg_.devices.end(),
                                         [&](const auto& d) { return d.building == f.fence_id; });
    if (has_devices) out.push_back(energy::ledger_total(ledger, cfg_.devices, f.fence_id, t0, t1));
  }
  return out;
}

std::vector<energy::ModeEstimate> Controller::estimates() const {
  std::vector<energy::ModeEstimate> out;
  for (const auto& f : cfg_.fences) {
    const bool has_devices = std::any_of(cfg_.devices.begin(), cfg_.devices.end(),
                                         [&](const auto& d) { return d.building == f.fence_id; });
    if (!has_devices) continue;
    for (const auto* mode : {"luxury", "moderate", "frugal"}) {
      out.push_back(energy::estimate_mode(f.fence_id, mode, cfg_.schedule, cfg_.devices, cfg_.modes));
    }
  }
  return out;
}

energy::ComparisonReport Controller::comparison(Timestamp t0, Timestamp t1) const {
  const auto totals = site_totals(t0, t1);
  const auto est = estimates();
  return energy::comparison_report(totals, est);
}

std::vector<energy::RealmTotal> Controller::rollup(Timestamp t0, Timestamp t1) const {
  std::map<std::string, double> kwh;
  std::map<std::string, std::string> realm;
  for (const auto& site : site_totals(t0, t1)) {
    for (const auto& d : site.devices) kwh[d.device_id] += d.kwh;
  }
  for (const auto& d : cfg_.devices) realm[d.device_id] = d.realm;
  return energy::realm_rollup(kwh, realm, policy::RealmTree(cfg_.realms));
}

RecoveryResult recover(const config::Config& cfg, Clock& clock, Timestamp start, const LogReadResult& log) {
  RecoveryResult out;
  out.controller = std::make_unique<Controller>(cfg, clock, start);
  out.corrupt_line = log.corrupt_line;
  out.error = log.error;
  for (const auto& rec : log.records) {
    try {
      out.controller->apply(rec);
    } catch (const std::exception& e) {
      out.error = "record " + std::to_string(rec.seq) + " cannot be applied: " + e.what();
      break;
    }
    ++out.applied;
  }
  return out;
}

std::string ledger_csv(const energy::EnergyLedger& ledger) {
  std::ostringstream os;
  os << "device,site,t0,t1,state,wh\n";
  for (const auto& e : ledger.entries()) {
    os << e.device_id << ',' << e.site << ',' << format_iso8601(e.t0) << ',' << format_iso8601(e.t1) << ','
       << devicenet::to_string(e.state) << ',' << energy::format_kwh(e.wh) << '\n';
  }
  return os.str();
}

namespace {

struct TimelineItem {
  Timestamp at{};
  int order = 0;  // mode changes, then fixes, then manual events
  std::size_t index = 0;
};

Json site_json(const energy::SiteTotal& s) {
  Json devices = Json::array();
  for (const auto& d : s.devices) devices.push_back({{"device", d.device_id}, {"group", d.group}, {"kwh", d.kwh}});
  Json groups = Json::object();
  for (const auto& [g, v] : s.groups) groups[g] = v;
  return {{"site", s.site}, {"devices", devices}, {"groups", groups}, {"total_kwh", s.total_kwh}};
}

Json ratio_json(const std::optional<double>& r) { return r ? Json(*r) : Json(nullptr); }

}  // namespace

ReplayBundle replay(const config::Config& cfg, const scenario::ScenarioScript& script, const ReplayOptions& options) {
  const double speedup = options.speedup.value_or(script.speedup);
  if (!(speedup > 0.0)) throw ValidationError("speedup must be positive");
  script.validate(cfg);

  SimulatedClock clock(script.start);
  Controller ctl(cfg, clock, script.start, {options.log_file, options.use_socket});
  if (options.observer) ctl.set_observer(options.observer);
  for (const auto& p : script.initial_presence) ctl.seed_presence(p.user, p.fence_id, p.state);

  std::vector<TimelineItem> timeline;
  for (std::size_t i = 0; i < script.mode_changes.size(); ++i) timeline.push_back({script.mode_changes[i].at, 0, i});
  for (std::size_t i = 0; i < script.fixes.size(); ++i) timeline.push_back({script.fixes[i].at, 1, i});
  for (std::size_t i = 0; i < script.manual_events.size(); ++i) timeline.push_back({script.manual_events[i].at, 2, i});
  std::stable_sort(timeline.begin(), timeline.end(), [](const TimelineItem& a, const TimelineItem& b) {
    return a.at != b.at ? a.at < b.at : a.order < b.order;
  });

  auto last = script.start;
  double owed_s = 0.0;
  auto advance = [&](Timestamp t) {
    if (options.pace) {
      owed_s += static_cast<double>((t - last).count()) / speedup;
      if (owed_s >= 0.001) {
        std::this_thread::sleep_for(std::chrono::duration<double>(owed_s));
        owed_s = 0.0;
      }
    }
    last = t;
    clock.set(t);
  };
  for (const auto& item : timeline) {
    advance(item.at);
    switch (item.order) {
      case 0: {
        const auto& m = script.mode_changes[item.index];
        ctl.set_user_mode(m.user, cfg.user_mode(m.mode));
        break;
      }
      case 1: {
        const auto& f = script.fixes[item.index];
        ctl.post_location(f.user, {f.nmea, f.position, f.at});
        break;
      }
      default: {
        const auto& e = script.manual_events[item.index];
        ctl.set_device(e.device_id, e.state, "manual");
        break;
      }
    }
  }
  advance(script.end);
  ctl.checkpoint();

  ReplayBundle bundle;
  const auto totals = ctl.site_totals(script.start, script.end);
  const auto estimates = ctl.estimates();
  const auto comparison = energy::comparison_report(totals, estimates);
  const auto rollup = ctl.rollup(script.start, script.end);
  bundle.final_state = *ctl.snapshot();
  bundle.events = ctl.log().all();
  bundle.comparison_csv = energy::comparison_csv(comparison);
  bundle.ledger_csv = ledger_csv(bundle.final_state.ledger);
  bundle.estimates_csv = energy::estimate_csv(estimates);
  bundle.rollup_csv = energy::rollup_csv(rollup);

  Json& r = bundle.report;
  r["scenario"] = script.name;
  r["start"] = format_iso8601(script.start);
  r["end"] = format_iso8601(script.end);
  r["events"] = bundle.events.size();
  Json sites = Json::array();
  for (const auto& s : totals) sites.push_back(site_json(s));
  r["sites"] = sites;
  Json est = Json::array();
  for (const auto& e : estimates) est.push_back({{"site", e.site}, {"mode", e.mode}, {"total_kwh", e.total_kwh}});
  r["estimates"] = est;
  Json cmp = Json::array();
  for (const auto& row : comparison.rows) {
    cmp.push_back({{"site", row.site},
                   {"actual_kwh", row.actual_kwh},
                   {"luxury_kwh", row.luxury_kwh},
                   {"moderate_kwh", row.moderate_kwh},
                   {"frugal_kwh", row.frugal_kwh},
                   {"ratio_luxury", ratio_json(row.ratio_luxury)},
                   {"ratio_moderate", ratio_json(row.ratio_moderate)},
                   {"ratio_frugal", ratio_json(row.ratio_frugal)}});
  }
  r["comparison"] = cmp;
  Json roll = Json::array();
  for (const auto& t : rollup) {
    roll.push_back({{"realm", t.realm_id}, {"depth", t.depth}, {"own_kwh", t.own_kwh}, {"subtree_kwh", t.subtree_kwh}});
  }
  r["rollup"] = roll;
  return bundle;
}

void write_bundle(const ReplayBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  put("report.json", bundle.report.dump(2) + "\n");
  put("comparison.csv", bundle.comparison_csv);
  put("ledger.csv", bundle.ledger_csv);
  put("estimates.csv", bundle.estimates_csv);
  put("rollup.csv", bundle.rollup_csv);
  put("snapshot.json", to_json(bundle.final_state).dump(2) + "\n");
  std::string events;
  for (const auto& e : bundle.events) events += serialize(e) + "\n";
  put("events.jsonl", events);
}

}  // namespace smartenergy::runtime
