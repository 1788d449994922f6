#include "smartenergy/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace smartenergy::scenario {

using policy::ConfigError;
using policy::ValidationError;

namespace {

std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.is_null() ? std::string() : " (line " + std::to_string(m.line + 1) + ")";
}

std::string str(const YAML::Node& n, const char* key, const std::string& ctx) {
  const auto v = n[key];
  if (!v || v.IsNull()) throw ConfigError(ctx + ": missing '" + key + "'" + where(n));
  try {
    return v.as<std::string>();
  } catch (const YAML::Exception&) {
    throw ConfigError(ctx + ": bad '" + key + "'" + where(v));
  }
}

double num(const YAML::Node& n, const std::string& ctx) {
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(ctx + ": expected a number" + where(n));
  }
}

// Full ISO timestamps, or "HH:MM[:SS]" on the script's start day ("24:00"
// is the following midnight).
Timestamp parse_time(const std::string& text, std::optional<Timestamp> day_base, const std::string& ctx) {
  if (const auto t = parse_iso8601(text)) return *t;
  int h = 0, m = 0, s = 0;
  char tail = 0;
  const int n = std::sscanf(text.c_str(), "%d:%d:%d%c", &h, &m, &s, &tail);
  if (day_base && (n == 2 || n == 3) && h >= 0 && h <= 24 && m >= 0 && m < 60 && s >= 0 && s < 60 &&
      (h < 24 || (m == 0 && s == 0))) {
    return Timestamp{day_of(*day_base)} + std::chrono::hours{h} + std::chrono::minutes{m} + Seconds{s};
  }
  throw ConfigError(ctx + ": bad time '" + text + "'");
}

geoloc::LatLon point(const YAML::Node& n, const config::Config& cfg, const std::string& ctx) {
  if (n.IsSequence() && n.size() == 2) return {num(n[0], ctx), num(n[1], ctx)};
  if (n.IsScalar()) {
    const auto id = n.as<std::string>();
    const auto* f = cfg.fence(id);
    if (!f) throw ConfigError(ctx + ": unknown fence " + id);
    return f->center;
  }
  throw ConfigError(ctx + ": a point is a fence id or [lat, lon]" + where(n));
}

}  // namespace

void ScenarioScript::validate(const config::Config& cfg) const {
  if (!(speedup > 0.0)) throw ValidationError("speedup must be positive");
  if (end < start) throw ValidationError("scenario end precedes its start");
  auto known_user = [&](const std::string& u) {
    return std::any_of(cfg.users.begin(), cfg.users.end(), [&](const auto& p) { return p.user_id == u; });
  };
  auto in_window = [&](Timestamp t, const std::string& what) {
    if (t < start || t > end) throw ValidationError(what + " at " + format_iso8601(t) + " lies outside the script window");
  };
  for (const auto& p : initial_presence) {
    if (!known_user(p.user)) throw ConfigError("initial presence names unknown user " + p.user);
    if (!cfg.fence(p.fence_id)) throw ConfigError("initial presence names unknown fence " + p.fence_id);
  }
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    if (i && fixes[i].at < fixes[i - 1].at) throw ValidationError("fix timestamps must be non-decreasing");
    if (!known_user(fixes[i].user)) throw ConfigError("fix names unknown user " + fixes[i].user);
    in_window(fixes[i].at, "fix");
  }
  for (std::size_t i = 0; i < manual_events.size(); ++i) {
    const auto& e = manual_events[i];
    if (i && e.at < manual_events[i - 1].at) throw ValidationError("manual event timestamps must be non-decreasing");
    const bool known = std::any_of(cfg.devices.begin(), cfg.devices.end(),
                                   [&](const auto& d) { return d.device_id == e.device_id; });
    if (!known) throw ConfigError("manual event names unknown device " + e.device_id);
    in_window(e.at, "manual event");
  }
  for (std::size_t i = 0; i < mode_changes.size(); ++i) {
    const auto& m = mode_changes[i];
    if (i && m.at < mode_changes[i - 1].at) throw ValidationError("mode change timestamps must be non-decreasing");
    if (!known_user(m.user)) throw ConfigError("mode change names unknown user " + m.user);
    if (!cfg.modes.count(m.mode)) throw ConfigError("mode change names unknown mode " + m.mode);
    in_window(m.at, "mode change");
  }
}

ScenarioScript parse_scenario(const std::string& yaml_text, const std::filesystem::path& base_dir,
                              const config::Config* cfg) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("scenario is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("scenario must be a mapping");

  ScenarioScript s;
  s.name = root["name"] ? root["name"].as<std::string>() : std::string("scenario");
  if (const auto sp = root["speedup"]) s.speedup = num(sp, "speedup");
  s.start = parse_time(str(root, "start", "scenario"), std::nullopt, "start");
  s.end = parse_time(str(root, "end", "scenario"), s.start, "end");
  if (const auto c = root["config"]) {
    const std::filesystem::path p = c.as<std::string>();
    s.config_path = (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
  }
  std::optional<config::Config> loaded;
  if (!cfg) {
    if (s.config_path.empty()) throw ConfigError("scenario names no config");
    loaded = config::load_config(s.config_path);
    cfg = &*loaded;
  }

  for (const auto& p : root["initial_presence"]) {
    InitialPresence ip;
    ip.user = str(p, "user", "initial_presence");
    ip.fence_id = str(p, "fence", "initial_presence");
    const auto occ = presence::occupancy_from_string(str(p, "state", "initial_presence"));
    if (!occ) throw ConfigError("initial_presence: state must be inside, outside or unknown");
    ip.state = *occ;
    s.initial_presence.push_back(ip);
  }

  std::vector<FixInput> fixes;
  for (const auto& f : root["fixes"]) {
    FixInput fi;
    fi.at = parse_time(str(f, "at", "fix"), s.start, "fix");
    fi.user = str(f, "user", "fix");
    if (f["nmea"]) {
      fi.nmea = str(f, "nmea", "fix");
    } else {
      fi.position = geoloc::LatLon{num(f["lat"], "fix lat"), num(f["lon"], "fix lon")};
    }
    fixes.push_back(fi);
  }
  for (const auto& t : root["tracks"]) {
    const auto user = str(t, "user", "track");
    const auto from = parse_time(str(t, "from", "track"), s.start, "track");
    const auto to = parse_time(str(t, "to", "track"), s.start, "track");
    const auto interval = t["interval_s"] ? static_cast<long long>(num(t["interval_s"], "track interval_s")) : 60LL;
    if (interval <= 0) throw ConfigError("track interval_s must be positive");
    const auto format = t["format"] ? t["format"].as<std::string>() : std::string("latlon");
    if (format != "latlon" && format != "nmea") throw ConfigError("track format must be latlon or nmea");
    std::vector<geoloc::LatLon> way;
    if (t["at"]) {
      way.push_back(point(t["at"], *cfg, "track"));
    } else {
      for (const auto& w : t["path"]) way.push_back(point(w, *cfg, "track path"));
    }
    if (way.empty()) throw ConfigError("track needs 'at' or a non-empty 'path'");
    if (to < from) throw ConfigError("track ends before it starts");
    const double span = static_cast<double>((to - from).count());
    for (auto at = from; at < to; at += Seconds{interval}) {
      geoloc::LatLon pos = way.front();
      if (way.size() > 1 && span > 0.0) {
        // Piecewise-linear in lat/lon with equal time per leg.
        const double u = static_cast<double>((at - from).count()) / span * static_cast<double>(way.size() - 1);
        const auto leg = std::min(static_cast<std::size_t>(u), way.size() - 2);
        const double w = u - static_cast<double>(leg);
        pos = {way[leg].lat + w * (way[leg + 1].lat - way[leg].lat),
               way[leg].lon + w * (way[leg + 1].lon - way[leg].lon)};
      }
      FixInput fi;
      fi.at = at;
      fi.user = user;
      if (format == "nmea") {
        fi.nmea = geoloc::make_gga(time_of_day(at), pos);
      } else {
        fi.position = pos;
      }
      fixes.push_back(fi);
    }
  }
  std::stable_sort(fixes.begin(), fixes.end(), [](const FixInput& a, const FixInput& b) { return a.at < b.at; });
  s.fixes = std::move(fixes);

  for (const auto& e : root["manual_events"]) {
    ManualEvent me;
    me.at = parse_time(str(e, "at", "manual event"), s.start, "manual event");
    me.device_id = str(e, "device", "manual event");
    const auto st = devicenet::switch_state_from_string(str(e, "state", "manual event"));
    if (!st) throw ConfigError("manual event state must be on or off");
    me.state = *st;
    s.manual_events.push_back(me);
  }
  for (const auto& m : root["mode_changes"]) {
    ModeChange mc;
    mc.at = parse_time(str(m, "at", "mode change"), s.start, "mode change");
    mc.user = str(m, "user", "mode change");
    mc.mode = str(m, "mode", "mode change");
    s.mode_changes.push_back(mc);
  }
  s.validate(*cfg);
  return s;
}

ScenarioScript load_scenario(const std::filesystem::path& path, const config::Config* cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path(), cfg);
}

}  // namespace smartenergy::scenario
