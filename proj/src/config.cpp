#include "smartenergy/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace smartenergy::config {

using policy::ConfigError;

namespace {

std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  if (m.is_null()) return "";
  return " (line " + std::to_string(m.line + 1) + ")";
}

YAML::Node need(const YAML::Node& n, const char* key, const std::string& ctx) {
  const auto v = n[key];
  if (!v) throw ConfigError(ctx + ": missing '" + key + "'" + where(n));
  return v;
}

template <typename T>
T as(const YAML::Node& n, const std::string& ctx) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(ctx + ": bad value" + where(n));
  }
}

template <typename T>
T get(const YAML::Node& n, const char* key, const std::string& ctx) {
  return as<T>(need(n, key, ctx), ctx + "." + key);
}

template <typename T>
T get_or(const YAML::Node& n, const char* key, T fallback, const std::string& ctx) {
  const auto v = n[key];
  if (!v || v.IsNull()) return fallback;
  return as<T>(v, ctx + "." + key);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

devicenet::PowerProfile parse_profile(const YAML::Node& n, const std::string& ctx) {
  const auto type = lower(get<std::string>(n, "type", ctx));
  devicenet::PowerProfile p;
  if (type == "constant") {
    p = devicenet::ConstantPower{get<double>(n, "watts", ctx)};
  } else if (type == "two_level") {
    p = devicenet::TwoLevelPower{get<double>(n, "normal_watts", ctx), get<double>(n, "active_watts", ctx),
                                 get_or<double>(n, "active_fraction", 0.5, ctx)};
  } else if (type == "duty_cycle") {
    p = devicenet::DutyCyclePower{get<double>(n, "on_watts", ctx), get<double>(n, "on_minutes", ctx),
                                  get<double>(n, "off_minutes", ctx)};
  } else {
    throw ConfigError(ctx + ": unknown profile type '" + type + "'");
  }
  try {
    devicenet::validate(p);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return p;
}

std::string scope_text(const YAML::Node& n, const std::string& ctx) {
  if (n.IsSequence()) {
    std::string out;
    for (const auto& item : n) out += (out.empty() ? "" : ",") + as<std::string>(item, ctx);
    return out;
  }
  return as<std::string>(n, ctx);
}

}  // namespace

const presence::GeoFence* Config::fence(std::string_view id) const {
  const auto it = std::find_if(fences.begin(), fences.end(), [&](const auto& f) { return f.fence_id == id; });
  return it == fences.end() ? nullptr : &*it;
}

std::vector<std::string> Config::fence_ids() const {
  std::vector<std::string> out;
  for (const auto& f : fences) out.push_back(f.fence_id);
  return out;
}

std::vector<std::string> Config::mode_names() const {
  std::vector<std::string> out;
  for (const auto& [name, sites] : modes) out.push_back(name);
  return out;
}

policy::UserMode Config::user_mode(const std::string& name) const {
  const auto it = modes.find(name);
  if (it == modes.end()) throw ConfigError("unknown mode " + name);
  policy::UserMode m;
  m.name = name;
  for (const auto& [site, groups] : it->second) {
    for (const auto& [group, row] : groups) m.fractions[site][group] = row.fraction;
  }
  return m;
}

Config parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping");

  Config cfg;
  cfg.name = get_or<std::string>(root, "name", "", "config");
  cfg.jitter_m = get_or<double>(root, "jitter_m", presence::kDefaultJitterM, "config");
  if (const auto t = root["api_token"]; t && !t.IsNull()) cfg.api_token = as<std::string>(t, "api_token");

  if (const auto s = root["schedule"]) {
    cfg.schedule.hours_office = get_or<double>(s, "office", 8.0, "schedule");
    cfg.schedule.hours_home_awake = get_or<double>(s, "home_awake", 8.0, "schedule");
    cfg.schedule.hours_sleep = get_or<double>(s, "sleep", 8.0, "schedule");
  }
  try {
    cfg.schedule.validate();
  } catch (const policy::ValidationError& e) {
    throw ConfigError(e.what());
  }

  std::set<std::string> fence_ids;
  for (const auto& f : need(root, "fences", "config")) {
    presence::GeoFence fence;
    fence.fence_id = get<std::string>(f, "id", "fence");
    const auto ctx = "fence " + fence.fence_id;
    fence.center = {get<double>(f, "lat", ctx), get<double>(f, "lon", ctx)};
    fence.enter_radius_m = get_or<double>(f, "enter_radius_m", 300.0, ctx);
    fence.exit_radius_m = get_or<double>(f, "exit_radius_m", 400.0, ctx);
    fence.min_dwell_fixes = get_or<int>(f, "min_dwell_fixes", 3, ctx);
    try {
      fence.validate(cfg.jitter_m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(ctx + ": " + e.what());
    }
    if (!fence_ids.insert(fence.fence_id).second) throw ConfigError("duplicate fence " + fence.fence_id);
    cfg.fences.push_back(fence);
  }

  for (const auto& r : need(root, "realms", "config")) {
    policy::Realm realm;
    realm.realm_id = get<std::string>(r, "id", "realm");
    realm.name = get_or<std::string>(r, "name", realm.realm_id, "realm " + realm.realm_id);
    if (const auto p = r["parent"]; p && !p.IsNull()) realm.parent = as<std::string>(p, "realm parent");
    cfg.realms.push_back(realm);
  }
  const policy::RealmTree tree(cfg.realms);
  cfg.realms = tree.realms();

  std::set<std::string> device_ids;
  for (const auto& d : need(root, "devices", "config")) {
    devicenet::DeviceDescriptor desc;
    desc.device_id = get<std::string>(d, "id", "device");
    const auto ctx = "device " + desc.device_id;
    desc.name = get_or<std::string>(d, "name", desc.device_id, ctx);
    desc.building = get<std::string>(d, "building", ctx);
    desc.group = get<std::string>(d, "group", ctx);
    desc.realm = get<std::string>(d, "realm", ctx);
    desc.exempt = get_or<bool>(d, "exempt", false, ctx);
    const auto state = devicenet::switch_state_from_string(get_or<std::string>(d, "state", "OFF", ctx));
    if (!state) throw ConfigError(ctx + ": state must be on or off");
    desc.state = *state;
    desc.profile = parse_profile(need(d, "profile", ctx), ctx);
    if (!fence_ids.count(desc.building)) throw ConfigError(ctx + ": unknown building " + desc.building);
    if (!tree.contains(desc.realm)) throw ConfigError(ctx + ": unknown realm " + desc.realm);
    if (desc.device_id.find_first_of(" \t\r\n") != std::string::npos) {
      throw ConfigError(ctx + ": ids must not contain whitespace");
    }
    if (!device_ids.insert(desc.device_id).second) throw ConfigError("duplicate device " + desc.device_id);
    cfg.devices.push_back(desc);
  }

  if (const auto modes = root["modes"]) {
    for (const auto& m : modes) {
      const auto name = as<std::string>(m.first, "mode name");
      for (const auto& site : m.second) {
        const auto site_id = as<std::string>(site.first, "mode site");
        if (!fence_ids.count(site_id)) throw ConfigError("mode " + name + ": unknown site " + site_id);
        for (const auto& g : site.second) {
          const auto group = as<std::string>(g.first, "mode group");
          const auto ctx = "mode " + name + "/" + site_id + "/" + group;
          energy::ModeRow row;
          const auto basis = energy::hours_basis_from_string(get<std::string>(g.second, "hours", ctx));
          if (!basis) throw ConfigError(ctx + ": unknown hours basis");
          row.basis = *basis;
          row.fixed_hours = get_or<double>(g.second, "fixed_hours", 0.0, ctx);
          row.fraction = get_or<double>(g.second, "fraction", 1.0, ctx);
          if (row.fraction < 0.0 || row.fraction > 1.0) throw ConfigError(ctx + ": fraction outside [0, 1]");
          if (row.basis == energy::HoursBasis::Fixed && (row.fixed_hours < 0.0 || row.fixed_hours > 24.0)) {
            throw ConfigError(ctx + ": fixed_hours outside [0, 24]");
          }
          cfg.modes[name][site_id][group] = row;
        }
      }
    }
  }

  for (const auto& u : need(root, "users", "config")) {
    policy::UserProfile user;
    user.user_id = get<std::string>(u, "id", "user");
    const auto ctx = "user " + user.user_id;
    for (const auto& b : need(u, "bindings", ctx)) {
      policy::UserBinding binding;
      binding.fence_id = get<std::string>(b, "fence", ctx);
      binding.realm_id = get<std::string>(b, "realm", ctx);
      binding.devices = policy::expand_selector(scope_text(need(b, "devices", ctx), ctx), tree, cfg.devices);
      user.bindings.push_back(binding);
    }
    user.mode = cfg.user_mode(get<std::string>(u, "mode", ctx));
    cfg.users.push_back(user);
  }

  if (const auto rules = root["rules"]) {
    for (const auto& r : rules) {
      policy::PolicyRule rule;
      rule.rule_id = get<std::string>(r, "id", "rule");
      const auto ctx = "rule " + rule.rule_id;
      rule.realm_id = get<std::string>(r, "realm", ctx);
      rule.selector = scope_text(need(r, "scope", ctx), ctx);
      rule.devices = policy::expand_selector(rule.selector, tree, cfg.devices);
      const auto action = policy::action_from_string(get<std::string>(r, "action", ctx));
      if (!action) throw ConfigError(ctx + ": unknown action");
      rule.action = *action;
      rule.priority_note = get_or<std::string>(r, "note", "", ctx);
      if (const auto w = r["when"]; w && !w.IsNull()) {
        policy::PresenceCondition c;
        c.user = get<std::string>(w, "user", ctx);
        c.fence_id = get<std::string>(w, "fence", ctx);
        const auto occ = presence::occupancy_from_string(get<std::string>(w, "state", ctx));
        if (!occ || *occ == presence::Occupancy::Unknown) throw ConfigError(ctx + ": state must be inside or outside");
        c.required = *occ;
        rule.condition = c;
      }
      cfg.rules.push_back(rule);
    }
  }

  // Full semantic validation happens in the engine constructor.
  policy::PolicyEngine(tree, cfg.fence_ids(), cfg.devices, cfg.rules, cfg.users);
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace smartenergy::config
