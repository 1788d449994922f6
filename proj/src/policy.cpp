#include "smartenergy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace smartenergy::policy {

RealmTree::RealmTree(std::vector<Realm> realms) {
  std::map<std::string, Realm> by_id;
  for (auto& r : realms) {
    if (r.realm_id.empty()) throw ConfigError("realm id must not be empty");
    if (!by_id.emplace(r.realm_id, r).second) throw ConfigError("duplicate realm " + r.realm_id);
  }
  std::vector<std::string> roots;
  for (const auto& [id, r] : by_id) {
    if (!r.parent) {
      roots.push_back(id);
    } else if (!by_id.count(*r.parent)) {
      throw ConfigError("realm " + id + " has unknown parent " + *r.parent);
    }
  }
  if (roots.size() != 1) throw ConfigError("realms must have exactly one root");
  root_ = roots.front();

  // Breadth-first from the root assigns depths; anything unreached sits on a cycle.
  std::vector<std::string> frontier{root_};
  int depth = 0;
  while (!frontier.empty()) {
    std::vector<std::string> next;
    for (const auto& id : frontier) {
      auto r = by_id.at(id);
      r.depth = depth;
      index_[id] = realms_.size();
      realms_.push_back(r);
      for (const auto& [cid, c] : by_id) {
        if (c.parent && *c.parent == id) next.push_back(cid);
      }
    }
    frontier = std::move(next);
    ++depth;
  }
  if (realms_.size() != by_id.size()) throw ConfigError("realm hierarchy contains a cycle");
}

bool RealmTree::contains(std::string_view id) const { return index_.find(id) != index_.end(); }

const Realm& RealmTree::get(std::string_view id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown realm " + std::string(id));
  return realms_[it->second];
}

std::vector<std::string> RealmTree::chain(std::string_view id) const {
  std::vector<std::string> out;
  const Realm* r = &get(id);
  while (true) {
    out.push_back(r->realm_id);
    if (!r->parent) break;
    r = &get(*r->parent);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

bool RealmTree::is_ancestor_or_self(std::string_view ancestor, std::string_view id) const {
  const Realm* r = &get(id);
  while (true) {
    if (r->realm_id == ancestor) return true;
    if (!r->parent) return false;
    r = &get(*r->parent);
  }
}

const char* to_string(Action a) {
  switch (a) {
    case Action::MandateOn: return "MandateOn";
    case Action::MandateOff: return "MandateOff";
    case Action::Defer: return "Defer";
  }
  return "?";
}

std::optional<Action> action_from_string(std::string_view s) {
  if (s == "MandateOn" || s == "mandate_on" || s == "on") return Action::MandateOn;
  if (s == "MandateOff" || s == "mandate_off" || s == "off") return Action::MandateOff;
  if (s == "Defer" || s == "defer") return Action::Defer;
  return std::nullopt;
}

Occupancy PresenceContext::get(const std::string& user, const std::string& fence) const {
  const auto it = states_.find({user, fence});
  return it == states_.end() ? Occupancy::Unknown : it->second;
}

bool PresenceContext::holds(const Condition& c) const {
  if (!c) return true;
  return get(c->user, c->fence_id) == c->required;
}

std::optional<Decision> resolve(const RealmTree& realms, std::span<const PolicyRule> rules,
                                std::string_view device_id, const PresenceContext& context) {
  std::map<int, std::vector<const PolicyRule*>> by_depth;
  for (const auto& r : rules) {
    if (!std::binary_search(r.devices.begin(), r.devices.end(), device_id) || !context.holds(r.condition)) {
      continue;
    }
    by_depth[realms.get(r.realm_id).depth].push_back(&r);
  }

  Decision d;
  d.device_id = std::string(device_id);
  for (const auto& [depth, applicable] : by_depth) {
    const bool any_off = std::any_of(applicable.begin(), applicable.end(),
                                     [](const PolicyRule* r) { return r->action == Action::MandateOff; });
    const bool any_on = std::any_of(applicable.begin(), applicable.end(),
                                    [](const PolicyRule* r) { return r->action == Action::MandateOn; });
    if (any_off || any_on) {
      const auto winner = any_off ? Action::MandateOff : Action::MandateOn;
      for (const auto* r : applicable) {
        if (r->action == winner) d.provenance.push_back({r->realm_id, r->rule_id, r->action});
      }
      d.desired = any_off ? SwitchState::Off : SwitchState::On;
      return d;
    }
    for (const auto* r : applicable) d.provenance.push_back({r->realm_id, r->rule_id, r->action});
  }
  return std::nullopt;
}

void UserMode::validate() const {
  for (const auto& [site, groups] : fractions) {
    for (const auto& [group, f] : groups) {
      if (!(f >= 0.0 && f <= 1.0)) {
        throw ValidationError("mode " + name + ": fraction for " + site + "/" + group + " must be in [0, 1]");
      }
    }
  }
}

std::vector<std::string> expand_selector(std::string_view selector, const RealmTree& realms,
                                         std::span<const devicenet::DeviceDescriptor> devices) {
  std::set<std::string> out;
  auto starts = [&](std::string_view prefix) { return selector.substr(0, prefix.size()) == prefix; };
  if (selector == "*") {
    for (const auto& d : devices) out.insert(d.device_id);
  } else if (starts("building:")) {
    const auto b = selector.substr(9);
    for (const auto& d : devices) {
      if (d.building == b) out.insert(d.device_id);
    }
  } else if (starts("group:")) {
    const auto g = selector.substr(6);
    for (const auto& d : devices) {
      if (d.group == g) out.insert(d.device_id);
    }
  } else if (starts("realm:")) {
    const auto r = selector.substr(6);
    if (!realms.contains(r)) throw ConfigError("selector names unknown realm " + std::string(r));
    for (const auto& d : devices) {
      if (realms.contains(d.realm) && realms.is_ancestor_or_self(r, d.realm)) out.insert(d.device_id);
    }
  } else {
    std::size_t pos = 0;
    while (pos < selector.size()) {
      const auto end = selector.find_first_of(", ", pos);
      const auto tok = selector.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
      if (!tok.empty()) {
        const bool known = std::any_of(devices.begin(), devices.end(),
                                       [&](const devicenet::DeviceDescriptor& d) { return d.device_id == tok; });
        if (!known) throw ConfigError("scope names unknown device " + std::string(tok));
        out.insert(std::string(tok));
      }
      if (end == std::string_view::npos) break;
      pos = end + 1;
    }
  }
  return {out.begin(), out.end()};
}

PolicyEngine::PolicyEngine(RealmTree realms, std::vector<std::string> fence_ids,
                           std::vector<devicenet::DeviceDescriptor> devices, std::vector<PolicyRule> authored,
                           std::vector<UserProfile> users)
    : realms_(std::move(realms)), fence_ids_(std::move(fence_ids)), users_(std::move(users)) {
  for (auto& d : devices) {
    if (!realms_.contains(d.realm)) throw ConfigError("device " + d.device_id + " placed in unknown realm");
    auto id = d.device_id;
    devices_.emplace(std::move(id), std::move(d));
  }
  std::set<std::string> user_ids;
  for (const auto& u : users_) {
    if (!user_ids.insert(u.user_id).second) throw ConfigError("duplicate user " + u.user_id);
    u.mode.validate();
    for (const auto& b : u.bindings) {
      if (std::find(fence_ids_.begin(), fence_ids_.end(), b.fence_id) == fence_ids_.end()) {
        throw ConfigError("user " + u.user_id + " bound to unknown fence " + b.fence_id);
      }
      if (!realms_.contains(b.realm_id)) throw ConfigError("user " + u.user_id + " bound to unknown realm");
      for (const auto& dev : b.devices) {
        const auto* d = device(dev);
        if (!d) throw ConfigError("user " + u.user_id + " bound to unknown device " + dev);
        if (!realms_.is_ancestor_or_self(b.realm_id, d->realm)) {
          throw ConfigError("device " + dev + " lies outside realm " + b.realm_id + " of user " + u.user_id);
        }
      }
    }
  }
  std::set<std::string> rule_ids;
  for (auto& r : authored) {
    std::sort(r.devices.begin(), r.devices.end());
    validate_rule(r);
    if (!rule_ids.insert(r.rule_id).second) throw ConfigError("duplicate rule " + r.rule_id);
  }
  authored_ = std::move(authored);
  for (const auto& u : users_) {
    auto g = generate_mode_rules(u);
    generated_.insert(generated_.end(), g.begin(), g.end());
  }
}

const UserProfile* PolicyEngine::user(std::string_view id) const {
  const auto it = std::find_if(users_.begin(), users_.end(), [&](const UserProfile& u) { return u.user_id == id; });
  return it == users_.end() ? nullptr : &*it;
}

const devicenet::DeviceDescriptor* PolicyEngine::device(std::string_view id) const {
  const auto it = devices_.find(id);
  return it == devices_.end() ? nullptr : &it->second;
}

void PolicyEngine::validate_rule(const PolicyRule& r) const {
  if (r.rule_id.empty()) throw ConfigError("rule id must not be empty");
  if (!realms_.contains(r.realm_id)) throw ConfigError("rule " + r.rule_id + " owned by unknown realm");
  if (r.devices.empty()) throw ConfigError("rule " + r.rule_id + " has an empty scope");
  for (const auto& id : r.devices) {
    const auto* d = device(id);
    if (!d) throw ConfigError("rule " + r.rule_id + " scopes unknown device " + id);
    if (!realms_.is_ancestor_or_self(r.realm_id, d->realm)) {
      throw ConfigError("rule " + r.rule_id + " spans realm " + d->realm +
                        " outside its own subtree (cross-realm rules are unsupported)");
    }
  }
  if (r.condition) {
    if (std::find(fence_ids_.begin(), fence_ids_.end(), r.condition->fence_id) == fence_ids_.end()) {
      throw ConfigError("rule " + r.rule_id + " references unknown fence " + r.condition->fence_id);
    }
    if (!user(r.condition->user)) throw ConfigError("rule " + r.rule_id + " references unknown user");
    if (r.condition->required == Occupancy::Unknown) {
      throw ConfigError("rule " + r.rule_id + " must test Inside or Outside");
    }
  }
}

std::vector<PolicyRule> PolicyEngine::generate_mode_rules(const UserProfile& u) const {
  std::vector<PolicyRule> out;
  for (const auto& b : u.bindings) {
    const auto site = u.mode.fractions.find(b.fence_id);
    if (site == u.mode.fractions.end()) continue;
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& id : b.devices) groups[device(id)->group].push_back(id);
    for (auto& [group, ids] : groups) {
      const auto f = site->second.find(group);
      if (f == site->second.end()) continue;
      std::sort(ids.begin(), ids.end());
      // The first ceil(fraction * n) circuits of a group participate.
      const auto n = ids.size();
      const auto k = std::min(n, static_cast<std::size_t>(std::ceil(f->second * static_cast<double>(n) - 1e-9)));
      const std::vector<std::string> active(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
      const std::vector<std::string> idle(ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end());
      const auto base = "mode/" + u.user_id + "/" + b.fence_id + "/" + group;
      const auto note = u.mode.name + " mode";
      if (!active.empty()) {
        out.push_back({base + "/in", b.realm_id, "", active,
                       PresenceCondition{u.user_id, b.fence_id, Occupancy::Inside}, Action::MandateOn, note, true});
        out.push_back({base + "/out", b.realm_id, "", active,
                       PresenceCondition{u.user_id, b.fence_id, Occupancy::Outside}, Action::MandateOff, note,
                       true});
      }
      if (!idle.empty()) {
        out.push_back({base + "/idle", b.realm_id, "", idle, std::nullopt, Action::MandateOff, note, true});
      }
    }
  }
  return out;
}

void PolicyEngine::regenerate(const std::string& user_id) {
  const auto prefix = "mode/" + user_id + "/";
  std::erase_if(generated_, [&](const PolicyRule& r) { return r.rule_id.rfind(prefix, 0) == 0; });
  auto fresh = generate_mode_rules(*user(user_id));
  generated_.insert(generated_.end(), fresh.begin(), fresh.end());
}

std::vector<PolicyRule> PolicyEngine::rules() const {
  auto out = authored_;
  out.insert(out.end(), generated_.begin(), generated_.end());
  return out;
}

std::vector<PolicyRule> PolicyEngine::rules_for(std::string_view device_id) const {
  std::vector<PolicyRule> out;
  const auto* d = device(device_id);
  if (!d) return out;
  auto take = [&](const PolicyRule& r) {
    if (std::binary_search(r.devices.begin(), r.devices.end(), device_id) &&
        realms_.is_ancestor_or_self(r.realm_id, d->realm)) {
      out.push_back(r);
    }
  };
  for (const auto& r : authored_) take(r);
  for (const auto& r : generated_) take(r);
  return out;
}

std::optional<Decision> PolicyEngine::decide(std::string_view device_id, const PresenceContext& context) const {
  const auto rules = rules_for(device_id);
  return resolve(realms_, rules, device_id, context);
}

Evaluation PolicyEngine::reevaluate(std::span<const std::string> device_ids, const PresenceContext& context,
                                    const StateLookup& current) const {
  Evaluation ev;
  std::set<std::string> seen;
  for (const auto& id : device_ids) {
    if (!seen.insert(id).second) continue;
    const auto* d = device(id);
    if (!d) continue;
    auto decision = decide(id, context);
    if (!decision) continue;
    ev.decisions.push_back(*decision);
    if (d->exempt || decision->desired == current(id)) continue;
    ev.commands.push_back({id, decision->desired, *decision});
  }
  return ev;
}

Evaluation PolicyEngine::on_presence_event(const presence::PresenceEvent& event, const PresenceContext& context,
                                           const StateLookup& current) const {
  const auto* u = user(event.user);
  if (!u) {
    Evaluation ev;
    ev.unknown_user = true;
    return ev;
  }
  std::vector<std::string> affected;
  for (const auto& b : u->bindings) {
    if (b.fence_id == event.fence_id) affected.insert(affected.end(), b.devices.begin(), b.devices.end());
  }
  std::sort(affected.begin(), affected.end());
  return reevaluate(affected, context, current);
}

Evaluation PolicyEngine::set_user_mode(const std::string& user_id, const UserMode& mode,
                                       const PresenceContext& context, const StateLookup& current) {
  mode.validate();
  auto it = std::find_if(users_.begin(), users_.end(), [&](const UserProfile& u) { return u.user_id == user_id; });
  if (it == users_.end()) {
    Evaluation ev;
    ev.unknown_user = true;
    return ev;
  }
  if (it->mode == mode) return {};
  it->mode = mode;
  regenerate(user_id);
  std::vector<std::string> affected;
  for (const auto& b : it->bindings) affected.insert(affected.end(), b.devices.begin(), b.devices.end());
  std::sort(affected.begin(), affected.end());
  return reevaluate(affected, context, current);
}

Evaluation PolicyEngine::upsert_rule(PolicyRule rule, const PresenceContext& context, const StateLookup& current) {
  std::sort(rule.devices.begin(), rule.devices.end());
  rule.generated = false;
  if (rule.rule_id.rfind("mode/", 0) == 0) throw ValidationError("rule ids under mode/ are reserved");
  try {
    validate_rule(rule);
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  const auto it = std::find_if(authored_.begin(), authored_.end(),
                               [&](const PolicyRule& r) { return r.rule_id == rule.rule_id; });
  std::vector<std::string> affected = rule.devices;
  if (it != authored_.end()) {
    affected.insert(affected.end(), it->devices.begin(), it->devices.end());
    *it = std::move(rule);
  } else {
    authored_.push_back(std::move(rule));
  }
  std::sort(affected.begin(), affected.end());
  return reevaluate(affected, context, current);
}

}  // namespace smartenergy::policy
