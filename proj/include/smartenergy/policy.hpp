#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smartenergy/devicenet.hpp"
#include "smartenergy/presence.hpp"

// Realm hierarchy, policy rules and their resolution into device decisions.
namespace smartenergy::policy {

using devicenet::SwitchState;
using presence::Occupancy;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Realm {
  std::string realm_id;
  std::optional<std::string> parent;
  std::string name;
  int depth = 0;
};

class RealmTree {
 public:
  RealmTree() = default;
  // Parents may appear in any order. Throws ConfigError unless the realms
  // form one tree with a single root.
  explicit RealmTree(std::vector<Realm> realms);

  bool contains(std::string_view id) const;
  const Realm& get(std::string_view id) const;
  const std::string& root() const { return root_; }
  const std::vector<Realm>& realms() const { return realms_; }  // root first, then by depth

  // Root-to-`id` path, inclusive.
  std::vector<std::string> chain(std::string_view id) const;
  bool is_ancestor_or_self(std::string_view ancestor, std::string_view id) const;

 private:
  std::vector<Realm> realms_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::string root_;
};

enum class Action { MandateOn, MandateOff, Defer };

const char* to_string(Action a);
std::optional<Action> action_from_string(std::string_view s);

struct PresenceCondition {
  std::string user;
  std::string fence_id;
  Occupancy required = Occupancy::Inside;
  bool operator==(const PresenceCondition&) const = default;
};

// nullopt means the rule always applies.
using Condition = std::optional<PresenceCondition>;

struct PolicyRule {
  std::string rule_id;
  std::string realm_id;
  std::string selector;              // scope as written: ids, "*", building:/group:/realm:
  std::vector<std::string> devices;  // scope after selector expansion, sorted
  Condition condition;
  Action action = Action::Defer;
  std::string priority_note;
  bool generated = false;  // derived from a user mode, not authored

  bool operator==(const PolicyRule&) const = default;
};

class PresenceContext {
 public:
  void set(const std::string& user, const std::string& fence, Occupancy o) { states_[{user, fence}] = o; }
  Occupancy get(const std::string& user, const std::string& fence) const;
  bool holds(const Condition& c) const;

 private:
  std::map<std::pair<std::string, std::string>, Occupancy> states_;
};

struct ProvenanceEntry {
  std::string realm_id;
  std::string rule_id;
  Action action = Action::Defer;
  bool operator==(const ProvenanceEntry&) const = default;
};

struct Decision {
  std::string device_id;
  SwitchState desired = SwitchState::Off;
  // Defers passed on the way down, then the deciding realm's winning rules.
  std::vector<ProvenanceEntry> provenance;
  bool operator==(const Decision&) const = default;
};

// Resolves the applicable rules for one device. `rules` must all sit on one
// root-to-leaf realm chain. Shallower mandates win; inside one realm
// MandateOff beats MandateOn; Defer passes control deeper. nullopt = NoOp.
std::optional<Decision> resolve(const RealmTree& realms, std::span<const PolicyRule> rules,
                                std::string_view device_id, const PresenceContext& context);

// Participation fractions per site (fence id) and device group.
struct UserMode {
  std::string name;  // luxury | moderate | frugal | custom
  std::map<std::string, std::map<std::string, double>> fractions;

  void validate() const;  // throws ValidationError for fractions outside [0, 1]
  bool operator==(const UserMode&) const = default;
};

struct UserBinding {
  std::string fence_id;
  std::string realm_id;  // the user's realm inside this building
  std::vector<std::string> devices;
};

struct UserProfile {
  std::string user_id;
  std::vector<UserBinding> bindings;
  UserMode mode;
};

struct Command {
  std::string device_id;
  SwitchState state = SwitchState::Off;
  Decision decision;
};

struct Evaluation {
  std::vector<Decision> decisions;
  std::vector<Command> commands;
  bool unknown_user = false;
};

using StateLookup = std::function<SwitchState(const std::string& device_id)>;

// Expands a scope selector against the fleet: "*", "building:<fence>",
// "group:<name>", "realm:<id>" (whole subtree) or a comma/space separated
// device id list. Throws ConfigError for unknown ids.
std::vector<std::string> expand_selector(std::string_view selector, const RealmTree& realms,
                                         std::span<const devicenet::DeviceDescriptor> devices);

class PolicyEngine {
 public:
  PolicyEngine(RealmTree realms, std::vector<std::string> fence_ids,
               std::vector<devicenet::DeviceDescriptor> devices, std::vector<PolicyRule> authored,
               std::vector<UserProfile> users);

  const RealmTree& realms() const { return realms_; }
  // Authored rules followed by the rules generated from user modes.
  std::vector<PolicyRule> rules() const;
  const std::vector<PolicyRule>& authored_rules() const { return authored_; }
  const std::vector<PolicyRule>& generated_rules() const { return generated_; }
  const UserProfile* user(std::string_view id) const;
  const std::vector<UserProfile>& users() const { return users_; }
  const devicenet::DeviceDescriptor* device(std::string_view id) const;

  // Rules scoped to the device and owned by its realm or an ancestor.
  std::vector<PolicyRule> rules_for(std::string_view device_id) const;
  std::optional<Decision> decide(std::string_view device_id, const PresenceContext& context) const;

  Evaluation on_presence_event(const presence::PresenceEvent& event, const PresenceContext& context,
                               const StateLookup& current) const;

  // Replaces the user's mode and regenerates the user-realm rules, then
  // re-evaluates every device bound to the user. Same mode: no change.
  Evaluation set_user_mode(const std::string& user, const UserMode& mode, const PresenceContext& context,
                           const StateLookup& current);

  // Adds or replaces an authored rule after validation, then re-evaluates
  // the devices in its scope.
  Evaluation upsert_rule(PolicyRule rule, const PresenceContext& context, const StateLookup& current);

  Evaluation reevaluate(std::span<const std::string> device_ids, const PresenceContext& context,
                        const StateLookup& current) const;

 private:
  void validate_rule(const PolicyRule& rule) const;
  std::vector<PolicyRule> generate_mode_rules(const UserProfile& user) const;
  void regenerate(const std::string& user_id);

  RealmTree realms_;
  std::vector<std::string> fence_ids_;
  std::map<std::string, devicenet::DeviceDescriptor, std::less<>> devices_;
  std::vector<PolicyRule> authored_;
  std::vector<PolicyRule> generated_;
  std::vector<UserProfile> users_;
};

}  // namespace smartenergy::policy
