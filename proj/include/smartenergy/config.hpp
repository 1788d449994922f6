#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smartenergy/devicenet.hpp"
#include "smartenergy/energy.hpp"
#include "smartenergy/policy.hpp"
#include "smartenergy/presence.hpp"

namespace smartenergy::config {

// Deployment description shared by the policy engine, the fleet and the
// estimators.
struct Config {
  std::string name;
  double jitter_m = presence::kDefaultJitterM;
  std::vector<presence::GeoFence> fences;
  std::vector<policy::Realm> realms;
  std::vector<devicenet::DeviceDescriptor> devices;
  std::vector<policy::PolicyRule> rules;  // authored, selectors expanded
  energy::ModeTable modes;                // mode -> site -> group -> row
  energy::UsageSchedule schedule;
  std::vector<policy::UserProfile> users;
  std::optional<std::string> api_token;

  const presence::GeoFence* fence(std::string_view id) const;
  std::vector<std::string> fence_ids() const;
  std::vector<std::string> mode_names() const;

  // Participation fractions of a named mode, read from the mode table.
  // Throws ConfigError for unknown names.
  policy::UserMode user_mode(const std::string& name) const;
};

// Parses and validates a YAML document. Throws policy::ConfigError with the
// offending key on any structural or semantic problem.
Config parse_config(const std::string& yaml_text);
Config load_config(const std::filesystem::path& path);

}  // namespace smartenergy::config
