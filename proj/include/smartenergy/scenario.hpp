#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smartenergy/config.hpp"
#include "smartenergy/geoloc.hpp"
#include "smartenergy/timeutil.hpp"

namespace smartenergy::scenario {

// One location report. Either `nmea` or `position` is set.
struct FixInput {
  Timestamp at{};
  std::string user;
  std::optional<std::string> nmea;
  std::optional<geoloc::LatLon> position;
};

struct ManualEvent {
  Timestamp at{};
  std::string device_id;
  devicenet::SwitchState state = devicenet::SwitchState::Off;
};

struct ModeChange {
  Timestamp at{};
  std::string user;
  std::string mode;  // a mode named in the configuration
};

// Occupancy known before the first fix (e.g. the user starts the day asleep at home).
struct InitialPresence {
  std::string user;
  std::string fence_id;
  presence::Occupancy state = presence::Occupancy::Unknown;
};

struct ScenarioScript {
  std::string name;
  double speedup = 1.0;
  Timestamp start{};
  Timestamp end{};
  std::string config_path;  // resolved relative to the script
  std::vector<InitialPresence> initial_presence;
  std::vector<FixInput> fixes;
  std::vector<ManualEvent> manual_events;
  std::vector<ModeChange> mode_changes;

  // Throws ValidationError for ordering or window problems and ConfigError
  // for references to users, devices, fences or modes the config lacks.
  void validate(const config::Config& cfg) const;
};

// `fence_lookup` resolves track endpoints named by fence id; the config is
// loaded from the script's `config` key when not supplied.
ScenarioScript parse_scenario(const std::string& yaml_text, const std::filesystem::path& base_dir,
                              const config::Config* cfg = nullptr);
ScenarioScript load_scenario(const std::filesystem::path& path, const config::Config* cfg = nullptr);

}  // namespace smartenergy::scenario
