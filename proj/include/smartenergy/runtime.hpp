#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smartenergy/config.hpp"
#include "smartenergy/devicenet.hpp"
#include "smartenergy/energy.hpp"
#include "smartenergy/eventlog.hpp"
#include "smartenergy/fleet_server.hpp"
#include "smartenergy/policy.hpp"
#include "smartenergy/presence.hpp"
#include "smartenergy/scenario.hpp"

// Composition of the ingest -> presence -> policy -> device -> ledger
// pipeline, its event log, recovery and scenario replay.
namespace smartenergy::runtime {

using devicenet::SwitchState;

struct DeviceStatus {
  SwitchState state = SwitchState::Off;
  Timestamp since{};
  bool operator==(const DeviceStatus&) const = default;
};

using PresenceKey = std::pair<std::string, std::string>;  // (user, fence)

// Everything recovery must reproduce.
struct RuntimeState {
  std::uint64_t last_seq = 0;
  std::map<std::string, DeviceStatus> devices;
  std::map<PresenceKey, presence::PresenceState> presence;
  energy::EnergyLedger ledger;
  std::map<std::string, policy::UserMode> modes;
  std::vector<policy::PolicyRule> authored_rules;

  bool operator==(const RuntimeState&) const = default;
};

Json to_json(const RuntimeState& s);
RuntimeState runtime_state_from_json(const Json& j);

Json to_json(const presence::PresenceState& s);
presence::PresenceState presence_state_from_json(const Json& j);
Json to_json(const policy::PolicyRule& r);
Json to_json(const policy::Decision& d);
Json to_json(const policy::UserMode& m);
policy::UserMode user_mode_from_json(const Json& j);  // throws ValidationError
Json to_json(const energy::LedgerEntry& e);
energy::LedgerEntry ledger_entry_from_json(const Json& j);
// Uses "devices" when present, otherwise expands "scope" against the config.
// Throws ValidationError for malformed input.
policy::PolicyRule rule_from_json(const Json& j, const config::Config& cfg);

struct LocationInput {
  std::optional<std::string> nmea;
  std::optional<geoloc::LatLon> position;
  std::optional<Timestamp> at;  // defaults to the clock
};

struct CommandOutcome {
  std::string device_id;
  SwitchState requested = SwitchState::Off;
  std::string reply;
  bool ok = false;
};

struct LocationResult {
  bool accepted = false;
  std::string reason;  // rejection reason
  std::vector<presence::PresenceEvent> events;
  std::vector<CommandOutcome> commands;
};

enum class SetStatus { Ok, NotFound, Exempt, PolicyConflict };

struct SetResult {
  SetStatus status = SetStatus::Ok;
  std::string reply;
  std::optional<policy::Decision> conflict;  // the organizational decision that refused the set
};

struct EditResult {
  bool changed = false;
  std::vector<CommandOutcome> commands;
};

struct ControllerOptions {
  std::optional<std::filesystem::path> log_file;
  // Route device commands through a loopback TCP fleet server.
  bool use_socket = false;
};

using Observer = std::function<void(const EventRecord&, const RuntimeState&)>;

class Controller {
 public:
  // Devices start in their configured state at `start`.
  Controller(config::Config cfg, Clock& clock, Timestamp start, ControllerOptions options = {});
  ~Controller();

  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  const config::Config& config() const { return cfg_; }
  const Clock& clock() const { return clock_; }
  Timestamp start() const { return start_; }

  // Mutations. Each runs to completion under the decision queue and appends
  // its records before returning.
  LocationResult post_location(const std::string& user, const LocationInput& input);
  void seed_presence(const std::string& user, const std::string& fence, presence::Occupancy state);
  // Throws policy::ConfigError for an unknown device only when `source` is
  // "manual"; the API reports NotFound instead.
  SetResult set_device(const std::string& device_id, SwitchState state, const std::string& source);
  // Throws ConfigError for an unknown user, ValidationError for bad fractions.
  EditResult set_user_mode(const std::string& user, const policy::UserMode& mode);
  // Throws ValidationError when the rule is rejected.
  EditResult upsert_rule(policy::PolicyRule rule);
  // Closes every device's ledger interval at the clock's current time.
  void checkpoint();

  // Re-applies a logged record's effect without running the pipeline.
  void apply(const EventRecord& record);

  // Reads.
  std::shared_ptr<const RuntimeState> snapshot() const;
  const EventLog& log() const { return *log_; }
  std::vector<devicenet::DeviceView> devices() const;
  std::vector<policy::PolicyRule> rules() const;
  const policy::UserProfile* user(const std::string& id) const;
  policy::PresenceContext presence_context() const;
  std::optional<policy::Decision> decide(const std::string& device_id) const;
  std::optional<double> distance_m(const std::string& user, const std::string& fence) const;

  // Reports over [t0, t1] from the ledger.
  std::vector<energy::SiteTotal> site_totals(Timestamp t0, Timestamp t1) const;
  std::vector<energy::ModeEstimate> estimates() const;
  energy::ComparisonReport comparison(Timestamp t0, Timestamp t1) const;
  std::vector<energy::RealmTotal> rollup(Timestamp t0, Timestamp t1) const;

  // Called after every append with the live state as of that record.
  void set_observer(Observer observer);

 private:
  Timestamp begin_op();
  EventRecord record(RecordKind kind, Json payload);
  void publish();
  RuntimeState build_state() const;
  SwitchState current(const std::string& id) const;
  void meter(const std::string& id, Timestamp now);
  CommandOutcome command(const std::string& id, SwitchState s, const std::string& source, const Json& why);
  std::vector<CommandOutcome> execute(const policy::Evaluation& ev, const std::string& source);
  std::vector<devicenet::DeviceDescriptor> descriptors() const;

  config::Config cfg_;
  Clock& clock_;
  Timestamp start_;
  // Frozen per operation so every record and transition of one mutation
  // shares a single instant.
  SimulatedClock op_clock_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<devicenet::Fleet> fleet_;
  std::unique_ptr<devicenet::FleetServer> server_;
  std::unique_ptr<devicenet::DeviceChannel> channel_;
  std::unique_ptr<policy::PolicyEngine> engine_;
  std::map<PresenceKey, presence::PresenceState> presence_;
  std::map<PresenceKey, double> distance_;
  energy::EnergyLedger ledger_;
  Observer observer_;

  mutable std::recursive_mutex queue_;  // the decision queue
  mutable std::mutex snap_mu_;
  std::shared_ptr<const RuntimeState> snapshot_;
};

struct RecoveryResult {
  std::unique_ptr<Controller> controller;
  std::size_t applied = 0;
  std::optional<std::size_t> corrupt_line;
  std::string error;
};

// Rebuilds state by applying each record in order; reading stops at the first
// corrupt record, which is reported.
RecoveryResult recover(const config::Config& cfg, Clock& clock, Timestamp start, const LogReadResult& log);

struct ReplayOptions {
  std::optional<double> speedup;  // overrides the script's value
  bool use_socket = false;
  bool pace = true;  // sleep between events according to the speedup
  Observer observer;
  std::optional<std::filesystem::path> log_file;
};

struct ReplayBundle {
  Json report;
  std::string comparison_csv;
  std::string ledger_csv;
  std::string estimates_csv;
  std::string rollup_csv;
  std::vector<EventRecord> events;
  RuntimeState final_state;
};

// Drives the script against a simulated clock. Throws ValidationError for a
// non-positive speedup and ConfigError for unknown references.
ReplayBundle replay(const config::Config& cfg, const scenario::ScenarioScript& script, const ReplayOptions& options = {});

// report.json, comparison.csv, ledger.csv, estimates.csv, rollup.csv, events.jsonl
void write_bundle(const ReplayBundle& bundle, const std::filesystem::path& dir);

std::string ledger_csv(const energy::EnergyLedger& ledger);

}  // namespace smartenergy::runtime
