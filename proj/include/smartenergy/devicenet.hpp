#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "smartenergy/timeutil.hpp"

// Simulated appliance fleet: wattage models, per-device state history,
// metering, and the line-oriented control protocol.
namespace smartenergy::devicenet {

enum class SwitchState { Off, On };

const char* to_string(SwitchState s);  // "ON" / "OFF"
std::optional<SwitchState> switch_state_from_string(std::string_view s);

struct ConstantPower {
  double watts = 0.0;
  bool operator==(const ConstantPower&) const = default;
};

// Averaged appliance with a normal and an active draw (laptops, desktops).
struct TwoLevelPower {
  double normal_watts = 0.0;
  double active_watts = 0.0;
  double active_fraction = 0.5;
  bool operator==(const TwoLevelPower&) const = default;
};

// Compressor-style load: on_watts for on_minutes, then idle for off_minutes,
// phase anchored at the device's last On transition.
struct DutyCyclePower {
  double on_watts = 0.0;
  double on_minutes = 1.0;
  double off_minutes = 1.0;
  bool operator==(const DutyCyclePower&) const = default;
};

using PowerProfile = std::variant<ConstantPower, TwoLevelPower, DutyCyclePower>;

// Throws std::invalid_argument on negative wattage, non-positive duty minutes
// or an active fraction outside [0, 1].
void validate(const PowerProfile& profile);

// Long-run mean draw while switched on.
double average_watts(const PowerProfile& profile);

// Instantaneous draw `since_on` seconds after an On transition.
double on_power(const PowerProfile& profile, double since_on_s);

// Watt-hours drawn over [t0, t1] by a device that switched on at `anchor`.
double on_energy_wh(const PowerProfile& profile, Timestamp anchor, Timestamp t0, Timestamp t1);

struct DeviceDescriptor {
  std::string device_id;
  std::string name;
  std::string building;  // fence id of the building the device sits in
  std::string group;     // estimate row / circuit group, e.g. "lighting"
  std::string realm;     // realm the device is placed in
  bool exempt = false;
  PowerProfile profile = ConstantPower{};
  SwitchState state = SwitchState::Off;
  Timestamp state_since{};
};

struct Transition {
  Timestamp at{};
  SwitchState state = SwitchState::Off;
  bool operator==(const Transition&) const = default;
};

class HistoryGap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Device {
 public:
  // History starts at the descriptor's state_since with its initial state.
  explicit Device(DeviceDescriptor descriptor);

  const DeviceDescriptor& descriptor() const { return desc_; }
  const std::string& id() const { return desc_.device_id; }
  SwitchState state() const { return desc_.state; }
  Timestamp state_since() const { return desc_.state_since; }
  const std::vector<Transition>& history() const { return history_; }

  // Returns false (and leaves the history untouched) when `s` is already the
  // current state. Throws std::invalid_argument for an `at` before the last
  // transition.
  bool set_state(SwitchState s, Timestamp at);

  double power_at(Timestamp t) const;

  // Integral of power_at over [t0, t1]. Throws HistoryGap when t0 precedes
  // the first recorded transition.
  double meter_read(Timestamp t0, Timestamp t1) const;

 private:
  DeviceDescriptor desc_;
  std::vector<Transition> history_;
};

// Wire protocol replies in structured form.
struct Reply {
  enum class Kind { State, Ok, Power, Devices, Device, Err } kind = Kind::Err;
  std::string id;     // "-" for BADCMD
  std::string value;  // ON/OFF, watts, count, or error reason
  bool exempt = false;  // DEVICE lines only
};

// Parses one reply line. Returns nullopt when the line violates the grammar.
std::optional<Reply> parse_reply(std::string_view line);

struct DeviceView {
  std::string device_id;
  SwitchState state = SwitchState::Off;
  Timestamp state_since{};
  bool exempt = false;
  double watts = 0.0;
  bool operator==(const DeviceView&) const = default;
};

class Fleet {
 public:
  Fleet(std::vector<DeviceDescriptor> devices, const Clock& clock);

  Fleet(const Fleet&) = delete;
  Fleet& operator=(const Fleet&) = delete;

  // Executes one protocol line at the clock's current time. The reply is a
  // single line, except LIST whose header is followed by one line per device
  // (joined with '\n').
  std::string handle_command(std::string_view line);

  bool contains(std::string_view id) const;
  Device device(std::string_view id) const;  // copy; throws std::out_of_range
  std::vector<Device> devices() const;       // sorted by id
  std::vector<DeviceView> list() const;
  double power_at(std::string_view id, Timestamp t) const;

  // Additionally throws HistoryGap when t1 lies beyond the clock.
  double meter_read(std::string_view id, Timestamp t0, Timestamp t1) const;

  // Direct mutation used by log recovery; bypasses the exemption check.
  void apply_transition(std::string_view id, SwitchState s, Timestamp at);

 private:
  std::string execute(std::string_view line);
  Device& find(std::string_view id);
  const Device& find(std::string_view id) const;

  const Clock& clock_;
  mutable std::mutex mu_;
  std::map<std::string, Device, std::less<>> devices_;
};

std::string format_watts(double watts);

// Synchronous request/reply transport for protocol lines.
class DeviceChannel {
 public:
  virtual ~DeviceChannel() = default;
  virtual std::string exchange(std::string_view line) = 0;
};

class InProcessChannel final : public DeviceChannel {
 public:
  explicit InProcessChannel(Fleet& fleet) : fleet_(fleet) {}
  std::string exchange(std::string_view line) override { return fleet_.handle_command(line); }

 private:
  Fleet& fleet_;
};

}  // namespace smartenergy::devicenet
