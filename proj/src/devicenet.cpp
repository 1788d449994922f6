#include "smartenergy/devicenet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace smartenergy::devicenet {

const char* to_string(SwitchState s) { return s == SwitchState::On ? "ON" : "OFF"; }

std::optional<SwitchState> switch_state_from_string(std::string_view s) {
  if (s == "ON" || s == "on" || s == "On") return SwitchState::On;
  if (s == "OFF" || s == "off" || s == "Off") return SwitchState::Off;
  return std::nullopt;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Seconds of on-phase accumulated in [0, x) after an On transition.
double duty_on_seconds(const DutyCyclePower& d, double x) {
  const double on = d.on_minutes * 60.0;
  const double period = on + d.off_minutes * 60.0;
  const double cycles = std::floor(x / period);
  return cycles * on + std::min(x - cycles * period, on);
}

bool valid_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-' || c == '.' || c == ':';
  });
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto sp = line.find(' ', start);
    out.push_back(line.substr(start, sp == std::string_view::npos ? std::string_view::npos : sp - start));
    if (sp == std::string_view::npos) return out;
    start = sp + 1;
  }
}

}  // namespace

void validate(const PowerProfile& profile) {
  std::visit(overloaded{
                 [](const ConstantPower& c) {
                   if (!(c.watts >= 0.0)) throw std::invalid_argument("watts must be >= 0");
                 },
                 [](const TwoLevelPower& t) {
                   if (!(t.normal_watts >= 0.0) || !(t.active_watts >= 0.0)) {
                     throw std::invalid_argument("watts must be >= 0");
                   }
                   if (!(t.active_fraction >= 0.0 && t.active_fraction <= 1.0)) {
                     throw std::invalid_argument("active_fraction must be in [0, 1]");
                   }
                 },
                 [](const DutyCyclePower& d) {
                   if (!(d.on_watts >= 0.0)) throw std::invalid_argument("watts must be >= 0");
                   if (!(d.on_minutes > 0.0) || !(d.off_minutes > 0.0)) {
                     throw std::invalid_argument("duty minutes must be > 0");
                   }
                 },
             },
             profile);
}

double average_watts(const PowerProfile& profile) {
  return std::visit(overloaded{
                        [](const ConstantPower& c) { return c.watts; },
                        [](const TwoLevelPower& t) {
                          return t.normal_watts + t.active_fraction * (t.active_watts - t.normal_watts);
                        },
                        [](const DutyCyclePower& d) {
                          return d.on_watts * d.on_minutes / (d.on_minutes + d.off_minutes);
                        },
                    },
                    profile);
}

double on_power(const PowerProfile& profile, double since_on_s) {
  if (const auto* d = std::get_if<DutyCyclePower>(&profile)) {
    const double period = (d->on_minutes + d->off_minutes) * 60.0;
    const double phase = since_on_s - std::floor(since_on_s / period) * period;
    return phase < d->on_minutes * 60.0 ? d->on_watts : 0.0;
  }
  return average_watts(profile);
}

double on_energy_wh(const PowerProfile& profile, Timestamp anchor, Timestamp t0, Timestamp t1) {
  if (t1 <= t0) return 0.0;
  if (const auto* d = std::get_if<DutyCyclePower>(&profile)) {
    const auto a = static_cast<double>((t0 - anchor).count());
    const auto b = static_cast<double>((t1 - anchor).count());
    return d->on_watts * (duty_on_seconds(*d, b) - duty_on_seconds(*d, a)) / 3600.0;
  }
  return average_watts(profile) * static_cast<double>((t1 - t0).count()) / 3600.0;
}

Device::Device(DeviceDescriptor descriptor) : desc_(std::move(descriptor)) {
  validate(desc_.profile);
  history_.push_back({desc_.state_since, desc_.state});
}

bool Device::set_state(SwitchState s, Timestamp at) {
  if (at < history_.back().at) throw std::invalid_argument("transition precedes device history");
  if (s == desc_.state) return false;
  desc_.state = s;
  desc_.state_since = at;
  if (history_.back().at == at) {
    // Same-instant flip-flop: the earlier entry never lasted any time.
    history_.back().state = s;
    if (history_.size() > 1 && history_[history_.size() - 2].state == s) {
      history_.pop_back();
      desc_.state_since = history_.back().at;
    }
  } else {
    history_.push_back({at, s});
  }
  return true;
}

double Device::power_at(Timestamp t) const {
  const auto it = std::upper_bound(history_.begin(), history_.end(), t,
                                   [](Timestamp v, const Transition& tr) { return v < tr.at; });
  if (it == history_.begin()) return 0.0;
  const auto& seg = *std::prev(it);
  if (seg.state == SwitchState::Off) return 0.0;
  return on_power(desc_.profile, static_cast<double>((t - seg.at).count()));
}

double Device::meter_read(Timestamp t0, Timestamp t1) const {
  if (t1 < t0) throw std::invalid_argument("meter window is reversed");
  if (t0 < history_.front().at) throw HistoryGap("window starts before recorded history of " + id());
  double wh = 0.0;
  for (std::size_t i = 0; i < history_.size(); ++i) {
    const auto& seg = history_[i];
    const Timestamp seg_end = i + 1 < history_.size() ? history_[i + 1].at : Timestamp::max();
    if (seg.state != SwitchState::On || seg_end <= t0 || seg.at >= t1) continue;
    wh += on_energy_wh(desc_.profile, seg.at, std::max(seg.at, t0), std::min(seg_end, t1));
  }
  return wh;
}

std::string format_watts(double watts) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, watts);
  return std::string(buf, res.ptr);
}

std::optional<Reply> parse_reply(std::string_view line) {
  const auto t = split_spaces(line);
  Reply r;
  if (t.size() == 3 && t[0] == "STATE" && valid_id(t[1]) && switch_state_from_string(t[2]) &&
      (t[2] == "ON" || t[2] == "OFF")) {
    r.kind = Reply::Kind::State;
  } else if (t.size() == 3 && t[0] == "OK" && valid_id(t[1]) && (t[2] == "ON" || t[2] == "OFF")) {
    r.kind = Reply::Kind::Ok;
  } else if (t.size() == 3 && t[0] == "POWER" && valid_id(t[1])) {
    double w = 0.0;
    const auto res = std::from_chars(t[2].data(), t[2].data() + t[2].size(), w);
    if (res.ec != std::errc{} || res.ptr != t[2].data() + t[2].size()) return std::nullopt;
    r.kind = Reply::Kind::Power;
  } else if (t.size() == 2 && t[0] == "DEVICES") {
    unsigned n = 0;
    const auto res = std::from_chars(t[1].data(), t[1].data() + t[1].size(), n);
    if (res.ec != std::errc{} || res.ptr != t[1].data() + t[1].size()) return std::nullopt;
    r.kind = Reply::Kind::Devices;
    r.value = std::string(t[1]);
    return r;
  } else if (t.size() == 4 && t[0] == "DEVICE" && valid_id(t[1]) && (t[2] == "ON" || t[2] == "OFF") &&
             (t[3] == "0" || t[3] == "1")) {
    r.kind = Reply::Kind::Device;
    r.exempt = t[3] == "1";
  } else if (t.size() == 3 && t[0] == "ERR" &&
             ((t[1] == "-" && t[2] == "BADCMD") || (valid_id(t[1]) && (t[2] == "EXEMPT" || t[2] == "UNKNOWN")))) {
    r.kind = Reply::Kind::Err;
  } else {
    return std::nullopt;
  }
  r.id = std::string(t[1]);
  r.value = std::string(t[2]);
  return r;
}

Fleet::Fleet(std::vector<DeviceDescriptor> devices, const Clock& clock) : clock_(clock) {
  for (auto& d : devices) {
    if (!valid_id(d.device_id)) throw std::invalid_argument("invalid device id '" + d.device_id + "'");
    auto id = d.device_id;
    if (!devices_.emplace(id, Device(std::move(d))).second) {
      throw std::invalid_argument("duplicate device id " + id);
    }
  }
}

Device& Fleet::find(std::string_view id) {
  const auto it = devices_.find(id);
  if (it == devices_.end()) throw std::out_of_range("unknown device " + std::string(id));
  return it->second;
}

const Device& Fleet::find(std::string_view id) const {
  const auto it = devices_.find(id);
  if (it == devices_.end()) throw std::out_of_range("unknown device " + std::string(id));
  return it->second;
}

std::string Fleet::handle_command(std::string_view line) {
  std::lock_guard lock(mu_);
  return execute(line);
}

std::string Fleet::execute(std::string_view line) {
  static const std::string kBad = "ERR - BADCMD";
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto t = split_spaces(line);

  if (t.size() == 1 && t[0] == "LIST") {
    std::string out = "DEVICES " + std::to_string(devices_.size());
    for (const auto& [id, dev] : devices_) {
      out += "\nDEVICE " + id + ' ' + to_string(dev.state()) + ' ' + (dev.descriptor().exempt ? '1' : '0');
    }
    return out;
  }
  if (t.size() < 2 || !valid_id(t[1])) return kBad;
  const std::string id(t[1]);
  const auto verb = t[0];
  const bool is_set = verb == "SET" && t.size() == 3 && (t[2] == "ON" || t[2] == "OFF");
  const bool is_query = (verb == "GET" || verb == "POWER") && t.size() == 2;
  if (!is_set && !is_query) return kBad;

  const auto it = devices_.find(id);
  if (it == devices_.end()) return "ERR " + id + " UNKNOWN";
  auto& dev = it->second;
  if (verb == "GET") return "STATE " + id + ' ' + to_string(dev.state());
  if (verb == "POWER") return "POWER " + id + ' ' + format_watts(dev.power_at(clock_.now()));

  if (dev.descriptor().exempt) return "ERR " + id + " EXEMPT";
  const auto target = t[2] == "ON" ? SwitchState::On : SwitchState::Off;
  dev.set_state(target, std::max(clock_.now(), dev.history().back().at));
  return "OK " + id + ' ' + to_string(target);
}

bool Fleet::contains(std::string_view id) const {
  std::lock_guard lock(mu_);
  return devices_.find(id) != devices_.end();
}

Device Fleet::device(std::string_view id) const {
  std::lock_guard lock(mu_);
  return find(id);
}

std::vector<Device> Fleet::devices() const {
  std::lock_guard lock(mu_);
  std::vector<Device> out;
  out.reserve(devices_.size());
  for (const auto& [id, dev] : devices_) out.push_back(dev);
  return out;
}

std::vector<DeviceView> Fleet::list() const {
  std::lock_guard lock(mu_);
  const auto now = clock_.now();
  std::vector<DeviceView> out;
  for (const auto& [id, dev] : devices_) {
    out.push_back({id, dev.state(), dev.state_since(), dev.descriptor().exempt, dev.power_at(now)});
  }
  return out;
}

double Fleet::power_at(std::string_view id, Timestamp t) const {
  std::lock_guard lock(mu_);
  return find(id).power_at(t);
}

double Fleet::meter_read(std::string_view id, Timestamp t0, Timestamp t1) const {
  std::lock_guard lock(mu_);
  if (t1 > clock_.now()) throw HistoryGap("window extends past the present");
  return find(id).meter_read(t0, t1);
}

void Fleet::apply_transition(std::string_view id, SwitchState s, Timestamp at) {
  std::lock_guard lock(mu_);
  find(id).set_state(s, at);
}

}  // namespace smartenergy::devicenet
