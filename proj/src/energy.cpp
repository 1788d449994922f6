#include "smartenergy/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace smartenergy::energy {

void UsageSchedule::validate() const {
  if (hours_office < 0 || hours_home_awake < 0 || hours_sleep < 0) {
    throw policy::ValidationError("schedule hours must be non-negative");
  }
  if (std::fabs(hours_office + hours_home_awake + hours_sleep - 24.0) > 1e-9) {
    throw policy::ValidationError("schedule hours must sum to 24");
  }
}

const char* to_string(HoursBasis b) {
  switch (b) {
    case HoursBasis::Always: return "always";
    case HoursBasis::ExceptSleep: return "except_sleep";
    case HoursBasis::HomeAwake: return "home_awake";
    case HoursBasis::Office: return "office";
    case HoursBasis::Fixed: return "fixed";
  }
  return "?";
}

std::optional<HoursBasis> hours_basis_from_string(std::string_view s) {
  if (s == "always") return HoursBasis::Always;
  if (s == "except_sleep") return HoursBasis::ExceptSleep;
  if (s == "home_awake") return HoursBasis::HomeAwake;
  if (s == "office") return HoursBasis::Office;
  if (s == "fixed") return HoursBasis::Fixed;
  return std::nullopt;
}

double basis_hours(const ModeRow& row, const UsageSchedule& s) {
  switch (row.basis) {
    case HoursBasis::Always: return 24.0;
    case HoursBasis::ExceptSleep: return 24.0 - s.hours_sleep;
    case HoursBasis::HomeAwake: return s.hours_home_awake;
    case HoursBasis::Office: return s.hours_office;
    case HoursBasis::Fixed: return row.fixed_hours;
  }
  return 0.0;
}

ModeEstimate estimate_mode(const std::string& site, const std::string& mode, const UsageSchedule& schedule,
                           std::span<const DeviceDescriptor> fleet, const ModeTable& table) {
  schedule.validate();
  ModeEstimate est;
  est.mode = mode;
  est.site = site;
  const auto mode_it = table.find(mode);
  if (mode_it == table.end()) throw policy::ConfigError("no estimate table for mode " + mode);
  const auto site_it = mode_it->second.find(site);
  static const std::map<std::string, ModeRow> kNoRows;
  const auto& rows = site_it == mode_it->second.end() ? kNoRows : site_it->second;

  std::vector<std::string> order;
  std::map<std::string, double> watts;
  for (const auto& d : fleet) {
    if (d.building != site) continue;
    if (!watts.count(d.group)) order.push_back(d.group);
    watts[d.group] += devicenet::average_watts(d.profile);
  }
  for (const auto& group : order) {
    const auto row = rows.find(group);
    if (row == rows.end()) throw policy::ConfigError("no " + mode + " row for " + site + "/" + group);
    EstimateLine line;
    line.item = group;
    line.watts = watts[group];
    line.hours = basis_hours(row->second, schedule);
    line.fraction = row->second.fraction;
    line.kwh = line.watts * line.hours * line.fraction / 1000.0;
    est.total_kwh += line.kwh;
    est.lines.push_back(line);
  }
  est.lines.push_back({"hvac", 0.0, 0.0, 0.0, 0.0});
  return est;
}

void EnergyLedger::append(LedgerEntry e) {
  if (e.t1 < e.t0) throw std::invalid_argument("ledger interval is reversed");
  if (!(e.wh >= 0.0)) throw std::invalid_argument("ledger energy must be non-negative");
  const auto it = until_.find(e.device_id);
  if (it != until_.end() && e.t0 < it->second) {
    throw std::invalid_argument("ledger interval overlaps previous entry for " + e.device_id);
  }
  until_[e.device_id] = e.t1;
  entries_.push_back(std::move(e));
}

std::optional<Timestamp> EnergyLedger::metered_until(const std::string& device_id) const {
  const auto it = until_.find(device_id);
  if (it == until_.end()) return std::nullopt;
  return it->second;
}

SiteTotal ledger_total(const EnergyLedger& ledger, std::span<const DeviceDescriptor> fleet, const std::string& site,
                       Timestamp t0, Timestamp t1) {
  std::map<std::string, const DeviceDescriptor*> by_id;
  for (const auto& d : fleet) by_id[d.device_id] = &d;

  std::map<std::string, double> wh;
  for (const auto& d : fleet) {
    if (d.building == site) wh[d.device_id] = 0.0;
  }
  for (const auto& e : ledger.entries()) {
    if (e.site != site || e.t1 <= t0 || e.t0 >= t1) {
      // Zero-length entries at the window edge carry no energy either way.
      continue;
    }
    if (e.t0 >= t0 && e.t1 <= t1) {
      wh[e.device_id] += e.wh;
    } else if (e.state == SwitchState::On) {
      const auto d = by_id.find(e.device_id);
      if (d == by_id.end()) throw policy::ConfigError("ledger names unknown device " + e.device_id);
      wh[e.device_id] += devicenet::on_energy_wh(d->second->profile, e.anchor, std::max(e.t0, t0), std::min(e.t1, t1));
    }
  }

  SiteTotal out;
  out.site = site;
  for (const auto& [id, v] : wh) {
    const auto d = by_id.find(id);
    const std::string group = d == by_id.end() ? std::string() : d->second->group;
    out.devices.push_back({id, group, v / 1000.0});
    out.groups[group] += v / 1000.0;
    out.total_kwh += v / 1000.0;
  }
  return out;
}

std::optional<double> energy_ratio(double actual, double estimate) {
  if (actual == 0.0) return 0.0;
  if (estimate == 0.0) return std::nullopt;
  return actual / estimate;
}

ComparisonReport comparison_report(std::span<const SiteTotal> actual, std::span<const ModeEstimate> estimates) {
  auto find = [&](const std::string& site, const std::string& mode) -> double {
    for (const auto& e : estimates) {
      if (e.site == site && e.mode == mode) return e.total_kwh;
    }
    throw std::invalid_argument("missing " + mode + " estimate for site " + site);
  };
  std::set<std::string> actual_sites, estimate_sites;
  for (const auto& a : actual) actual_sites.insert(a.site);
  for (const auto& e : estimates) estimate_sites.insert(e.site);
  if (actual_sites != estimate_sites) throw std::invalid_argument("actual and estimate site sets differ");

  ComparisonReport report;
  ComparisonRow combined;
  combined.site = "combined";
  for (const auto& a : actual) {
    ComparisonRow row;
    row.site = a.site;
    row.actual_kwh = a.total_kwh;
    row.luxury_kwh = find(a.site, "luxury");
    row.moderate_kwh = find(a.site, "moderate");
    row.frugal_kwh = find(a.site, "frugal");
    combined.actual_kwh += row.actual_kwh;
    combined.luxury_kwh += row.luxury_kwh;
    combined.moderate_kwh += row.moderate_kwh;
    combined.frugal_kwh += row.frugal_kwh;
    report.rows.push_back(row);
  }
  report.rows.push_back(combined);
  for (auto& row : report.rows) {
    row.ratio_luxury = energy_ratio(row.actual_kwh, row.luxury_kwh);
    row.ratio_moderate = energy_ratio(row.actual_kwh, row.moderate_kwh);
    row.ratio_frugal = energy_ratio(row.actual_kwh, row.frugal_kwh);
  }
  return report;
}

std::vector<RealmTotal> realm_rollup(const std::map<std::string, double>& device_kwh,
                                     const std::map<std::string, std::string>& device_realm,
                                     const policy::RealmTree& realms) {
  std::map<std::string, double> own;
  for (const auto& [device, kwh] : device_kwh) {
    const auto it = device_realm.find(device);
    if (it == device_realm.end() || !realms.contains(it->second)) {
      throw policy::ConfigError("device " + device + " is not placed in the realm tree");
    }
    own[it->second] += kwh;
  }
  std::vector<RealmTotal> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : realms.realms()) {
    index[r.realm_id] = out.size();
    const double mine = own.count(r.realm_id) ? own.at(r.realm_id) : 0.0;
    out.push_back({r.realm_id, r.depth, mine, 0.0});
  }
  // Realms are stored root-first by depth, so a reverse sweep folds children
  // into parents after the children are complete.
  for (auto it = realms.realms().rbegin(); it != realms.realms().rend(); ++it) {
    auto& node = out[index.at(it->realm_id)];
    node.subtree_kwh += node.own_kwh;
    if (it->parent) out[index.at(*it->parent)].subtree_kwh += node.subtree_kwh;
  }
  return out;
}

std::string format_kwh(double kwh) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", kwh);
  return buf;
}

namespace {

std::string format_ratio(const std::optional<double>& r) { return r ? format_kwh(*r) : std::string("NA"); }

}  // namespace

std::string comparison_csv(const ComparisonReport& report) {
  std::ostringstream os;
  os << "site,actual_kwh,luxury_kwh,moderate_kwh,frugal_kwh,ratio_luxury,ratio_moderate,ratio_frugal\n";
  for (const auto& r : report.rows) {
    os << r.site << ',' << format_kwh(r.actual_kwh) << ',' << format_kwh(r.luxury_kwh) << ','
       << format_kwh(r.moderate_kwh) << ',' << format_kwh(r.frugal_kwh) << ',' << format_ratio(r.ratio_luxury) << ','
       << format_ratio(r.ratio_moderate) << ',' << format_ratio(r.ratio_frugal) << '\n';
  }
  return os.str();
}

std::string estimate_csv(std::span<const ModeEstimate> estimates) {
  std::ostringstream os;
  os << "site,mode,item,watts,hours,fraction,kwh\n";
  for (const auto& e : estimates) {
    for (const auto& l : e.lines) {
      os << e.site << ',' << e.mode << ',' << l.item << ',' << format_kwh(l.watts) << ',' << format_kwh(l.hours)
         << ',' << format_kwh(l.fraction) << ',' << format_kwh(l.kwh) << '\n';
    }
    os << e.site << ',' << e.mode << ",total,,,," << format_kwh(e.total_kwh) << '\n';
  }
  return os.str();
}

std::string site_totals_csv(std::span<const SiteTotal> totals) {
  std::ostringstream os;
  os << "site,device,group,kwh\n";
  for (const auto& t : totals) {
    for (const auto& d : t.devices) os << t.site << ',' << d.device_id << ',' << d.group << ',' << format_kwh(d.kwh) << '\n';
    os << t.site << ",total,," << format_kwh(t.total_kwh) << '\n';
  }
  return os.str();
}

std::string rollup_csv(std::span<const RealmTotal> rollup) {
  std::ostringstream os;
  os << "realm,depth,own_kwh,subtree_kwh\n";
  for (const auto& r : rollup) {
    os << r.realm_id << ',' << r.depth << ',' << format_kwh(r.own_kwh) << ',' << format_kwh(r.subtree_kwh) << '\n';
  }
  return os.str();
}

}  // namespace smartenergy::energy
