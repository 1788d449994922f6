#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smartenergy/devicenet.hpp"
#include "smartenergy/policy.hpp"

namespace smartenergy::energy {

using devicenet::DeviceDescriptor;
using devicenet::SwitchState;

// kWh per BTU using the 0.293 Wh constant.
inline constexpr double kKwhPerBtu = 0.000293;
// kWh per BTU using 1 BTU = 1055 J.
inline constexpr double kKwhPerBtuJoule = 1055.0 / 3.6e6;

// Negative inputs are accepted and converted linearly (for deltas).
inline double btu_to_kwh(double btu) { return btu * kKwhPerBtu; }

struct UsageSchedule {
  double hours_office = 8.0;
  double hours_home_awake = 8.0;
  double hours_sleep = 8.0;

  void validate() const;  // components >= 0 and summing to 24; throws ValidationError
};

// Which part of the day an estimate row counts as on-time.
enum class HoursBasis { Always, ExceptSleep, HomeAwake, Office, Fixed };

const char* to_string(HoursBasis b);
std::optional<HoursBasis> hours_basis_from_string(std::string_view s);

struct ModeRow {
  HoursBasis basis = HoursBasis::Always;
  double fixed_hours = 0.0;  // used when basis == Fixed
  double fraction = 1.0;     // participation
};

double basis_hours(const ModeRow& row, const UsageSchedule& schedule);

// mode -> site -> device group -> row
using ModeTable = std::map<std::string, std::map<std::string, std::map<std::string, ModeRow>>>;

struct EstimateLine {
  std::string item;  // device group
  double watts = 0.0;
  double hours = 0.0;
  double fraction = 0.0;
  double kwh = 0.0;
};

struct ModeEstimate {
  std::string mode;
  std::string site;
  std::vector<EstimateLine> lines;  // fleet order, then a zero "hvac" line
  double total_kwh = 0.0;
};

// Daily kWh for every device group at `site` under `mode`:
// summed group wattage x basis hours x participation. Throws ConfigError when
// a group has no row for the mode.
ModeEstimate estimate_mode(const std::string& site, const std::string& mode, const UsageSchedule& schedule,
                           std::span<const DeviceDescriptor> fleet, const ModeTable& table);

struct LedgerEntry {
  std::string device_id;
  std::string site;
  Timestamp t0{};
  Timestamp t1{};
  SwitchState state = SwitchState::Off;
  Timestamp anchor{};  // last On transition, for duty-cycle phase
  double wh = 0.0;

  bool operator==(const LedgerEntry&) const = default;
};

class EnergyLedger {
 public:
  // Throws std::invalid_argument for reversed intervals, negative energy or
  // an interval overlapping the device's previous entry.
  void append(LedgerEntry entry);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::optional<Timestamp> metered_until(const std::string& device_id) const;
  bool empty() const { return entries_.empty(); }

  bool operator==(const EnergyLedger&) const = default;

 private:
  std::vector<LedgerEntry> entries_;
  std::map<std::string, Timestamp> until_;
};

struct ItemTotal {
  std::string device_id;
  std::string group;
  double kwh = 0.0;
};

struct SiteTotal {
  std::string site;
  std::vector<ItemTotal> devices;       // sorted by id
  std::map<std::string, double> groups;  // device group -> kWh
  double total_kwh = 0.0;
};

// Sums ledger energy for devices tagged to `site` within [t0, t1]. Entries
// straddling the window are re-metered on the clipped interval.
SiteTotal ledger_total(const EnergyLedger& ledger, std::span<const DeviceDescriptor> fleet, const std::string& site,
                       Timestamp t0, Timestamp t1);

struct ComparisonRow {
  std::string site;  // a site id or "combined"
  double actual_kwh = 0.0;
  double luxury_kwh = 0.0;
  double moderate_kwh = 0.0;
  double frugal_kwh = 0.0;
  // actual / estimate; 0 when actual is 0; nullopt when only the estimate is 0
  std::optional<double> ratio_luxury;
  std::optional<double> ratio_moderate;
  std::optional<double> ratio_frugal;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;  // one per site, then "combined"
};

std::optional<double> energy_ratio(double actual, double estimate);

// `estimates` must hold luxury/moderate/frugal for every site in `actual`.
ComparisonReport comparison_report(std::span<const SiteTotal> actual, std::span<const ModeEstimate> estimates);

struct RealmTotal {
  std::string realm_id;
  int depth = 0;
  double own_kwh = 0.0;      // devices placed directly in the realm
  double subtree_kwh = 0.0;  // own plus every descendant realm
};

// Per-realm totals in tree order. Throws policy::ConfigError for a device that
// is not placed in a known realm.
std::vector<RealmTotal> realm_rollup(const std::map<std::string, double>& device_kwh,
                                     const std::map<std::string, std::string>& device_realm,
                                     const policy::RealmTree& realms);

std::string comparison_csv(const ComparisonReport& report);
std::string estimate_csv(std::span<const ModeEstimate> estimates);
std::string site_totals_csv(std::span<const SiteTotal> totals);
std::string rollup_csv(std::span<const RealmTotal> rollup);

// Fixed six-decimal rendering used by every text report.
std::string format_kwh(double kwh);

}  // namespace smartenergy::energy
