#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smartenergy/timeutil.hpp"

// Offline building telemetry analysis: hourly unification, correlation
// windows, daily aggregation, regression and occupancy subsets.
namespace smartenergy::analytics {

// X temperature (F), Y humidity (%), Z electricity (kWh), H heating (BTU),
// C cooling (BTU).
enum class Channel { Temperature, Humidity, Electricity, Heating, Cooling };

inline constexpr Channel kAllChannels[] = {Channel::Temperature, Channel::Humidity, Channel::Electricity,
                                           Channel::Heating, Channel::Cooling};

const char* letter(Channel c);    // X, Y, Z, H, C
const char* csv_name(Channel c);  // temp_f, humidity_pct, electric_kwh, heating_btu, cooling_btu
std::optional<Channel> channel_from_name(std::string_view s);  // csv name or letter

// Energy channels are extensive (summed); conditions are intensive (averaged).
bool is_energy(Channel c);

class EmptyResult : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  Timestamp at{};
  double value = 0.0;
};

struct MeterSeries {
  Channel channel = Channel::Electricity;
  std::vector<Sample> samples;

  void validate() const;  // strictly increasing timestamps
};

struct HourlySeries {
  Channel channel = Channel::Electricity;
  Timestamp start{};  // hour aligned
  std::vector<std::optional<double>> values;

  std::size_t missing() const;
};

// Sums (Z, H, C) or averages (X, Y) samples within each clock hour. The
// sampling interval must divide one hour; hours without the full complement
// of samples are marked missing. Throws std::invalid_argument otherwise.
HourlySeries resample_hourly(const MeterSeries& series);

// Channels aligned onto one shared hourly axis.
struct HourlyDataset {
  Timestamp start{};
  std::size_t hours = 0;
  std::map<Channel, std::vector<std::optional<double>>> channels;

  static HourlyDataset align(std::span<const HourlySeries> series);
  Timestamp hour_at(std::size_t i) const { return start + std::chrono::hours{static_cast<long>(i)}; }
  std::optional<double> value(Channel c, std::size_t i) const;
  bool has(Channel c) const { return channels.count(c) != 0; }
};

// Reads "timestamp,channel,value" lines; '#' comments, blank lines and a
// header row are skipped. Throws std::runtime_error naming the bad line.
std::map<Channel, MeterSeries> load_meter_csv(std::istream& in);
void write_meter_csv(std::ostream& out, const std::map<Channel, MeterSeries>& series);

HourlyDataset hourly_dataset(const std::map<Channel, MeterSeries>& series);

struct PearsonResult {
  std::optional<double> r;  // nullopt when either series is constant
  std::size_t n = 0;
};

// Throws std::invalid_argument for unequal lengths or fewer than two samples.
PearsonResult pearson(std::span<const double> a, std::span<const double> b);

enum class WindowStatus { Ok, Undefined, Excluded };

const char* to_string(WindowStatus s);

inline constexpr std::size_t kWeekHours = 168;

struct WeeklyCorrelation {
  std::size_t week = 0;
  Timestamp start{};
  Channel a = Channel::Electricity;
  Channel b = Channel::Temperature;
  std::size_t window_hours = kWeekHours;
  std::size_t samples = 0;  // hours with both channels present
  std::size_t missing = 0;
  WindowStatus status = WindowStatus::Ok;
  std::optional<double> r;
};

using ChannelPair = std::pair<Channel, Channel>;

// The pairs of interest: (Z,X) (Z,Y) (H,X) (H,Y) (C,X) (C,Y).
std::vector<ChannelPair> default_pairs();

// One row per pair per complete 168-hour window counted from the dataset
// start. Windows missing more than `max_missing_fraction` of their hours are
// Excluded. Throws EmptyResult when no complete week exists.
std::vector<WeeklyCorrelation> weekly_correlations(const HourlyDataset& data, std::span<const ChannelPair> pairs,
                                                   double max_missing_fraction = 0.05);

enum class ModelKind { MLR, MPR };

const char* to_string(ModelKind m);

struct RegressionFit {
  ModelKind model = ModelKind::MLR;
  std::vector<std::string> terms;  // "1", "X", "Y", "X^2", "Y^2", "XY"
  std::vector<double> coefficients;
  double r_squared = 0.0;
  std::size_t n = 0;

  double predict(double x, double y) const;
};

struct RegressionOutcome {
  std::optional<RegressionFit> fit;
  std::vector<std::string> collinear_terms;  // set when the design is rank deficient

  bool degenerate() const { return !fit.has_value(); }
};

// Raw design column for a term name at (x, y).
double term_value(std::string_view term, double x, double y);
std::vector<std::string> model_terms(ModelKind model);

// Least squares y = b0 + b1 X + b2 Y.
RegressionOutcome fit_mlr(std::span<const double> y, std::span<const double> x1, std::span<const double> x2);

// Least squares over {1, X, Y, X^2, Y^2, XY}. Only degree 2 is supported.
RegressionOutcome fit_mpr(std::span<const double> y, std::span<const double> x1, std::span<const double> x2,
                          int degree = 2);

struct DailyRecord {
  std::chrono::sys_days day{};
  std::size_t hours_present = 0;  // hours where every available channel has data
  bool partial = false;
  std::map<Channel, double> values;  // totals for Z/H/C, means for X/Y
};

std::vector<DailyRecord> daily_aggregate(const HourlyDataset& data);

enum class Subset { OfficeHours, AfterHours, Weekend, FallSemester, SummerHoliday };

const char* to_string(Subset s);

struct CalendarPeriod {
  Subset subset = Subset::FallSemester;
  std::chrono::sys_days first{};
  std::chrono::sys_days end{};  // exclusive
};

struct Calendar {
  std::vector<CalendarPeriod> periods;
  int office_start_hour = 8;  // office hours are [start, end) on weekdays
  int office_end_hour = 20;

  // Fall semester 2011-08-30..2011-12-09, summer holiday 2011-05-10..2011-08-29.
  static Calendar academic_2011();
};

struct SubsetStats {
  Subset subset = Subset::OfficeHours;
  std::size_t hours = 0;
  std::size_t days = 0;  // distinct calendar days touched
  bool empty = true;
  std::map<Channel, double> totals;       // energy channels
  std::map<Channel, double> per_24h;      // energy total / hours * 24; condition means
  std::map<Channel, double> daily_mean;   // energy total / days
};

std::vector<SubsetStats> split_subsets(const HourlyDataset& data, const Calendar& calendar);

// Deterministic synthetic telemetry with weather-driven HVAC loads and an
// occupancy-insensitive electrical base load.
HourlyDataset synthetic_dataset(Timestamp start, std::size_t hours, std::uint64_t seed);
std::map<Channel, MeterSeries> to_series(const HourlyDataset& data);

std::string correlations_csv(std::span<const WeeklyCorrelation> rows);
std::string daily_csv(std::span<const DailyRecord> rows);
std::string subsets_csv(std::span<const SubsetStats> rows);
std::string regression_csv(const HourlyDataset& data);

}  // namespace smartenergy::analytics
