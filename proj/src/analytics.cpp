#include "smartenergy/analytics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace smartenergy::analytics {

const char* letter(Channel c) {
  switch (c) {
    case Channel::Temperature: return "X";
    case Channel::Humidity: return "Y";
    case Channel::Electricity: return "Z";
    case Channel::Heating: return "H";
    case Channel::Cooling: return "C";
  }
  return "?";
}

const char* csv_name(Channel c) {
  switch (c) {
    case Channel::Temperature: return "temp_f";
    case Channel::Humidity: return "humidity_pct";
    case Channel::Electricity: return "electric_kwh";
    case Channel::Heating: return "heating_btu";
    case Channel::Cooling: return "cooling_btu";
  }
  return "?";
}

std::optional<Channel> channel_from_name(std::string_view s) {
  for (const auto c : kAllChannels) {
    if (s == csv_name(c) || s == letter(c)) return c;
  }
  return std::nullopt;
}

bool is_energy(Channel c) {
  return c == Channel::Electricity || c == Channel::Heating || c == Channel::Cooling;
}

const char* to_string(WindowStatus s) {
  switch (s) {
    case WindowStatus::Ok: return "ok";
    case WindowStatus::Undefined: return "undefined";
    case WindowStatus::Excluded: return "excluded";
  }
  return "?";
}

const char* to_string(ModelKind m) { return m == ModelKind::MLR ? "MLR" : "MPR"; }

const char* to_string(Subset s) {
  switch (s) {
    case Subset::OfficeHours: return "office_hours";
    case Subset::AfterHours: return "after_hours";
    case Subset::Weekend: return "weekend";
    case Subset::FallSemester: return "fall_semester";
    case Subset::SummerHoliday: return "summer_holiday";
  }
  return "?";
}

void MeterSeries::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i - 1].at < samples[i].at)) {
      throw std::invalid_argument(std::string("timestamps of ") + csv_name(channel) + " must strictly increase");
    }
  }
}

std::size_t HourlySeries::missing() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::nullopt));
}

HourlySeries resample_hourly(const MeterSeries& series) {
  using namespace std::chrono;
  series.validate();
  HourlySeries out;
  out.channel = series.channel;
  if (series.samples.empty()) return out;

  long long interval = 3600;
  for (std::size_t i = 1; i < series.samples.size(); ++i) {
    interval = std::min<long long>(interval, (series.samples[i].at - series.samples[i - 1].at).count());
  }
  if (interval <= 0 || 3600 % interval != 0) {
    throw std::invalid_argument("sampling interval must divide one hour");
  }
  for (const auto& s : series.samples) {
    if (time_of_day(s.at).count() % interval != 0) {
      throw std::invalid_argument("samples must sit on the sampling grid");
    }
  }
  const auto per_hour = static_cast<std::size_t>(3600 / interval);
  out.start = floor<hours>(series.samples.front().at);
  const auto last = floor<hours>(series.samples.back().at);
  const auto n = static_cast<std::size_t>(duration_cast<hours>(last - out.start).count()) + 1;

  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& s : series.samples) {
    const auto h = static_cast<std::size_t>(duration_cast<hours>(floor<hours>(s.at) - out.start).count());
    sum[h] += s.value;
    ++count[h];
  }
  out.values.resize(n);
  const bool extensive = is_energy(series.channel);
  for (std::size_t h = 0; h < n; ++h) {
    if (count[h] != per_hour) continue;
    out.values[h] = extensive ? sum[h] : sum[h] / static_cast<double>(count[h]);
  }
  return out;
}

HourlyDataset HourlyDataset::align(std::span<const HourlySeries> series) {
  using namespace std::chrono;
  HourlyDataset ds;
  if (series.empty()) return ds;
  std::optional<Timestamp> first, last;
  for (const auto& s : series) {
    if (s.values.empty()) continue;
    const auto end = s.start + std::chrono::hours{static_cast<long>(s.values.size())};
    if (!first || s.start < *first) first = s.start;
    if (!last || end > *last) last = end;
  }
  if (!first) return ds;
  ds.start = *first;
  ds.hours = static_cast<std::size_t>(duration_cast<std::chrono::hours>(*last - *first).count());
  for (const auto& s : series) {
    auto& col = ds.channels[s.channel];
    col.assign(ds.hours, std::nullopt);
    if (s.values.empty()) continue;
    const auto offset = static_cast<std::size_t>(duration_cast<std::chrono::hours>(s.start - ds.start).count());
    for (std::size_t i = 0; i < s.values.size(); ++i) col[offset + i] = s.values[i];
  }
  return ds;
}

std::optional<double> HourlyDataset::value(Channel c, std::size_t i) const {
  const auto it = channels.find(c);
  if (it == channels.end() || i >= it->second.size()) return std::nullopt;
  return it->second[i];
}

std::map<Channel, MeterSeries> load_meter_csv(std::istream& in) {
  std::map<Channel, MeterSeries> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    auto bad = [&](const char* why) {
      return std::runtime_error("meter csv line " + std::to_string(line_no) + ": " + why);
    };
    if (c2 == std::string::npos) throw bad("expected timestamp,channel,value");
    const std::string_view ts(line.data(), c1);
    const std::string_view ch(line.data() + c1 + 1, c2 - c1 - 1);
    const std::string_view val(line.data() + c2 + 1, line.size() - c2 - 1);
    const auto t = parse_iso8601(ts);
    if (!t) {
      if (line_no == 1 || out.empty()) continue;  // header row
      throw bad("bad timestamp");
    }
    const auto channel = channel_from_name(ch);
    if (!channel) throw bad("unknown channel");
    double v = 0.0;
    const auto res = std::from_chars(val.data(), val.data() + val.size(), v);
    if (res.ec != std::errc{} || res.ptr != val.data() + val.size()) throw bad("bad value");
    auto& s = out[*channel];
    s.channel = *channel;
    s.samples.push_back({*t, v});
  }
  for (auto& [c, s] : out) {
    std::stable_sort(s.samples.begin(), s.samples.end(), [](const Sample& a, const Sample& b) { return a.at < b.at; });
    s.validate();
  }
  return out;
}

void write_meter_csv(std::ostream& out, const std::map<Channel, MeterSeries>& series) {
  out << "timestamp,channel,value\n";
  char buf[64];
  for (const auto& [c, s] : series) {
    for (const auto& sample : s.samples) {
      // Shortest text that reads back to the same double.
      const auto end = std::to_chars(buf, buf + sizeof buf, sample.value).ptr;
      out << format_iso8601(sample.at) << ',' << csv_name(c) << ',' << std::string_view(buf, end - buf) << '\n';
    }
  }
}

HourlyDataset hourly_dataset(const std::map<Channel, MeterSeries>& series) {
  std::vector<HourlySeries> hourly;
  for (const auto& [c, s] : series) hourly.push_back(resample_hourly(s));
  return HourlyDataset::align(hourly);
}

PearsonResult pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson needs equal-length series");
  if (a.size() < 2) throw std::invalid_argument("pearson needs at least two samples");
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  PearsonResult out;
  out.n = a.size();
  const bool a_const = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
  const bool b_const = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
  if (a_const || b_const || saa == 0.0 || sbb == 0.0) return out;
  out.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return out;
}

std::vector<ChannelPair> default_pairs() {
  return {{Channel::Electricity, Channel::Temperature}, {Channel::Electricity, Channel::Humidity},
          {Channel::Heating, Channel::Temperature},     {Channel::Heating, Channel::Humidity},
          {Channel::Cooling, Channel::Temperature},     {Channel::Cooling, Channel::Humidity}};
}

std::vector<WeeklyCorrelation> weekly_correlations(const HourlyDataset& data, std::span<const ChannelPair> pairs,
                                                   double max_missing_fraction) {
  const std::size_t weeks = data.hours / kWeekHours;
  if (weeks == 0) throw EmptyResult("dataset holds no complete 168-hour week");
  const auto allowed = static_cast<std::size_t>(std::floor(max_missing_fraction * kWeekHours));
  std::vector<WeeklyCorrelation> out;
  for (std::size_t w = 0; w < weeks; ++w) {
    for (const auto& [ca, cb] : pairs) {
      WeeklyCorrelation row;
      row.week = w;
      row.start = data.hour_at(w * kWeekHours);
      row.a = ca;
      row.b = cb;
      std::vector<double> va, vb;
      for (std::size_t h = w * kWeekHours; h < (w + 1) * kWeekHours; ++h) {
        const auto x = data.value(ca, h);
        const auto y = data.value(cb, h);
        if (x && y) {
          va.push_back(*x);
          vb.push_back(*y);
        }
      }
      row.samples = va.size();
      row.missing = kWeekHours - va.size();
      if (row.missing > allowed || va.size() < 2) {
        row.status = WindowStatus::Excluded;
      } else {
        row.r = pearson(va, vb).r;
        row.status = row.r ? WindowStatus::Ok : WindowStatus::Undefined;
      }
      out.push_back(row);
    }
  }
  return out;
}

std::vector<std::string> model_terms(ModelKind model) {
  if (model == ModelKind::MLR) return {"1", "X", "Y"};
  return {"1", "X", "Y", "X^2", "Y^2", "XY"};
}

double term_value(std::string_view term, double x, double y) {
  if (term == "1") return 1.0;
  if (term == "X") return x;
  if (term == "Y") return y;
  if (term == "X^2") return x * x;
  if (term == "Y^2") return y * y;
  if (term == "XY") return x * y;
  throw std::invalid_argument("unknown term " + std::string(term));
}

double RegressionFit::predict(double x, double y) const {
  double v = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) v += coefficients[i] * term_value(terms[i], x, y);
  return v;
}

namespace {

// Least squares in centred coordinates u = X - mean(X), v = Y - mean(Y);
// coefficients are mapped back to the raw basis afterwards. Columns are
// scaled to unit RMS before forming the normal equations, which are solved by
// full-pivot LU with an explicit rank check and refined against the true
// residual.
RegressionOutcome fit_model(ModelKind model, std::span<const double> y, std::span<const double> x1,
                            std::span<const double> x2) {
  if (y.size() != x1.size() || y.size() != x2.size()) throw std::invalid_argument("regression inputs differ in length");
  const auto terms = model_terms(model);
  const std::size_t n = y.size();
  const std::size_t p = terms.size();
  if (n <= p) throw std::invalid_argument("regression needs more samples than terms");

  const auto dn = static_cast<double>(n);
  const double mx = std::accumulate(x1.begin(), x1.end(), 0.0) / dn;
  const double my = std::accumulate(x2.begin(), x2.end(), 0.0) / dn;
  const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / dn;

  Eigen::MatrixXd design(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x1[i] - mx;
    const double v = x2[i] - my;
    for (std::size_t j = 0; j < p; ++j) design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        term_value(terms[j], u, v);
  }
  Eigen::VectorXd scale(p);
  RegressionOutcome outcome;
  for (std::size_t j = 0; j < p; ++j) {
    const double rms = design.col(static_cast<Eigen::Index>(j)).norm() / std::sqrt(dn);
    if (!(rms > 0.0)) {
      outcome.collinear_terms = {"1", terms[j]};
      return outcome;
    }
    scale(static_cast<Eigen::Index>(j)) = rms;
    design.col(static_cast<Eigen::Index>(j)) /= rms;
  }

  const Eigen::Map<const Eigen::VectorXd> target(y.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd normal = design.transpose() * design / dn;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
  lu.setThreshold(1e-10);
  if (lu.rank() < static_cast<Eigen::Index>(p)) {
    const Eigen::MatrixXd kernel = lu.kernel();
    std::set<std::size_t> involved;
    for (Eigen::Index k = 0; k < kernel.cols(); ++k) {
      const Eigen::VectorXd v = kernel.col(k).normalized();
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (std::fabs(v(j)) > 1e-6) involved.insert(static_cast<std::size_t>(j));
      }
    }
    for (const auto j : involved) outcome.collinear_terms.push_back(terms[j]);
    return outcome;
  }

  Eigen::VectorXd beta = lu.solve(design.transpose() * target / dn);
  for (int iter = 0; iter < 3; ++iter) {
    const Eigen::VectorXd residual = target - design * beta;
    beta += lu.solve(design.transpose() * residual / dn);
  }
  const Eigen::VectorXd residual = target - design * beta;

  RegressionFit fit;
  fit.model = model;
  fit.terms = terms;
  fit.n = n;
  std::vector<double> b(p);
  for (std::size_t j = 0; j < p; ++j) b[j] = beta(static_cast<Eigen::Index>(j)) / scale(static_cast<Eigen::Index>(j));

  const bool constant_y = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  if (constant_y) {
    fit.coefficients.assign(p, 0.0);
    fit.coefficients[0] = y[0];
    fit.r_squared = 0.0;
    outcome.fit = fit;
    return outcome;
  }

  if (model == ModelKind::MLR) {
    fit.coefficients = {b[0] - b[1] * mx - b[2] * my, b[1], b[2]};
  } else {
    fit.coefficients = {
        b[0] - b[1] * mx - b[2] * my + b[3] * mx * mx + b[4] * my * my + b[5] * mx * my,
        b[1] - 2.0 * b[3] * mx - b[5] * my,
        b[2] - 2.0 * b[4] * my - b[5] * mx,
        b[3],
        b[4],
        b[5],
    };
  }
  double ss_tot = 0.0;
  for (const double v : y) ss_tot += (v - mean_y) * (v - mean_y);
  const double ss_res = residual.squaredNorm();
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 0.0;
  outcome.fit = fit;
  return outcome;
}

}  // namespace

RegressionOutcome fit_mlr(std::span<const double> y, std::span<const double> x1, std::span<const double> x2) {
  return fit_model(ModelKind::MLR, y, x1, x2);
}

RegressionOutcome fit_mpr(std::span<const double> y, std::span<const double> x1, std::span<const double> x2,
                          int degree) {
  if (degree != 2) throw std::invalid_argument("only degree-2 polynomial regression is supported");
  return fit_model(ModelKind::MPR, y, x1, x2);
}

std::vector<DailyRecord> daily_aggregate(const HourlyDataset& data) {
  using namespace std::chrono;
  std::vector<DailyRecord> out;
  if (data.hours == 0) return out;
  std::map<sys_days, std::size_t> index;
  std::map<sys_days, std::size_t> hours_in_data;
  std::map<sys_days, std::map<Channel, std::pair<double, std::size_t>>> acc;
  std::map<sys_days, std::size_t> complete_hours;
  for (std::size_t h = 0; h < data.hours; ++h) {
    const auto day = day_of(data.hour_at(h));
    ++hours_in_data[day];
    bool complete = true;
    for (const auto& [c, col] : data.channels) {
      if (col[h]) {
        auto& [sum, count] = acc[day][c];
        sum += *col[h];
        ++count;
      } else {
        complete = false;
      }
    }
    if (complete) ++complete_hours[day];
  }
  for (const auto& [day, n] : hours_in_data) {
    DailyRecord rec;
    rec.day = day;
    rec.hours_present = complete_hours[day];
    rec.partial = rec.hours_present != 24;
    for (const auto& [c, sc] : acc[day]) {
      const auto& [sum, count] = sc;
      rec.values[c] = is_energy(c) ? sum : (count ? sum / static_cast<double>(count) : 0.0);
    }
    out.push_back(rec);
  }
  return out;
}

Calendar Calendar::academic_2011() {
  using namespace std::chrono;
  Calendar c;
  c.periods.push_back({Subset::FallSemester, sys_days{2011y / August / 30}, sys_days{2011y / December / 9}});
  c.periods.push_back({Subset::SummerHoliday, sys_days{2011y / May / 10}, sys_days{2011y / August / 29}});
  return c;
}

std::vector<SubsetStats> split_subsets(const HourlyDataset& data, const Calendar& calendar) {
  using namespace std::chrono;
  const Subset order[] = {Subset::OfficeHours, Subset::AfterHours, Subset::Weekend, Subset::FallSemester,
                          Subset::SummerHoliday};
  std::map<Subset, SubsetStats> stats;
  std::map<Subset, std::set<sys_days>> days;
  std::map<Subset, std::map<Channel, std::size_t>> counts;
  for (const auto s : order) stats[s].subset = s;

  auto add = [&](Subset s, std::size_t h, sys_days day) {
    auto& st = stats[s];
    ++st.hours;
    days[s].insert(day);
    for (const auto& [c, col] : data.channels) {
      if (!col[h]) continue;
      st.totals[c] += *col[h];
      ++counts[s][c];
    }
  };
  for (std::size_t h = 0; h < data.hours; ++h) {
    const auto t = data.hour_at(h);
    const auto day = day_of(t);
    const weekday wd{day};
    const auto hour = static_cast<int>(duration_cast<hours>(time_of_day(t)).count());
    if (wd == Saturday || wd == Sunday) {
      add(Subset::Weekend, h, day);
    } else if (hour >= calendar.office_start_hour && hour < calendar.office_end_hour) {
      add(Subset::OfficeHours, h, day);
    } else {
      add(Subset::AfterHours, h, day);
    }
    for (const auto& p : calendar.periods) {
      if (day >= p.first && day < p.end) add(p.subset, h, day);
    }
  }
  std::vector<SubsetStats> out;
  for (const auto s : order) {
    auto st = stats[s];
    st.days = days[s].size();
    st.empty = st.hours == 0;
    for (auto& [c, total] : st.totals) {
      const auto n = counts[s][c];
      if (is_energy(c)) {
        st.per_24h[c] = n ? total / static_cast<double>(n) * 24.0 : 0.0;
        st.daily_mean[c] = st.days ? total / static_cast<double>(st.days) : 0.0;
      } else {
        st.per_24h[c] = n ? total / static_cast<double>(n) : 0.0;
        st.daily_mean[c] = st.per_24h[c];
      }
    }
    // Condition channels report means only.
    for (auto it = st.totals.begin(); it != st.totals.end();) {
      it = is_energy(it->first) ? std::next(it) : st.totals.erase(it);
    }
    out.push_back(st);
  }
  return out;
}

HourlyDataset synthetic_dataset(Timestamp start, std::size_t hours, std::uint64_t seed) {
  using namespace std::chrono;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  HourlyDataset ds;
  ds.start = floor<std::chrono::hours>(start);
  ds.hours = hours;
  for (const auto c : kAllChannels) ds.channels[c].assign(hours, std::nullopt);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t h = 0; h < hours; ++h) {
    const auto t = ds.hour_at(h);
    const auto day = day_of(t);
    const double doy = static_cast<double>((day - sys_days{year_month_day{day}.year() / January / 1}).count());
    const double hod = static_cast<double>(duration_cast<std::chrono::hours>(time_of_day(t)).count());
    const double season = std::sin(two_pi * (doy - 105.0) / 365.0);
    const double diurnal = std::sin(two_pi * (hod - 9.0) / 24.0);
    const double temp = 57.0 + 24.0 * season + 8.0 * diurnal + 3.0 * noise(rng);
    const double humid = std::clamp(66.0 + 8.0 * season - 10.0 * diurnal + 5.0 * noise(rng), 5.0, 100.0);
    const weekday wd{day};
    const bool weekend = wd == Saturday || wd == Sunday;
    const bool office = !weekend && hod >= 8 && hod < 20;
    const double elec = 310.0 + (office ? 45.0 : 0.0) + 0.15 * temp + 12.0 * noise(rng);
    const double heat = std::max(0.0, (62.0 - temp) * 38000.0 + (office ? -40000.0 : 0.0) + 25000.0 * noise(rng));
    const double cool = std::max(0.0, (temp - 58.0) * 52000.0 + 0.9 * humid * 1000.0 + 30000.0 * noise(rng));
    ds.channels[Channel::Temperature][h] = temp;
    ds.channels[Channel::Humidity][h] = humid;
    ds.channels[Channel::Electricity][h] = elec;
    ds.channels[Channel::Heating][h] = heat;
    ds.channels[Channel::Cooling][h] = cool;
  }
  return ds;
}

std::map<Channel, MeterSeries> to_series(const HourlyDataset& data) {
  std::map<Channel, MeterSeries> out;
  for (const auto& [c, col] : data.channels) {
    auto& s = out[c];
    s.channel = c;
    for (std::size_t h = 0; h < col.size(); ++h) {
      if (col[h]) s.samples.push_back({data.hour_at(h), *col[h]});
    }
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string iso_day(std::chrono::sys_days d) { return format_iso8601(Timestamp{d}).substr(0, 10); }

}  // namespace

std::string correlations_csv(std::span<const WeeklyCorrelation> rows) {
  std::ostringstream os;
  os << "week,start,pair,window_hours,samples,missing,status,r\n";
  for (const auto& r : rows) {
    os << r.week << ',' << format_iso8601(r.start) << ',' << letter(r.a) << letter(r.b) << ',' << r.window_hours
       << ',' << r.samples << ',' << r.missing << ',' << to_string(r.status) << ',' << (r.r ? fixed(*r.r) : "NA")
       << '\n';
  }
  return os.str();
}

std::string daily_csv(std::span<const DailyRecord> rows) {
  std::ostringstream os;
  os << "day,hours_present,partial,X_mean,Y_mean,Z_total,H_total,C_total\n";
  for (const auto& r : rows) {
    os << iso_day(r.day) << ',' << r.hours_present << ',' << (r.partial ? 1 : 0);
    for (const auto c : kAllChannels) {
      const auto it = r.values.find(c);
      os << ',' << (it == r.values.end() ? std::string("NA") : num(it->second));
    }
    os << '\n';
  }
  return os.str();
}

std::string subsets_csv(std::span<const SubsetStats> rows) {
  std::ostringstream os;
  os << "subset,hours,days,empty,channel,total,per_24h,daily_mean\n";
  for (const auto& s : rows) {
    for (const auto c : kAllChannels) {
      const auto p = s.per_24h.find(c);
      if (p == s.per_24h.end()) continue;
      const auto t = s.totals.find(c);
      os << to_string(s.subset) << ',' << s.hours << ',' << s.days << ',' << (s.empty ? 1 : 0) << ',' << letter(c)
         << ',' << (t == s.totals.end() ? std::string("NA") : num(t->second)) << ',' << num(p->second) << ','
         << num(s.daily_mean.at(c)) << '\n';
    }
    if (s.per_24h.empty()) os << to_string(s.subset) << ',' << s.hours << ',' << s.days << ",1,,NA,NA,NA\n";
  }
  return os.str();
}

std::string regression_csv(const HourlyDataset& data) {
  const auto daily = daily_aggregate(data);
  std::ostringstream os;
  os << "target,model,n,r_squared,terms,coefficients,collinear\n";
  for (const auto target : {Channel::Electricity, Channel::Heating, Channel::Cooling}) {
    std::vector<double> x, y, z;
    for (const auto& d : daily) {
      if (d.partial) continue;
      const auto vx = d.values.find(Channel::Temperature);
      const auto vy = d.values.find(Channel::Humidity);
      const auto vz = d.values.find(target);
      if (vx == d.values.end() || vy == d.values.end() || vz == d.values.end()) continue;
      x.push_back(vx->second);
      y.push_back(vy->second);
      z.push_back(vz->second);
    }
    for (const auto model : {ModelKind::MPR, ModelKind::MLR}) {
      os << letter(target) << ',' << to_string(model) << ',' << z.size() << ',';
      if (z.size() <= model_terms(model).size()) {
        os << "NA,,,insufficient data\n";
        continue;
      }
      const auto out = model == ModelKind::MLR ? fit_mlr(z, x, y) : fit_mpr(z, x, y);
      if (out.degenerate()) {
        os << "NA,,,";
        for (std::size_t i = 0; i < out.collinear_terms.size(); ++i) os << (i ? " " : "") << out.collinear_terms[i];
        os << '\n';
        continue;
      }
      os << fixed(out.fit->r_squared) << ',';
      for (std::size_t i = 0; i < out.fit->terms.size(); ++i) os << (i ? " " : "") << out.fit->terms[i];
      os << ',';
      for (std::size_t i = 0; i < out.fit->coefficients.size(); ++i) {
        os << (i ? " " : "") << num(out.fit->coefficients[i]);
      }
      os << ",\n";
    }
  }
  return os.str();
}

}  // namespace smartenergy::analytics
