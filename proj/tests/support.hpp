#pragma once

// Independent reference implementations and generators shared by the unit
// tests and the acceptance binary. Nothing here calls into the library code
// it is used to check.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "smartenergy/config.hpp"
#include "smartenergy/geoloc.hpp"
#include "smartenergy/policy.hpp"

namespace oracle {

inline std::filesystem::path source_dir() { return SMARTENERGY_SOURCE_DIR; }

// ---- NMEA ----

inline std::string xor_checksum(const std::string& payload) {
  int x = 0;
  for (std::size_t i = 0; i < payload.size(); ++i) x = x ^ static_cast<unsigned char>(payload[i]);
  char buf[3];
  std::snprintf(buf, sizeof buf, "%02X", x);
  return buf;
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out(1);
  for (char c : s) {
    if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

// Degrees for a ddmm.mmmm / dddmm.mmmm field with its hemisphere letter.
inline std::optional<double> coordinate(const std::string& field, const std::string& hemi, bool latitude) {
  static const std::regex re(R"(^(\d{2,3})(\d{2}(?:\.\d+)?)$)");
  std::smatch m;
  if (!std::regex_match(field, m, re)) return std::nullopt;
  if (latitude ? (hemi != "N" && hemi != "S") : (hemi != "E" && hemi != "W")) return std::nullopt;
  const double minutes = std::stod(m[2].str());
  if (minutes >= 60.0) return std::nullopt;
  const double deg = std::stoi(m[1].str()) + minutes / 60.0;
  if (deg > (latitude ? 90.0 : 180.0)) return std::nullopt;
  return (hemi == "S" || hemi == "W") ? -deg : deg;
}

// The position a receiver actually reported, or nullopt when the line is not
// a checksum-valid GGA (quality > 0) or RMC (status A) sentence.
inline std::optional<smartenergy::geoloc::LatLon> genuine_fix(std::string line) {
  if (!line.empty() && line.back() == '\n') line.pop_back();
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() < 4 || line[0] != '$' || line[line.size() - 3] != '*') return std::nullopt;
  const std::string payload = line.substr(1, line.size() - 4);
  for (unsigned char c : payload) {
    if (c < 32 || c > 126 || c == '$' || c == '*') return std::nullopt;
  }
  const std::string given = line.substr(line.size() - 2);
  if (!std::isxdigit(static_cast<unsigned char>(given[0])) || !std::isxdigit(static_cast<unsigned char>(given[1]))) {
    return std::nullopt;
  }
  if (std::stoi(given, nullptr, 16) != std::stoi(xor_checksum(payload), nullptr, 16)) return std::nullopt;
  const auto f = split_commas(payload);
  static const std::regex head(R"(^[A-Z0-9]{2}(GGA|RMC)$)");
  static const std::regex hms(R"(^([01]\d|2[0-3])[0-5]\d[0-5]\d(\.\d+)?$)");
  std::smatch m;
  if (!std::regex_match(f[0], m, head)) return std::nullopt;
  if (m[1] == "GGA") {
    if (f.size() != 15 || !std::regex_match(f[1], hms)) return std::nullopt;
    if (!std::regex_match(f[6], std::regex(R"(^[1-9]$)"))) return std::nullopt;
    if (!std::regex_match(f[7], std::regex(R"(^\d*$)"))) return std::nullopt;
    const auto lat = coordinate(f[2], f[3], true);
    const auto lon = coordinate(f[4], f[5], false);
    if (!lat || !lon) return std::nullopt;
    return smartenergy::geoloc::LatLon{*lat, *lon};
  }
  if (f.size() < 12 || f.size() > 14 || !std::regex_match(f[1], hms) || f[2] != "A") return std::nullopt;
  if (!std::regex_match(f[9], std::regex(R"(^(\d{6})?$)"))) return std::nullopt;
  const auto lat = coordinate(f[3], f[4], true);
  const auto lon = coordinate(f[5], f[6], false);
  if (!lat || !lon) return std::nullopt;
  return smartenergy::geoloc::LatLon{*lat, *lon};
}

inline std::string framed(const std::string& payload) { return "$" + payload + "*" + xor_checksum(payload); }

inline std::string ddmm(double deg, int width, int decimals) {
  const double a = std::fabs(deg);
  int d = static_cast<int>(a);
  double min = (a - d) * 60.0;
  const double scale = std::pow(10.0, decimals);
  min = std::round(min * scale) / scale;
  if (min >= 60.0) {
    min -= 60.0;
    ++d;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d%0*.*f", width, d, decimals + 3, decimals, min);
  return buf;
}

// A random well-formed GGA or RMC sentence.
inline std::string valid_sentence(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lat(-89.9, 89.9), lon(-179.9, 179.9);
  std::uniform_int_distribution<int> h(0, 23), ms(0, 59), dec(1, 4), q(1, 8);
  const double la = lat(rng), lo = lon(rng);
  char t[16];
  std::snprintf(t, sizeof t, "%02d%02d%02d", h(rng), ms(rng), ms(rng));
  const std::string ns = la < 0 ? "S" : "N", ew = lo < 0 ? "W" : "E";
  const int d = dec(rng);
  if (rng() % 2) {
    return framed("GPGGA," + std::string(t) + "," + ddmm(la, 2, d) + "," + ns + "," + ddmm(lo, 3, d) + "," + ew +
                  "," + std::to_string(q(rng)) + ",08,0.9,545.4,M,46.9,M,,");
  }
  return framed("GPRMC," + std::string(t) + ",A," + ddmm(la, 2, d) + "," + ns + "," + ddmm(lo, 3, d) + "," + ew +
                ",022.4,084.4,230394,003.1,W");
}

// Valid sentences, single-byte damage, field surgery with the checksum
// recomputed, and raw noise.
inline std::string fuzz_case(std::mt19937_64& rng) {
  std::string s = valid_sentence(rng);
  std::uniform_int_distribution<int> byte(0, 255);
  auto pos = [&](std::size_t n) { return static_cast<std::size_t>(rng() % std::max<std::size_t>(n, 1)); };
  switch (rng() % 9) {
    case 0:
      return s;
    case 1:
      s[pos(s.size())] = static_cast<char>(byte(rng));
      return s;
    case 2:
      s.erase(pos(s.size()), 1);
      return s;
    case 3:
      s.insert(pos(s.size() + 1), 1, static_cast<char>(byte(rng)));
      return s;
    case 4:
      return s.substr(0, pos(s.size()));
    case 5: {
      // Edit one field and re-sign, so only field validation can catch it.
      auto f = split_commas(s.substr(1, s.size() - 4));
      static const char* junk[] = {"", "V", "A", "0", "9999.999", "4807.038", "12a", "-1", "N", "E", "W", "S",
                                   "6000.000", "9100.000", "18100.000", "01160.000", "235960", "246000", "1"};
      f[pos(f.size())] = junk[pos(std::size(junk))];
      std::string p;
      for (std::size_t i = 0; i < f.size(); ++i) p += (i ? "," : "") + f[i];
      return framed(p);
    }
    case 6: {
      auto f = split_commas(s.substr(1, s.size() - 4));
      if (rng() % 2) {
        f.erase(f.begin() + static_cast<std::ptrdiff_t>(pos(f.size())));
      } else {
        f.insert(f.begin() + static_cast<std::ptrdiff_t>(pos(f.size() + 1)), "");
      }
      std::string p;
      for (std::size_t i = 0; i < f.size(); ++i) p += (i ? "," : "") + f[i];
      return framed(p);
    }
    case 7: {
      std::string g(pos(90), ' ');
      for (auto& c : g) c = static_cast<char>(byte(rng));
      return g;
    }
    default: {
      const auto star = s.rfind('*');
      s[star + 1 + pos(2)] = "0123456789ABCDEFabcdefXZ"[pos(24)];
      return s;
    }
  }
}

// ---- geometry ----

// Central angle from the dot and cross products of unit vectors.
inline double vector_distance_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double k = std::numbers::pi / 180.0;
  const double a[3] = {std::cos(lat1 * k) * std::cos(lon1 * k), std::cos(lat1 * k) * std::sin(lon1 * k),
                       std::sin(lat1 * k)};
  const double b[3] = {std::cos(lat2 * k) * std::cos(lon2 * k), std::cos(lat2 * k) * std::sin(lon2 * k),
                       std::sin(lat2 * k)};
  const double cx = a[1] * b[2] - a[2] * b[1];
  const double cy = a[2] * b[0] - a[0] * b[2];
  const double cz = a[0] * b[1] - a[1] * b[0];
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return 6'371'000.0 * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

// Point at `bearing_deg` and `distance_m` from (lat, lon) on the same sphere.
inline smartenergy::geoloc::LatLon destination(double lat, double lon, double bearing_deg, double distance_m) {
  constexpr double k = std::numbers::pi / 180.0;
  const double d = distance_m / 6'371'000.0, th = bearing_deg * k, p1 = lat * k, l1 = lon * k;
  const double p2 = std::asin(std::sin(p1) * std::cos(d) + std::cos(p1) * std::sin(d) * std::cos(th));
  const double l2 = l1 + std::atan2(std::sin(th) * std::sin(d) * std::cos(p1), std::cos(d) - std::sin(p1) * std::sin(p2));
  return {p2 / k, l2 / k};
}

// ---- regression ----

using Big = boost::multiprecision::cpp_bin_float_50;

inline double term(const std::string& t, double x, double y) {
  if (t == "1") return 1.0;
  if (t == "X") return x;
  if (t == "Y") return y;
  if (t == "X^2") return x * x;
  if (t == "Y^2") return y * y;
  return x * y;
}

// Solves the raw normal equations (A^T A) b = A^T y in 50-digit arithmetic
// with Gauss-Jordan elimination and partial pivoting.
inline std::vector<double> normal_equations(const std::vector<std::string>& terms, const std::vector<double>& y,
                                            const std::vector<double>& x1, const std::vector<double>& x2) {
  const std::size_t p = terms.size();
  std::vector<std::vector<Big>> m(p, std::vector<Big>(p + 1, Big(0)));
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::vector<Big> row(p);
    for (std::size_t j = 0; j < p; ++j) row[j] = Big(term(terms[j], x1[i], x2[i]));
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) m[a][b] += row[a] * row[b];
      m[a][p] += row[a] * Big(y[i]);
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (abs(m[r][c]) > abs(m[piv][c])) piv = r;
    }
    std::swap(m[c], m[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const Big f = m[r][c] / m[c][c];
      for (std::size_t k = c; k <= p; ++k) m[r][k] -= f * m[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t j = 0; j < p; ++j) beta[j] = static_cast<double>(m[j][p] / m[j][j]);
  return beta;
}

inline double r_squared(const std::vector<std::string>& terms, const std::vector<double>& beta,
                        const std::vector<double>& y, const std::vector<double>& x1, const std::vector<double>& x2) {
  Big mean = 0;
  for (double v : y) mean += Big(v);
  mean /= y.size();
  Big ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    Big pred = 0;
    for (std::size_t j = 0; j < terms.size(); ++j) pred += Big(beta[j]) * Big(term(terms[j], x1[i], x2[i]));
    ss_res += (Big(y[i]) - pred) * (Big(y[i]) - pred);
    ss_tot += (Big(y[i]) - mean) * (Big(y[i]) - mean);
  }
  return static_cast<double>(1 - ss_res / ss_tot);
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  Big ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += Big(a[i]);
    mb += Big(b[i]);
  }
  ma /= a.size();
  mb /= b.size();
  Big sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (Big(a[i]) - ma) * (Big(b[i]) - mb);
    saa += (Big(a[i]) - ma) * (Big(a[i]) - ma);
    sbb += (Big(b[i]) - mb) * (Big(b[i]) - mb);
  }
  return static_cast<double>(sab / sqrt(saa * sbb));
}

// Weather-like predictors in daily-mean ranges and a noisy response.
struct Dataset {
  std::vector<double> y, x1, x2;
};

inline Dataset random_dataset(std::uint64_t seed, std::size_t n = 245) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> t(15.0, 95.0), h(20.0, 95.0), c(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  double b[6];
  for (auto& v : b) v = c(rng);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = t(rng), yv = h(rng);
    d.x1.push_back(x);
    d.x2.push_back(yv);
    d.y.push_back(b[0] + b[1] * x + b[2] * yv + 0.01 * b[3] * x * x + 0.01 * b[4] * yv * yv + 0.01 * b[5] * x * yv +
                  noise(rng) * 5.0);
  }
  return d;
}

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(std::fabs(want), 1e-12);
}

// ---- policy ----

struct Mandate {
  int depth;
  smartenergy::policy::Action action;
  std::string rule_id;
};

// Brute force: the shallowest applicable mandate decides, Off on a tie.
inline std::optional<smartenergy::devicenet::SwitchState> decide(
    const smartenergy::policy::RealmTree& realms, const std::vector<smartenergy::policy::PolicyRule>& rules,
    const smartenergy::devicenet::DeviceDescriptor& device, const smartenergy::policy::PresenceContext& ctx) {
  using smartenergy::policy::Action;
  std::vector<Mandate> live;
  for (const auto& r : rules) {
    if (std::find(r.devices.begin(), r.devices.end(), device.device_id) == r.devices.end()) continue;
    const auto chain = realms.chain(device.realm);
    if (std::find(chain.begin(), chain.end(), r.realm_id) == chain.end()) continue;
    if (r.condition && ctx.get(r.condition->user, r.condition->fence_id) != r.condition->required) continue;
    if (r.action == Action::Defer) continue;
    live.push_back({realms.get(r.realm_id).depth, r.action, r.rule_id});
  }
  if (live.empty()) return std::nullopt;
  int top = live.front().depth;
  for (const auto& m : live) top = std::min(top, m.depth);
  bool off = false;
  for (const auto& m : live) off = off || (m.depth == top && m.action == Action::MandateOff);
  return off ? smartenergy::devicenet::SwitchState::Off : smartenergy::devicenet::SwitchState::On;
}

// A random deployment: a realm tree, two buildings, a fleet with exempt
// devices, users bound to leaf realms and authored rules at every level.
inline smartenergy::config::Config random_world(std::mt19937_64& rng) {
  using namespace smartenergy;
  config::Config cfg;
  cfg.name = "random";
  cfg.fences = {{"home", {35.19, -97.47}, 300, 400, 3}, {"office", {35.21, -97.445}, 300, 400, 3}};
  const int n_realms = 3 + static_cast<int>(rng() % 8);
  cfg.realms.push_back({"r0", std::nullopt, "r0", 0});
  for (int i = 1; i < n_realms; ++i) {
    cfg.realms.push_back({"r" + std::to_string(i), "r" + std::to_string(rng() % i), "", 0});
  }
  cfg.realms = policy::RealmTree(cfg.realms).realms();
  const char* groups[] = {"lighting", "laptop", "desktop", "refrigerator"};
  const int n_dev = 3 + static_cast<int>(rng() % 10);
  for (int i = 0; i < n_dev; ++i) {
    devicenet::DeviceDescriptor d;
    d.device_id = "d" + std::to_string(i);
    d.name = d.device_id;
    d.building = rng() % 2 ? "home" : "office";
    d.group = groups[rng() % 4];
    d.realm = cfg.realms[rng() % cfg.realms.size()].realm_id;
    d.exempt = rng() % 4 == 0;
    d.state = rng() % 2 ? devicenet::SwitchState::On : devicenet::SwitchState::Off;
    d.profile = devicenet::ConstantPower{static_cast<double>(10 + rng() % 200)};
    cfg.devices.push_back(d);
  }
  const policy::RealmTree tree(cfg.realms);
  for (const char* mode : {"luxury", "moderate", "frugal"}) {
    for (const char* site : {"home", "office"}) {
      for (const char* g : groups) {
        energy::ModeRow row;
        row.fraction = std::string(mode) == "luxury" ? 1.0 : std::string(mode) == "moderate" ? 0.5 : 0.0;
        cfg.modes[mode][site][g] = row;
      }
    }
  }
  for (int u = 0; u < 2; ++u) {
    policy::UserProfile user;
    user.user_id = "u" + std::to_string(u);
    for (const char* site : {"home", "office"}) {
      const auto& realm = cfg.realms[rng() % cfg.realms.size()].realm_id;
      policy::UserBinding b{site, realm, {}};
      for (const auto& d : cfg.devices) {
        if (d.building == site && tree.is_ancestor_or_self(realm, d.realm) && rng() % 3) b.devices.push_back(d.device_id);
      }
      if (!b.devices.empty()) user.bindings.push_back(b);
    }
    cfg.users.push_back(user);
  }
  for (auto& u : cfg.users) u.mode = cfg.user_mode(rng() % 2 ? "luxury" : "frugal");
  const int n_rules = static_cast<int>(rng() % 12);
  for (int i = 0; i < n_rules; ++i) {
    policy::PolicyRule r;
    r.rule_id = "rule" + std::to_string(i);
    r.realm_id = cfg.realms[rng() % cfg.realms.size()].realm_id;
    for (const auto& d : cfg.devices) {
      if (tree.is_ancestor_or_self(r.realm_id, d.realm) && rng() % 2) r.devices.push_back(d.device_id);
    }
    if (r.devices.empty()) continue;
    r.selector = "";
    for (const auto& id : r.devices) r.selector += (r.selector.empty() ? "" : ",") + id;
    r.action = static_cast<policy::Action>(rng() % 3);
    if (rng() % 3) {
      r.condition = policy::PresenceCondition{"u" + std::to_string(rng() % 2), rng() % 2 ? "home" : "office",
                                              rng() % 2 ? presence::Occupancy::Inside : presence::Occupancy::Outside};
    }
    cfg.rules.push_back(r);
  }
  return cfg;
}

}  // namespace oracle
