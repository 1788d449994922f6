#include "smartenergy/geoloc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace smartenergy::geoloc {

const char* to_string(FixQuality q) {
  switch (q) {
    case FixQuality::NoFix: return "NoFix";
    case FixQuality::Fix: return "Fix";
    case FixQuality::Void: return "Void";
  }
  return "?";
}

const char* to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Ok: return "Ok";
    case ParseStatus::Unsupported: return "Unsupported";
    case ParseStatus::ChecksumMismatch: return "ChecksumMismatch";
    case ParseStatus::FormatError: return "FormatError";
    case ParseStatus::VoidFix: return "VoidFix";
  }
  return "?";
}

namespace {

constexpr char kHex[] = "0123456789ABCDEF";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Digits with at most one '.' that is followed by at least one digit.
bool is_decimal(std::string_view s) {
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return all_digits(s);
  return all_digits(s.substr(0, dot)) && all_digits(s.substr(dot + 1));
}

std::vector<std::string> split_fields(std::string_view payload) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = payload.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(payload.substr(start));
      return out;
    }
    out.emplace_back(payload.substr(start, comma - start));
    start = comma + 1;
  }
}

// hhmmss or hhmmss.sss; fractional seconds are dropped.
std::optional<Seconds> parse_utc_time(std::string_view s) {
  if (s.size() < 6 || !is_decimal(s) || (s.size() > 6 && s[6] != '.')) return std::nullopt;
  const int hh = (s[0] - '0') * 10 + (s[1] - '0');
  const int mm = (s[2] - '0') * 10 + (s[3] - '0');
  const int ss = (s[4] - '0') * 10 + (s[5] - '0');
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  return Seconds{hh * 3600 + mm * 60 + ss};
}

char hemisphere_of(const std::string& field, const char* allowed) {
  if (field.size() != 1 || (field[0] != allowed[0] && field[0] != allowed[1])) {
    throw FormatError(std::string("hemisphere must be ") + allowed[0] + " or " + allowed[1]);
  }
  return field[0];
}

ParseResult fail(ParseStatus status, std::string detail) {
  ParseResult r;
  r.status = status;
  r.detail = std::move(detail);
  return r;
}

ParseResult parse_gga(const NmeaSentence& s) {
  const auto& f = s.fields;
  if (f.size() != 14) return fail(ParseStatus::FormatError, "GGA expects 14 fields");
  const auto tod = parse_utc_time(f[0]);
  if (!tod) return fail(ParseStatus::FormatError, "bad UTC time");
  if (f[5].size() != 1 || !all_digits(f[5])) return fail(ParseStatus::FormatError, "bad fix quality");
  if (!f[6].empty() && !all_digits(f[6])) return fail(ParseStatus::FormatError, "bad satellite count");

  GeoFix fix;
  fix.time_of_day = *tod;
  fix.source_sentence = s.talker_type;
  if (f[5] == "0") {
    fix.quality = FixQuality::NoFix;
  } else {
    try {
      fix.latitude = ddmm_to_degrees(f[1], hemisphere_of(f[2], "NS"));
      fix.longitude = ddmm_to_degrees(f[3], hemisphere_of(f[4], "EW"));
    } catch (const FormatError& e) {
      return fail(ParseStatus::FormatError, e.what());
    }
    fix.quality = FixQuality::Fix;
  }
  ParseResult r;
  r.status = ParseStatus::Ok;
  r.fix = fix;
  return r;
}

ParseResult parse_rmc(const NmeaSentence& s) {
  const auto& f = s.fields;
  if (f.size() < 11 || f.size() > 13) return fail(ParseStatus::FormatError, "RMC expects 11-13 fields");
  const auto tod = parse_utc_time(f[0]);
  if (!tod) return fail(ParseStatus::FormatError, "bad UTC time");
  if (f[1] == "V") return fail(ParseStatus::VoidFix, "receiver reports void data");
  if (f[1] != "A") return fail(ParseStatus::FormatError, "bad status field");
  if (!f[8].empty() && (f[8].size() != 6 || !all_digits(f[8]))) {
    return fail(ParseStatus::FormatError, "bad date");
  }
  GeoFix fix;
  fix.time_of_day = *tod;
  fix.source_sentence = s.talker_type;
  try {
    fix.latitude = ddmm_to_degrees(f[2], hemisphere_of(f[3], "NS"));
    fix.longitude = ddmm_to_degrees(f[4], hemisphere_of(f[5], "EW"));
  } catch (const FormatError& e) {
    return fail(ParseStatus::FormatError, e.what());
  }
  fix.quality = FixQuality::Fix;
  ParseResult r;
  r.status = ParseStatus::Ok;
  r.fix = fix;
  return r;
}

std::string format_coordinate(double degrees, int degree_digits) {
  // Work in integer micro-minutes so rounding never yields "60.000000".
  const auto micro = static_cast<long long>(std::llround(std::fabs(degrees) * 60.0 * 1e6));
  const long long whole_deg = micro / 60'000'000LL;
  const long long rem = micro % 60'000'000LL;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*lld%02lld.%06lld", degree_digits, whole_deg, rem / 1'000'000LL,
                rem % 1'000'000LL);
  return buf;
}

}  // namespace

std::string nmea_checksum(std::string_view payload) {
  unsigned char x = 0;
  for (const char c : payload) x ^= static_cast<unsigned char>(c);
  return {kHex[x >> 4], kHex[x & 0x0F]};
}

std::string frame_sentence(std::string_view payload) {
  std::string out;
  out.reserve(payload.size() + 4);
  out += '$';
  out += payload;
  out += '*';
  out += nmea_checksum(payload);
  return out;
}

ParseStatus frame(std::string_view line, NmeaSentence& out, std::string* detail) {
  auto note = [&](const char* msg) {
    if (detail) *detail = msg;
  };
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.size() < 4 || line.front() != '$') {
    note("missing '$' framing");
    return ParseStatus::FormatError;
  }
  const auto star = line.size() - 3;
  if (line[star] != '*' || hex_value(line[star + 1]) < 0 || hex_value(line[star + 2]) < 0) {
    note("missing '*hh' checksum suffix");
    return ParseStatus::FormatError;
  }
  const auto payload = line.substr(1, star - 1);
  for (const char c : payload) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u > 0x7E || c == '$' || c == '*') {
      note("illegal byte in payload");
      return ParseStatus::FormatError;
    }
  }
  const int expected = hex_value(line[star + 1]) * 16 + hex_value(line[star + 2]);
  const auto computed = nmea_checksum(payload);
  if (hex_value(computed[0]) * 16 + hex_value(computed[1]) != expected) {
    note("checksum mismatch");
    return ParseStatus::ChecksumMismatch;
  }
  auto fields = split_fields(payload);
  const auto& head = fields.front();
  const bool head_ok = head.size() == 5 && std::all_of(head.begin(), head.end(), [](char c) {
                         return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
                       });
  if (!head_ok) {
    note("bad talker/type word");
    return ParseStatus::FormatError;
  }
  out.raw_line = std::string(line);
  out.talker_type = head;
  fields.erase(fields.begin());
  out.fields = std::move(fields);
  out.checksum = computed;
  return ParseStatus::Ok;
}

double ddmm_to_degrees(std::string_view coordinate, char hemisphere) {
  if (!is_decimal(coordinate)) throw FormatError("coordinate is not a decimal number");
  const auto dot = coordinate.find('.');
  const auto int_len = dot == std::string_view::npos ? coordinate.size() : dot;
  if (int_len < 4 || int_len > 5) throw FormatError("coordinate must be ddmm.mmmm or dddmm.mmmm");

  int degrees = 0;
  for (std::size_t i = 0; i + 2 < int_len; ++i) degrees = degrees * 10 + (coordinate[i] - '0');
  double minutes = 0.0;
  const auto min_text = coordinate.substr(int_len - 2);
  const auto [ptr, ec] = std::from_chars(min_text.data(), min_text.data() + min_text.size(), minutes);
  if (ec != std::errc{} || ptr != min_text.data() + min_text.size()) {
    throw FormatError("unreadable minutes");
  }
  if (minutes >= 60.0) throw FormatError("minutes must be below 60");

  double value = degrees + minutes / 60.0;
  switch (hemisphere) {
    case 'N':
    case 'S':
      if (value > 90.0) throw FormatError("latitude out of range");
      break;
    case 'E':
    case 'W':
      if (value > 180.0) throw FormatError("longitude out of range");
      break;
    default:
      throw FormatError("hemisphere must be N, S, E or W");
  }
  if (hemisphere == 'S' || hemisphere == 'W') value = -value;
  return value;
}

ParseResult parse_nmea(std::string_view line) {
  NmeaSentence sentence;
  std::string detail;
  const auto status = frame(line, sentence, &detail);
  if (status != ParseStatus::Ok) return fail(status, detail);
  const std::string_view type = std::string_view(sentence.talker_type).substr(2);
  if (type == "GGA") return parse_gga(sentence);
  if (type == "RMC") return parse_rmc(sentence);
  return fail(ParseStatus::Unsupported, "sentence type " + sentence.talker_type + " ignored");
}

std::string make_gga(Seconds time_of_day, LatLon position, int satellites) {
  const long long tod = time_of_day.count() % 86400;
  char head[48];
  std::snprintf(head, sizeof head, "GPGGA,%02lld%02lld%02lld,", tod / 3600, (tod / 60) % 60, tod % 60);
  char tail[64];
  std::snprintf(tail, sizeof tail, ",1,%02d,0.9,150.0,M,-33.0,M,,", satellites);
  std::string payload = head;
  payload += format_coordinate(position.lat, 2);
  payload += position.lat < 0 ? ",S," : ",N,";
  payload += format_coordinate(position.lon, 3);
  payload += position.lon < 0 ? ",W" : ",E";
  payload += tail;
  return frame_sentence(payload);
}

double haversine_m(LatLon a, LatLon b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double phi1 = a.lat * rad;
  const double phi2 = b.lat * rad;
  const double dphi = (b.lat - a.lat) * rad;
  const double dlambda = (b.lon - a.lon) * rad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace smartenergy::geoloc
