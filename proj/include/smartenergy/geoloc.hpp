#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "smartenergy/timeutil.hpp"

// NMEA-0183 ingestion and great-circle geometry.
namespace smartenergy::geoloc {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const LatLon&) const = default;
};

enum class FixQuality { NoFix, Fix, Void };

const char* to_string(FixQuality q);

struct GeoFix {
  Seconds time_of_day{0};
  double latitude = 0.0;
  double longitude = 0.0;
  FixQuality quality = FixQuality::NoFix;
  std::string source_sentence;  // talker+type, e.g. "GPGGA"

  LatLon position() const { return {latitude, longitude}; }
};

// A framed sentence whose checksum has already been verified.
struct NmeaSentence {
  std::string raw_line;
  std::string talker_type;
  std::vector<std::string> fields;  // fields after the talker/type word
  std::string checksum;             // two uppercase hex digits
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ParseStatus { Ok, Unsupported, ChecksumMismatch, FormatError, VoidFix };

const char* to_string(ParseStatus s);

struct ParseResult {
  ParseStatus status = ParseStatus::FormatError;
  std::optional<GeoFix> fix;  // set only when status == Ok
  std::string detail;

  bool ok() const { return status == ParseStatus::Ok; }
};

// Uppercase hex XOR of every payload byte. Empty payload yields "00".
std::string nmea_checksum(std::string_view payload);

// "$<payload>*<checksum>" without line terminator.
std::string frame_sentence(std::string_view payload);

// Splits and checksum-verifies one line. Returns the failing status when the
// line is not a well-formed sentence.
ParseStatus frame(std::string_view line, NmeaSentence& out, std::string* detail = nullptr);

// Converts ddmm.mmmm / dddmm.mmmm to signed decimal degrees. Throws FormatError.
double ddmm_to_degrees(std::string_view coordinate, char hemisphere);

ParseResult parse_nmea(std::string_view line);

// Builds a checksummed GGA sentence for a valid fix; used by scenario tooling.
std::string make_gga(Seconds time_of_day, LatLon position, int satellites = 8);

// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_m(LatLon a, LatLon b);

}  // namespace smartenergy::geoloc
