#include "doctest.h"
#include "support.hpp"

#include "smartenergy/geoloc.hpp"

using namespace smartenergy::geoloc;

TEST_CASE("checksum of small payloads") {
  CHECK(nmea_checksum("") == "00");
  CHECK(nmea_checksum("A") == "41");
  CHECK(nmea_checksum("AB") == "03");
  CHECK(nmea_checksum("AB") == oracle::xor_checksum("AB"));
}

TEST_CASE("checksum agrees with an independent xor over random payloads") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    std::string p(rng() % 80, ' ');
    for (auto& c : p) c = static_cast<char>(32 + rng() % 95);
    CHECK(nmea_checksum(p) == oracle::xor_checksum(p));
  }
}

TEST_CASE("ddmm conversion") {
  CHECK(ddmm_to_degrees("0000.000", 'N') == 0.0);
  CHECK(ddmm_to_degrees("4807.038", 'N') == doctest::Approx(48.0 + 7.038 / 60.0).epsilon(1e-15));
  CHECK(ddmm_to_degrees("4807.038", 'N') == doctest::Approx(48.1173).epsilon(1e-12));
  CHECK(ddmm_to_degrees("01131.000", 'W') == doctest::Approx(-(11.0 + 31.0 / 60.0)).epsilon(1e-15));
  CHECK(ddmm_to_degrees("3511.400", 'S') < 0.0);
  CHECK_THROWS_AS(ddmm_to_degrees("48x7.038", 'N'), FormatError);
  CHECK_THROWS_AS(ddmm_to_degrees("4860.000", 'N'), FormatError);
  CHECK_THROWS_AS(ddmm_to_degrees("9100.000", 'N'), FormatError);
  CHECK_THROWS_AS(ddmm_to_degrees("4807.038", 'Q'), FormatError);
  CHECK_THROWS_AS(ddmm_to_degrees("407.038", 'N'), FormatError);
  CHECK_THROWS_AS(ddmm_to_degrees("4807.", 'N'), FormatError);
}

TEST_CASE("canonical GGA sentence") {
  const auto r = parse_nmea("$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47");
  REQUIRE(r.ok());
  CHECK(oracle::xor_checksum("GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,") == "47");
  CHECK(r.fix->time_of_day == smartenergy::Seconds{12 * 3600 + 35 * 60 + 19});
  CHECK(std::fabs(r.fix->latitude - 48.1173) < 1e-6);
  CHECK(std::fabs(r.fix->longitude - 11.516667) < 1e-6);
  CHECK(r.fix->quality == FixQuality::Fix);
  CHECK(r.fix->source_sentence == "GPGGA");
}

TEST_CASE("rejections") {
  CHECK(parse_nmea("$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*48").status ==
        ParseStatus::ChecksumMismatch);
  const auto voidrmc = oracle::framed("GPRMC,123519,V,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W");
  CHECK(parse_nmea(voidrmc).status == ParseStatus::VoidFix);
  CHECK(parse_nmea(oracle::framed("GPGSV,3,1,11,03,03,111,00")).status == ParseStatus::Unsupported);
  CHECK(parse_nmea("GPGGA,no,dollar*00").status == ParseStatus::FormatError);
  CHECK(parse_nmea("").status == ParseStatus::FormatError);
  CHECK(parse_nmea(oracle::framed("GPGGA,123519,4807.038,E,01131.000,N,1,08,0.9,545.4,M,46.9,M,,")).status ==
        ParseStatus::FormatError);
  const auto nofix = parse_nmea(oracle::framed("GPGGA,123519,,,,,0,00,,,M,,M,,"));
  REQUIRE(nofix.ok());
  CHECK(nofix.fix->quality == FixQuality::NoFix);
}

TEST_CASE("RMC with status A and a trailing CRLF") {
  const auto r = parse_nmea(oracle::framed("GPRMC,081836,A,3751.65,S,14507.36,E,000.0,360.0,130998,011.3,E") + "\r\n");
  REQUIRE(r.ok());
  CHECK(r.fix->latitude == doctest::Approx(-(37 + 51.65 / 60)).epsilon(1e-14));
  CHECK(r.fix->longitude == doctest::Approx(145 + 7.36 / 60).epsilon(1e-14));
}

TEST_CASE("make_gga round trips through the parser") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-89.99, 89.99), lon(-179.99, 179.99);
  for (int i = 0; i < 2000; ++i) {
    const LatLon p{lat(rng), lon(rng)};
    const auto line = make_gga(smartenergy::Seconds{static_cast<long long>(rng() % 86400)}, p);
    const auto r = parse_nmea(line);
    REQUIRE(r.ok());
    CHECK(line.substr(line.size() - 2) == oracle::xor_checksum(line.substr(1, line.size() - 4)));
    CHECK(std::fabs(r.fix->latitude - p.lat) < 1e-7);
    CHECK(std::fabs(r.fix->longitude - p.lon) < 1e-7);
  }
}

TEST_CASE("fuzz: parser and independent validator agree") {
  std::mt19937_64 rng(2024);
  int fixes = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto line = oracle::fuzz_case(rng);
    const auto r = parse_nmea(line);
    const auto truth = oracle::genuine_fix(line);
    const bool parsed_fix = r.ok() && r.fix->quality == FixQuality::Fix;
    CHECK_MESSAGE(parsed_fix == truth.has_value(), line);
    if (parsed_fix && truth) {
      ++fixes;
      CHECK(std::fabs(r.fix->latitude - truth->lat) < 1e-9);
      CHECK(std::fabs(r.fix->longitude - truth->lon) < 1e-9);
    }
  }
  CHECK(fixes > 1000);
}

TEST_CASE("haversine") {
  const LatLon a{35.19, -97.47};
  CHECK(haversine_m(a, a) == 0.0);
  CHECK(haversine_m({0, 0}, {1, 0}) == doctest::Approx(6'371'000.0 * std::numbers::pi / 180.0));
  CHECK(std::fabs(haversine_m({0, 0}, {1, 0}) - 111194.93) < 0.01);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 1000; ++i) {
    const LatLon p{lat(rng), lon(rng)}, q{lat(rng), lon(rng)};
    CHECK(haversine_m(p, q) == haversine_m(q, p));
    CHECK(haversine_m(p, q) == doctest::Approx(oracle::vector_distance_m(p.lat, p.lon, q.lat, q.lon)).epsilon(1e-9));
  }
  CHECK(haversine_m({0, 0}, {0, 180}) == doctest::Approx(6'371'000.0 * std::numbers::pi));
}
