#include <sstream>
#include <thread>

#include "doctest.h"
#include "smartenergy/eventlog.hpp"

using namespace smartenergy;
using namespace smartenergy::runtime;

namespace {

const Timestamp kT0 = *parse_iso8601("2011-10-03T08:00:00");

EventRecord sample(std::uint64_t seq, RecordKind kind = RecordKind::Presence) {
  return {seq, kT0 + Seconds{static_cast<long long>(seq) * 7}, kind,
          Json{{"user", "alice"}, {"fence", "home"}, {"n", seq}}};
}

std::string lines(std::initializer_list<std::string> ls) {
  std::string out;
  for (const auto& l : ls) out += l + "\n";
  return out;
}

}  // namespace

TEST_CASE("record kinds round trip") {
  for (auto k : {RecordKind::FixAccepted, RecordKind::FixRejected, RecordKind::Presence, RecordKind::Decision,
                 RecordKind::DeviceCommand, RecordKind::DeviceReply, RecordKind::LedgerAppend,
                 RecordKind::PolicyEdit}) {
    CHECK(record_kind_from_string(to_string(k)) == k);
  }
  CHECK_FALSE(record_kind_from_string("Nonsense"));
}

TEST_CASE("serialize and parse") {
  const auto r = sample(42, RecordKind::DeviceReply);
  const auto text = serialize(r);
  CHECK(text.find('\n') == std::string::npos);
  CHECK(text.rfind(R"({"seq":42,"ts":"2011-10-03T08:04:54Z","kind":"DeviceReply","payload":)", 0) == 0);
  const auto back = parse_record(text);
  REQUIRE(back);
  CHECK(*back == r);

  CHECK_FALSE(parse_record(""));
  CHECK_FALSE(parse_record("[1,2]"));
  CHECK_FALSE(parse_record(text.substr(0, text.size() - 3)));
  CHECK_FALSE(parse_record(R"({"seq":-1,"ts":"2011-10-03T08:00:00","kind":"Presence","payload":{}})"));
  CHECK_FALSE(parse_record(R"({"seq":1,"ts":"yesterday","kind":"Presence","payload":{}})"));
  CHECK_FALSE(parse_record(R"({"seq":1,"ts":"2011-10-03T08:00:00","kind":"Gossip","payload":{}})"));
  CHECK_FALSE(parse_record(R"({"seq":1,"ts":"2011-10-03T08:00:00","kind":"Presence","payload":3})"));
  CHECK_FALSE(parse_record(R"({"ts":"2011-10-03T08:00:00","kind":"Presence","payload":{}})"));
}

TEST_CASE("read_log stops at the first bad line") {
  const auto a = serialize(sample(1)), b = serialize(sample(2)), c = serialize(sample(3));
  {
    std::istringstream in(lines({a, b, "", c}));
    const auto r = read_log(in);
    CHECK(r.records.size() == 3);
    CHECK_FALSE(r.corrupt_line);
  }
  {
    std::istringstream in(lines({a, b, c.substr(0, 20)}));
    const auto r = read_log(in);
    CHECK(r.records.size() == 2);
    CHECK(r.corrupt_line == 3u);
    CHECK(r.error == "malformed record");
  }
  {
    std::istringstream in(lines({a, c, b}));
    const auto r = read_log(in);
    CHECK(r.records.size() == 1);
    CHECK(r.corrupt_line == 2u);
    CHECK(r.error == "sequence break");
  }
  {
    std::istringstream in(lines({a, "garbage", b}));
    const auto r = read_log(in);
    CHECK(r.records.size() == 1);
    CHECK(r.corrupt_line == 2u);
  }
  {
    std::istringstream in("");
    const auto r = read_log(in);
    CHECK(r.records.empty());
    CHECK_FALSE(r.corrupt_line);
  }
  const auto missing = read_log(std::filesystem::path("/nonexistent/events.jsonl"));
  CHECK(missing.records.empty());
  CHECK(missing.corrupt_line);
}

TEST_CASE("event log appends, mirrors and pages") {
  const auto path = std::filesystem::temp_directory_path() / "smartenergy_test_eventlog.jsonl";
  {
    EventLog log(path);
    CHECK(log.last_seq() == 0);
    for (int i = 0; i < 10; ++i) {
      const auto r = log.append(kT0 + Seconds{i}, RecordKind::Decision, Json{{"i", i}});
      CHECK(r.seq == static_cast<std::uint64_t>(i + 1));
    }
    CHECK(log.size() == 10);
    CHECK(log.last_seq() == 10);
    const auto page = log.since(3, 4);
    REQUIRE(page.size() == 4);
    CHECK(page.front().seq == 4);
    CHECK(page.back().seq == 7);
    CHECK(log.since(10).empty());
    CHECK(log.all().size() == 10);
  }
  const auto r = read_log(path);
  CHECK_FALSE(r.corrupt_line);
  REQUIRE(r.records.size() == 10);
  CHECK(r.records[4].payload["i"] == 4);
  std::filesystem::remove(path);
}

TEST_CASE("adopt keeps the sequence") {
  EventLog log;
  log.adopt(sample(5));
  log.adopt(sample(6));
  CHECK(log.last_seq() == 6);
  CHECK_THROWS_AS(log.adopt(sample(8)), std::invalid_argument);
  CHECK_THROWS_AS(log.adopt(sample(6)), std::invalid_argument);
  CHECK(log.append(kT0, RecordKind::PolicyEdit, Json::object()).seq == 7);
}

TEST_CASE("wait_since wakes on append and times out") {
  EventLog log;
  log.append(kT0, RecordKind::Presence, Json::object());
  CHECK(log.wait_since(0, std::chrono::milliseconds{0}).size() == 1);

  const auto t0 = std::chrono::steady_clock::now();
  CHECK(log.wait_since(1, std::chrono::milliseconds{50}).empty());
  CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds{45});

  std::thread writer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds{30});
    log.append(kT0, RecordKind::Presence, Json::object());
  });
  const auto got = log.wait_since(1, std::chrono::seconds{10});
  writer.join();
  REQUIRE(got.size() == 1);
  CHECK(got[0].seq == 2);
}
