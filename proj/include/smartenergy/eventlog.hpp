#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "smartenergy/timeutil.hpp"

namespace smartenergy::runtime {

using Json = nlohmann::ordered_json;

enum class RecordKind {
  FixAccepted,
  FixRejected,
  Presence,
  Decision,
  DeviceCommand,
  DeviceReply,
  LedgerAppend,
  PolicyEdit,
};

const char* to_string(RecordKind k);
std::optional<RecordKind> record_kind_from_string(std::string_view s);

struct EventRecord {
  std::uint64_t seq = 0;
  Timestamp ts{};  // simulated or wall time of the mutation
  RecordKind kind = RecordKind::FixAccepted;
  Json payload;

  bool operator==(const EventRecord&) const = default;
};

// One JSON object per line: {"seq":..,"ts":..,"kind":..,"payload":{..}}.
std::string serialize(const EventRecord& r);
// nullopt for anything that is not a well-formed record.
std::optional<EventRecord> parse_record(std::string_view line);

struct LogReadResult {
  std::vector<EventRecord> records;
  std::optional<std::size_t> corrupt_line;  // 1-based line where reading stopped
  std::string error;
};

// Reads records until the first malformed line or sequence break.
LogReadResult read_log(std::istream& in);
LogReadResult read_log(const std::filesystem::path& path);

// Append-only storage behind the event log. The default keeps records in
// memory and optionally mirrors them to a JSON-lines file.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& file);

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  EventRecord append(Timestamp ts, RecordKind kind, Json payload);
  // Re-appends a recovered record verbatim; its seq must follow the last one.
  void adopt(const EventRecord& record);

  std::uint64_t last_seq() const;
  std::size_t size() const;
  std::vector<EventRecord> since(std::uint64_t seq, std::size_t limit = SIZE_MAX) const;
  std::vector<EventRecord> all() const { return since(0); }

  // Blocks until a record with seq > `seq` exists or the timeout passes.
  std::vector<EventRecord> wait_since(std::uint64_t seq, std::chrono::milliseconds timeout,
                                      std::size_t limit = SIZE_MAX) const;

 private:
  void write(const EventRecord& r);

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<EventRecord> records_;
  std::optional<std::ofstream> file_;
};

}  // namespace smartenergy::runtime
