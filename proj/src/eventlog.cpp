#include "smartenergy/eventlog.hpp"

#include <algorithm>
#include <istream>

namespace smartenergy::runtime {

namespace {

constexpr std::pair<RecordKind, const char*> kKinds[] = {
    {RecordKind::FixAccepted, "FixAccepted"},     {RecordKind::FixRejected, "FixRejected"},
    {RecordKind::Presence, "Presence"},           {RecordKind::Decision, "Decision"},
    {RecordKind::DeviceCommand, "DeviceCommand"}, {RecordKind::DeviceReply, "DeviceReply"},
    {RecordKind::LedgerAppend, "LedgerAppend"},   {RecordKind::PolicyEdit, "PolicyEdit"},
};

}  // namespace

const char* to_string(RecordKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<RecordKind> record_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKinds) {
    if (s == name) return kind;
  }
  return std::nullopt;
}

std::string serialize(const EventRecord& r) {
  Json j;
  j["seq"] = r.seq;
  j["ts"] = format_iso8601(r.ts);
  j["kind"] = to_string(r.kind);
  j["payload"] = r.payload;
  return j.dump();
}

std::optional<EventRecord> parse_record(std::string_view line) {
  const auto j = Json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  if (!j.contains("seq") || !j["seq"].is_number_unsigned()) return std::nullopt;
  if (!j.contains("ts") || !j["ts"].is_string()) return std::nullopt;
  if (!j.contains("kind") || !j["kind"].is_string()) return std::nullopt;
  if (!j.contains("payload") || !j["payload"].is_object()) return std::nullopt;
  const auto ts = parse_iso8601(j["ts"].get<std::string>());
  const auto kind = record_kind_from_string(j["kind"].get<std::string>());
  if (!ts || !kind) return std::nullopt;
  return EventRecord{j["seq"].get<std::uint64_t>(), *ts, *kind, j["payload"]};
}

LogReadResult read_log(std::istream& in) {
  LogReadResult out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto rec = parse_record(line);
    if (!rec) {
      out.corrupt_line = line_no;
      out.error = "malformed record";
      break;
    }
    const auto expected = out.records.empty() ? rec->seq : out.records.back().seq + 1;
    if (rec->seq != expected || rec->seq == 0) {
      out.corrupt_line = line_no;
      out.error = "sequence break";
      break;
    }
    out.records.push_back(std::move(*rec));
  }
  return out;
}

LogReadResult read_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    LogReadResult out;
    out.error = "cannot read " + path.string();
    out.corrupt_line = 0;
    return out;
  }
  return read_log(in);
}

EventLog::EventLog(const std::filesystem::path& file) {
  file_.emplace(file, std::ios::out | std::ios::trunc);
  if (!*file_) throw std::runtime_error("cannot open event log " + file.string());
}

void EventLog::write(const EventRecord& r) {
  if (!file_) return;
  *file_ << serialize(r) << '\n';
  file_->flush();
}

EventRecord EventLog::append(Timestamp ts, RecordKind kind, Json payload) {
  std::lock_guard lock(mu_);
  const auto seq = records_.empty() ? 1 : records_.back().seq + 1;
  records_.push_back({seq, ts, kind, std::move(payload)});
  write(records_.back());
  cv_.notify_all();
  return records_.back();
}

void EventLog::adopt(const EventRecord& record) {
  std::lock_guard lock(mu_);
  const auto expected = records_.empty() ? record.seq : records_.back().seq + 1;
  if (record.seq != expected || record.seq == 0) throw std::invalid_argument("adopted record breaks the sequence");
  records_.push_back(record);
  write(record);
  cv_.notify_all();
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return records_.empty() ? 0 : records_.back().seq;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::vector<EventRecord> EventLog::since(std::uint64_t seq, std::size_t limit) const {
  std::lock_guard lock(mu_);
  std::vector<EventRecord> out;
  const auto it = std::upper_bound(records_.begin(), records_.end(), seq,
                                   [](std::uint64_t s, const EventRecord& r) { return s < r.seq; });
  for (auto i = it; i != records_.end() && out.size() < limit; ++i) out.push_back(*i);
  return out;
}

std::vector<EventRecord> EventLog::wait_since(std::uint64_t seq, std::chrono::milliseconds timeout,
                                              std::size_t limit) const {
  {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !records_.empty() && records_.back().seq > seq; });
  }
  return since(seq, limit);
}

}  // namespace smartenergy::runtime
