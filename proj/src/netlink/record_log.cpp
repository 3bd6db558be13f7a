// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>

#include <fmt/format.h>
#include <zlib.h>

#include "vil/bytes.hpp"
#include "vil/error.hpp"
#include "vil/netlink.hpp"

namespace vil::net {
namespace {

constexpr std::size_t kRecordHeader = 16;  // magic + t_us + len
constexpr std::uint32_t kMaxRecordPayload = kMaxStreamMessage;

std::uint32_t crc_of(std::span<const std::uint8_t> b) {
  return static_cast<std::uint32_t>(::crc32(0L, b.data(), static_cast<uInt>(b.size())));
}

}  // namespace

LogWriter::LogWriter(const std::filesystem::path& path) : f_(std::fopen(path.c_str(), "wb"), &std::fclose) {
  if (!f_) throw IoError(fmt::format("cannot open log '{}' for writing", path.string()));
}

void LogWriter::append(std::uint64_t timestamp_us, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxRecordPayload) throw InvalidArgument("log record too large");
  bytes::Writer w;
  w.put_tag("VREC").put(timestamp_us).put(static_cast<std::uint32_t>(payload.size())).put_bytes(payload).put(crc_of(payload));
  const auto& d = w.data();
  if (std::fwrite(d.data(), 1, d.size(), f_.get()) != d.size()) throw IoError("log write failed");
}

void LogWriter::flush() { std::fflush(f_.get()); }

std::vector<LogRecord> read_log(const std::filesystem::path& path, std::size_t* corrupt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open log '{}'", path.string()));
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<LogRecord> out;
  std::size_t bad = 0;
  bool in_bad_span = false;
  std::size_t pos = 0;
  while (pos + 4 <= data.size()) {
    bool ok = false;
    std::size_t next = pos;
    if (std::memcmp(data.data() + pos, "VREC", 4) == 0 && pos + kRecordHeader <= data.size()) {
      const auto t = bytes::load_le<std::uint64_t>(data.data() + pos + 4);
      const auto len = bytes::load_le<std::uint32_t>(data.data() + pos + 12);
      const std::size_t end = pos + kRecordHeader + len + 4;
      if (len <= kMaxRecordPayload && end <= data.size()) {
        const std::span<const std::uint8_t> payload(data.data() + pos + kRecordHeader, len);
        if (bytes::load_le<std::uint32_t>(data.data() + pos + kRecordHeader + len) == crc_of(payload)) {
          out.push_back({t, Bytes(payload.begin(), payload.end())});
          ok = true;
          next = end;
        }
      }
    }
    if (ok) {
      in_bad_span = false;
      pos = next;
      continue;
    }
    if (!in_bad_span) ++bad;
    in_bad_span = true;
    ++pos;  // resync on the next magic
  }
  if (pos < data.size() && !in_bad_span) ++bad;
  if (bad) fmt::print(stderr, "warning: log '{}' has {} corrupt span(s); skipped\n", path.string(), bad);
  if (corrupt) *corrupt = bad;
  return out;
}

ReplayStats replay_log(const std::filesystem::path& path, ReplayTiming timing,
                       const std::function<void(const LogRecord&)>& sink) {
  ReplayStats stats;
  const auto records = read_log(path, &stats.corrupt);
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t t0 = records.empty() ? 0 : records.front().timestamp_us;
  for (const auto& r : records) {
    if (timing == ReplayTiming::original && r.timestamp_us > t0) {
      std::this_thread::sleep_until(start + std::chrono::microseconds(r.timestamp_us - t0));
    }
    sink(r);
    ++stats.emitted;
  }
  return stats;
}

}  // namespace vil::net
