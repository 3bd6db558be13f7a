// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vil/geometry.hpp"
#include "vil/posepipe.hpp"
#include "vil/splat.hpp"

namespace vil::net {

using Bytes = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Truth-pose stream ("VPS1"), one datagram per message:
//   magic[4] | seq u32 | timestamp_us u64 | frame_id u32 | pos 3xf64 | quat 4xf64 (w,x,y,z)
// 72 bytes follow the magic; all little-endian.

inline constexpr std::size_t kPoseStreamPayloadSize = 72;
inline constexpr std::size_t kPoseStreamDatagramSize = 4 + kPoseStreamPayloadSize;

struct PoseStreamMessage {
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  std::uint32_t frame_id = 0;
  Pose pose;

  bool operator==(const PoseStreamMessage& o) const {
    return sequence == o.sequence && timestamp_us == o.timestamp_us && frame_id == o.frame_id &&
           pose.position == o.pose.position && pose.rotation.wxyz() == o.pose.rotation.wxyz();
  }
};

Bytes encode_pose_stream(const PoseStreamMessage& m);
/// Throws ProtocolError on wrong size, magic, non-finite fields or |q| outside [0.99, 1.01].
PoseStreamMessage decode_pose_stream(std::span<const std::uint8_t> datagram);

/// Latest-wins ordering: a sequence number at or behind the newest seen is stale
/// (serial-number arithmetic, so wraparound is handled).
class SequenceFilter {
 public:
  bool accept(std::uint32_t seq);
  std::optional<std::uint32_t> latest() const { return latest_; }

 private:
  std::optional<std::uint32_t> latest_;
};

/// Unreliable datagram transport.
class DatagramLink {
 public:
  virtual ~DatagramLink() = default;
  virtual void send(std::span<const std::uint8_t> datagram) = 0;
  /// Next datagram, waiting up to `timeout`; empty on timeout.
  virtual std::optional<Bytes> receive(std::chrono::milliseconds timeout) = 0;
};

/// In-process queue standing in for a network hop.
class LoopbackLink final : public DatagramLink {
 public:
  void send(std::span<const std::uint8_t> datagram) override;
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override;

 private:
  std::mutex mu_;
  std::deque<Bytes> queue_;
};

/// UDP socket sending to a fixed peer and/or receiving on a bound port.
class UdpLink final : public DatagramLink {
 public:
  /// Bind to `bind_port` on 127.0.0.1/any (0 = ephemeral) and send to host:port when given.
  UdpLink(std::uint16_t bind_port, std::string peer_host = {}, std::uint16_t peer_port = 0, bool bind_any = false);
  ~UdpLink() override;
  UdpLink(const UdpLink&) = delete;
  UdpLink& operator=(const UdpLink&) = delete;

  void send(std::span<const std::uint8_t> datagram) override;
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override;
  std::uint16_t local_port() const { return local_port_; }

 private:
  int fd_ = -1;
  std::uint16_t local_port_ = 0;
  std::string peer_host_;
  std::uint16_t peer_port_ = 0;
};

struct StreamCounters {
  std::uint64_t received = 0;
  std::uint64_t accepted = 0;
  std::uint64_t malformed = 0;
  std::uint64_t stale = 0;
};

class PoseStreamSender {
 public:
  explicit PoseStreamSender(DatagramLink& link) : link_(link) {}
  /// Stamps the next sequence number and sends the state's pose.
  PoseStreamMessage send(const StateVector& state, std::uint32_t frame_id);

 private:
  DatagramLink& link_;
  std::uint32_t next_seq_ = 0;
};

class PoseStreamReceiver {
 public:
  explicit PoseStreamReceiver(DatagramLink& link) : link_(link) {}
  /// Next accepted message; malformed and stale datagrams are counted and skipped.
  std::optional<PoseStreamMessage> receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(0));
  /// Same filtering applied to a datagram obtained elsewhere.
  std::optional<PoseStreamMessage> ingest(std::span<const std::uint8_t> datagram);
  const StreamCounters& counters() const { return counters_; }

 private:
  DatagramLink& link_;
  SequenceFilter order_;
  StreamCounters counters_;
};

// ---------------------------------------------------------------------------
// Detector RPC over a reliable stream; each message is preceded by a u32 LE length.
//   request : "VDR1" | seq u32 | timestamp_us u64 | width u16 | height u16 | format u8 | len u32 | payload
//   response: "VDA1" | seq u32 | count u8 | count x (class u8 | conf f32 | K u8 | K x (f32,f32) | mask[ceil(K/8)])

inline constexpr std::size_t kDetectRequestHeaderSize = 25;
inline constexpr std::uint32_t kMaxStreamMessage = 64u << 20;

enum class PixelFormat : std::uint8_t { raw_rgb8 = 0, png = 1 };

struct DetectRequest {
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  PixelFormat format = PixelFormat::raw_rgb8;
  Bytes payload;
};

struct DetectResponse {
  std::uint32_t sequence = 0;
  std::vector<pose::KeypointObservation> objects;
};

Bytes encode_detect_request(const DetectRequest& r);
DetectRequest decode_detect_request(std::span<const std::uint8_t> b);
Bytes encode_detect_response(const DetectResponse& r);
DetectResponse decode_detect_response(std::span<const std::uint8_t> b);

DetectRequest make_detect_request(const splat::Frame& frame, std::uint32_t sequence,
                                  PixelFormat format = PixelFormat::raw_rgb8);
/// Pixels only; pose fields are left default.
splat::Frame frame_from_request(const DetectRequest& r);

/// Prepends the u32 LE length.
Bytes frame_message(std::span<const std::uint8_t> message);

/// Reassembles length-prefixed messages from an arbitrary chunking of a byte stream.
class StreamAssembler {
 public:
  void feed(std::span<const std::uint8_t> chunk);
  /// Throws ProtocolError (and drops the buffer) when a declared length exceeds kMaxStreamMessage.
  std::optional<Bytes> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  Bytes buf_;
};

struct RpcCounters {
  std::uint64_t calls = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t protocol_errors = 0;
};

/// One in-flight request at a time over a TCP connection, reconnecting after
/// any failure.
class DetectClient {
 public:
  DetectClient(std::string host, std::uint16_t port, std::chrono::milliseconds timeout = std::chrono::milliseconds(500));
  ~DetectClient();
  DetectClient(const DetectClient&) = delete;
  DetectClient& operator=(const DetectClient&) = delete;

  /// Empty on timeout or unreachable endpoint (logged). Throws ProtocolError
  /// (after resetting the connection) when the response cannot be parsed or
  /// does not echo the request sequence.
  std::optional<DetectResponse> call(const DetectRequest& req);
  const RpcCounters& counters() const { return counters_; }

 private:
  bool ensure_connected(std::chrono::steady_clock::time_point deadline);
  void reset();

  std::string host_;
  std::uint16_t port_;
  std::chrono::milliseconds timeout_;
  int fd_ = -1;
  RpcCounters counters_;
};

/// Test and tooling endpoint: serves framed requests through `handler`.
/// A handler returning nullopt sends nothing (the caller times out).
class DetectServer {
 public:
  using Handler = std::function<std::optional<Bytes>(std::span<const std::uint8_t> request)>;

  DetectServer(std::uint16_t port, Handler handler);
  ~DetectServer();
  DetectServer(const DetectServer&) = delete;
  DetectServer& operator=(const DetectServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::uint64_t served() const { return served_.load(); }

 private:
  void run();
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  Handler handler_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> served_{0};
  std::jthread thread_;
};

/// Detector backed by a remote keypoint service.
class RemoteDetector final : public pose::Detector {
 public:
  RemoteDetector(std::string host, std::uint16_t port, std::chrono::milliseconds timeout,
                 PixelFormat format = PixelFormat::raw_rgb8);
  std::vector<pose::KeypointObservation> detect(const splat::Frame& frame) const override;
  RpcCounters counters() const;

 private:
  mutable std::mutex mu_;
  mutable DetectClient client_;
  mutable std::uint32_t next_seq_ = 0;
  PixelFormat format_;
};

/// "host:port" -> pair. Throws InvalidArgument.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

// ---------------------------------------------------------------------------
// Message log: records of "VREC" | t_us u64 | len u32 | payload | crc32 u32.

struct LogRecord {
  std::uint64_t timestamp_us = 0;
  Bytes payload;
};

class LogWriter {
 public:
  explicit LogWriter(const std::filesystem::path& path);
  void append(std::uint64_t timestamp_us, std::span<const std::uint8_t> payload);
  void flush();

 private:
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f_;
};

struct ReplayStats {
  std::size_t emitted = 0;
  std::size_t corrupt = 0;
};

enum class ReplayTiming { as_fast_as_possible, original };

/// Reads every intact record; corrupt spans are skipped (resyncing on the
/// next magic) and counted. Throws IoError when the file cannot be opened.
std::vector<LogRecord> read_log(const std::filesystem::path& path, std::size_t* corrupt = nullptr);

/// Re-emits records in order, optionally sleeping to reproduce the original gaps.
ReplayStats replay_log(const std::filesystem::path& path, ReplayTiming timing,
                       const std::function<void(const LogRecord&)>& sink);

// ---------------------------------------------------------------------------

struct FuzzStats {
  std::uint64_t cases = 0;
  std::uint64_t malformed = 0;           // inputs malformed by construction
  std::uint64_t malformed_rejected = 0;
  std::uint64_t valid = 0;               // unmodified control messages
  std::uint64_t valid_accepted = 0;
  std::uint64_t unlabeled = 0;           // random mutations, only required not to crash
  std::uint64_t unexpected_exceptions = 0;

  bool passed() const {
    return malformed_rejected == malformed && valid_accepted == valid && unexpected_exceptions == 0;
  }
};

/// Drives every decoder with generated inputs of known validity.
FuzzStats run_protocol_fuzz(std::uint64_t cases, std::uint64_t seed);

}  // namespace vil::net
