// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <fmt/format.h>

#include "vil/bytes.hpp"
#include "vil/error.hpp"
#include "vil/netlink.hpp"

namespace vil::net {
namespace {

[[noreturn]] void malformed(std::string_view what, std::span<const std::uint8_t> b) {
  throw ProtocolError(fmt::format("{}; message: {}", what, bytes::hex_dump(b)));
}

}  // namespace

Bytes encode_pose_stream(const PoseStreamMessage& m) {
  bytes::Writer w;
  w.put_tag("VPS1").put(m.sequence).put(m.timestamp_us).put(m.frame_id);
  for (int i = 0; i < 3; ++i) w.put(m.pose.position[i]);
  for (double q : m.pose.rotation.wxyz()) w.put(q);
  return w.take();
}

PoseStreamMessage decode_pose_stream(std::span<const std::uint8_t> datagram) {
  if (datagram.size() != kPoseStreamDatagramSize) {
    malformed(fmt::format("pose datagram has {} bytes, expected {}", datagram.size(), kPoseStreamDatagramSize),
              datagram);
  }
  bytes::Reader r(datagram);
  if (!r.expect_tag("VPS1")) malformed("pose datagram has bad magic", datagram);
  PoseStreamMessage m;
  r.get(m.sequence);
  r.get(m.timestamp_us);
  r.get(m.frame_id);
  for (int i = 0; i < 3; ++i) r.get(m.pose.position[i]);
  double q[4];
  for (double& v : q) r.get(v);
  if (!m.pose.position.allFinite()) malformed("pose datagram has non-finite position", datagram);
  double n2 = 0.0;
  for (double v : q) {
    if (!std::isfinite(v)) malformed("pose datagram has non-finite quaternion", datagram);
    n2 += v * v;
  }
  const double n = std::sqrt(n2);
  if (!(n >= 0.99 && n <= 1.01)) malformed(fmt::format("pose datagram quaternion norm {} outside [0.99, 1.01]", n), datagram);
  m.pose.rotation = Rotation::from_quaternion(q[0], q[1], q[2], q[3]);
  return m;
}

bool SequenceFilter::accept(std::uint32_t seq) {
  if (latest_ && static_cast<std::int32_t>(seq - *latest_) <= 0) return false;
  latest_ = seq;
  return true;
}

Bytes encode_detect_request(const DetectRequest& r) {
  if (r.payload.size() > kMaxStreamMessage - kDetectRequestHeaderSize) throw InvalidArgument("detect request too large");
  bytes::Writer w;
  w.put_tag("VDR1")
      .put(r.sequence)
      .put(r.timestamp_us)
      .put(r.width)
      .put(r.height)
      .put(static_cast<std::uint8_t>(r.format))
      .put(static_cast<std::uint32_t>(r.payload.size()))
      .put_bytes(r.payload);
  return w.take();
}

DetectRequest decode_detect_request(std::span<const std::uint8_t> b) {
  bytes::Reader r(b);
  if (!r.expect_tag("VDR1")) malformed("detect request has bad magic", b);
  DetectRequest req;
  std::uint8_t fmt_byte = 0;
  std::uint32_t len = 0;
  if (!r.get(req.sequence) || !r.get(req.timestamp_us) || !r.get(req.width) || !r.get(req.height) ||
      !r.get(fmt_byte) || !r.get(len)) {
    malformed("detect request header truncated", b);
  }
  if (req.width == 0 || req.height == 0) malformed("detect request has zero image size", b);
  if (fmt_byte > 1) malformed(fmt::format("detect request has unknown pixel format {}", fmt_byte), b);
  req.format = static_cast<PixelFormat>(fmt_byte);
  if (r.remaining() != len) {
    malformed(fmt::format("detect request declares {} payload bytes, carries {}", len, r.remaining()), b);
  }
  if (req.format == PixelFormat::raw_rgb8 && len != static_cast<std::size_t>(req.width) * req.height * 3) {
    malformed("detect request raw payload does not match width x height x 3", b);
  }
  std::span<const std::uint8_t> payload;
  r.get_bytes(len, payload);
  req.payload.assign(payload.begin(), payload.end());
  return req;
}

Bytes encode_detect_response(const DetectResponse& r) {
  if (r.objects.size() > 255) throw InvalidArgument("detect response holds more than 255 objects");
  bytes::Writer w;
  w.put_tag("VDA1").put(r.sequence).put(static_cast<std::uint8_t>(r.objects.size()));
  for (const auto& o : r.objects) {
    const std::size_t k = o.keypoints.size();
    if (o.class_id < 0 || o.class_id >= pose::kNumClasses) throw InvalidArgument("detect response: bad class id");
    if (k > 255 || o.visible.size() != k) throw InvalidArgument("detect response: bad keypoint count");
    w.put(static_cast<std::uint8_t>(o.class_id)).put(static_cast<float>(o.confidence)).put(static_cast<std::uint8_t>(k));
    for (const auto& p : o.keypoints) w.put(static_cast<float>(p.x())).put(static_cast<float>(p.y()));
    std::vector<std::uint8_t> mask((k + 7) / 8, 0);
    for (std::size_t i = 0; i < k; ++i) {
      if (o.visible[i]) mask[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    w.put_bytes(mask);
  }
  return w.take();
}

DetectResponse decode_detect_response(std::span<const std::uint8_t> b) {
  bytes::Reader r(b);
  if (!r.expect_tag("VDA1")) malformed("detect response has bad magic", b);
  DetectResponse resp;
  std::uint8_t count = 0;
  if (!r.get(resp.sequence) || !r.get(count)) malformed("detect response header truncated", b);
  for (int i = 0; i < count; ++i) {
    std::uint8_t cls = 0, k = 0;
    float conf = 0.0f;
    if (!r.get(cls) || !r.get(conf) || !r.get(k)) malformed(fmt::format("detect response object {} truncated", i), b);
    if (cls >= pose::kNumClasses) malformed(fmt::format("detect response has unknown class {}", cls), b);
    if (!std::isfinite(conf) || conf < 0.0f || conf > 1.0f) malformed("detect response confidence outside [0, 1]", b);
    pose::KeypointObservation o;
    o.class_id = cls;
    o.confidence = conf;
    o.keypoints.resize(k);
    o.visible.resize(k);
    for (int j = 0; j < k; ++j) {
      float u = 0.0f, v = 0.0f;
      if (!r.get(u) || !r.get(v)) malformed(fmt::format("detect response object {} keypoints truncated", i), b);
      if (!std::isfinite(u) || !std::isfinite(v)) malformed("detect response has non-finite keypoint", b);
      o.keypoints[j] = Vec2(u, v);
    }
    std::span<const std::uint8_t> mask;
    if (!r.get_bytes((k + 7u) / 8u, mask)) malformed(fmt::format("detect response object {} mask truncated", i), b);
    for (int j = 0; j < k; ++j) o.visible[j] = (mask[j / 8] >> (j % 8)) & 1u;
    if (k % 8 && (mask.back() >> (k % 8)) != 0) malformed("detect response mask has bits beyond the keypoint count", b);
    resp.objects.push_back(std::move(o));
  }
  if (r.remaining() != 0) malformed(fmt::format("detect response has {} trailing bytes", r.remaining()), b);
  return resp;
}

DetectRequest make_detect_request(const splat::Frame& frame, std::uint32_t sequence, PixelFormat format) {
  if (frame.width <= 0 || frame.height <= 0 || frame.width > 65535 || frame.height > 65535) {
    throw InvalidArgument("detect request: frame size out of range");
  }
  DetectRequest r;
  r.sequence = sequence;
  r.timestamp_us = static_cast<std::uint64_t>(std::llround(std::max(0.0, frame.timestamp) * 1e6));
  r.width = static_cast<std::uint16_t>(frame.width);
  r.height = static_cast<std::uint16_t>(frame.height);
  r.format = format;
  r.payload = format == PixelFormat::png ? splat::encode_png(frame) : frame.rgb;
  return r;
}

splat::Frame frame_from_request(const DetectRequest& r) {
  splat::Frame f;
  if (r.format == PixelFormat::png) {
    try {
      f = splat::decode_png(r.payload);
    } catch (const IoError& e) {
      throw ProtocolError(fmt::format("detect request PNG payload: {}", e.what()));
    }
    if (f.width != r.width || f.height != r.height) throw ProtocolError("detect request PNG size disagrees with header");
  } else {
    f.width = r.width;
    f.height = r.height;
    f.rgb = r.payload;
  }
  f.timestamp = static_cast<double>(r.timestamp_us) * 1e-6;
  return f;
}

Bytes frame_message(std::span<const std::uint8_t> message) {
  if (message.size() > kMaxStreamMessage) throw InvalidArgument("stream message too large");
  bytes::Writer w;
  w.put(static_cast<std::uint32_t>(message.size())).put_bytes(message);
  return w.take();
}

void StreamAssembler::feed(std::span<const std::uint8_t> chunk) {
  buf_.insert(buf_.end(), chunk.begin(), chunk.end());
}

std::optional<Bytes> StreamAssembler::next() {
  if (buf_.size() < 4) return std::nullopt;
  const auto len = bytes::load_le<std::uint32_t>(buf_.data());
  if (len > kMaxStreamMessage) {
    buf_.clear();
    throw ProtocolError(fmt::format("stream message length {} exceeds limit", len));
  }
  if (buf_.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
  Bytes msg(buf_.begin() + 4, buf_.begin() + 4 + len);
  buf_.erase(buf_.begin(), buf_.begin() + 4 + len);
  return msg;
}

}  // namespace vil::net
