// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "vil/bytes.hpp"
#include "vil/error.hpp"
#include "vil/netlink.hpp"

namespace vil::net {
namespace {

enum class Label { malformed, valid, unlabeled };

class Fuzzer {
 public:
  explicit Fuzzer(std::uint64_t seed) : rng_(seed) {}

  void one_case(FuzzStats& st) {
    const int kind = static_cast<int>(pick(0, 15));
    switch (kind) {
      case 0: run_pose(st, encode_pose_stream(pose_msg()), Label::valid); break;
      case 1: {  // truncated
        Bytes b = encode_pose_stream(pose_msg());
        b.resize(pick(0, b.size() - 1));
        run_pose(st, b, Label::malformed);
        break;
      }
      case 2: {  // trailing bytes
        Bytes b = encode_pose_stream(pose_msg());
        const std::size_t extra = pick(1, 32);
        for (std::size_t i = 0; i < extra; ++i) b.push_back(byte());
        run_pose(st, b, Label::malformed);
        break;
      }
      case 3: {  // bad magic
        Bytes b = encode_pose_stream(pose_msg());
        corrupt_magic(b);
        run_pose(st, b, Label::malformed);
        break;
      }
      case 4: {  // non-finite float
        Bytes b = encode_pose_stream(pose_msg());
        const double bad = pick(0, 1) ? std::numeric_limits<double>::quiet_NaN()
                                      : (pick(0, 1) ? 1.0 : -1.0) * std::numeric_limits<double>::infinity();
        bytes::store_le(b.data() + 20 + 8 * pick(0, 6), bad);
        run_pose(st, b, Label::malformed);
        break;
      }
      case 5: {  // quaternion norm outside the tolerance
        PoseStreamMessage m = pose_msg();
        Bytes b = encode_pose_stream(m);
        const double scale = pick(0, 1) ? std::uniform_real_distribution<double>(0.0, 0.985)(rng_)
                                        : std::uniform_real_distribution<double>(1.015, 100.0)(rng_);
        for (int i = 0; i < 4; ++i) {
          const double q = bytes::load_le<double>(b.data() + 44 + 8 * i);
          bytes::store_le(b.data() + 44 + 8 * i, q * scale);
        }
        run_pose(st, b, Label::malformed);
        break;
      }
      case 6: {  // random bytes that cannot carry the pose magic
        Bytes b = random_bytes(pick(0, 128));
        if (b.size() >= 4 && std::memcmp(b.data(), "VPS1", 4) == 0) b[0] ^= 0x80;
        run_pose(st, b, Label::malformed);
        break;
      }
      case 7: {  // random mutation of a valid datagram
        Bytes b = encode_pose_stream(pose_msg());
        mutate(b);
        run_pose(st, b, Label::unlabeled);
        break;
      }
      case 8: run_response(st, encode_detect_response(response()), Label::valid); break;
      case 9: {  // truncated response
        Bytes b = encode_detect_response(response());
        b.resize(pick(0, b.size() - 1));
        run_response(st, b, Label::malformed);
        break;
      }
      case 10: {  // object count larger than carried
        DetectResponse r = response();
        Bytes b = encode_detect_response(r);
        if (r.objects.size() == 255) {
          b.resize(b.size() - 1);
        } else {
          b[8] = static_cast<std::uint8_t>(r.objects.size() + pick(1, 255 - r.objects.size()));
        }
        run_response(st, b, Label::malformed);
        break;
      }
      case 11: {  // unknown class id on the first object
        DetectResponse r = response();
        if (r.objects.empty()) r.objects.push_back(observation());
        Bytes b = encode_detect_response(r);
        b[9] = static_cast<std::uint8_t>(pick(pose::kNumClasses, 255));
        run_response(st, b, Label::malformed);
        break;
      }
      case 12: run_request(st, encode_detect_request(request()), Label::valid); break;
      case 13: {  // payload length lies
        DetectRequest r = request();
        Bytes b = encode_detect_request(r);
        const auto len = static_cast<std::uint32_t>(r.payload.size());
        std::uint32_t lie = len;
        while (lie == len) lie = static_cast<std::uint32_t>(pick(0, 2 * len + 16));
        if (pick(0, 3) == 0) lie = static_cast<std::uint32_t>(rng_());
        if (lie == len) lie = len + 1;
        bytes::store_le(b.data() + 21, lie);
        run_request(st, b, Label::malformed);
        break;
      }
      case 14: {  // random bytes into the request/response decoders
        Bytes b = random_bytes(pick(0, 96));
        if (b.size() >= 4) b[0] = static_cast<std::uint8_t>(b[0] == 'V' ? 'W' : b[0]);
        if (pick(0, 1)) run_request(st, b, Label::malformed);
        else run_response(st, b, Label::malformed);
        break;
      }
      default: {  // chunked stream with random mutations
        run_stream(st);
        break;
      }
    }
  }

 private:
  std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
  std::uint8_t byte() { return static_cast<std::uint8_t>(rng_()); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  Bytes random_bytes(std::size_t n) {
    Bytes b(n);
    for (auto& v : b) v = byte();
    return b;
  }

  void corrupt_magic(Bytes& b) {
    const std::size_t i = pick(0, 3);
    std::uint8_t v = byte();
    if (v == b[i]) v ^= 0x01;
    b[i] = v;
  }

  void mutate(Bytes& b) {
    const std::size_t flips = pick(1, 4);
    for (std::size_t i = 0; i < flips && !b.empty(); ++i) b[pick(0, b.size() - 1)] ^= static_cast<std::uint8_t>(1u << pick(0, 7));
  }

  PoseStreamMessage pose_msg() {
    PoseStreamMessage m;
    m.sequence = static_cast<std::uint32_t>(rng_());
    m.timestamp_us = rng_();
    m.frame_id = static_cast<std::uint32_t>(rng_());
    m.pose.position = Vec3(real(-1e3, 1e3), real(-1e3, 1e3), real(-1e3, 1e3));
    m.pose.rotation = exp_map(Vec3(real(-3, 3), real(-3, 3), real(-3, 3)) * 0.5);
    return m;
  }

  pose::KeypointObservation observation() {
    pose::KeypointObservation o;
    o.class_id = static_cast<int>(pick(0, pose::kNumClasses - 1));
    o.confidence = static_cast<float>(real(0.0, 1.0));
    const std::size_t k = pick(0, 20);
    for (std::size_t i = 0; i < k; ++i) {
      o.keypoints.emplace_back(static_cast<float>(real(0, 640)), static_cast<float>(real(0, 640)));
      o.visible.push_back(pick(0, 1) == 1);
    }
    return o;
  }

  DetectResponse response() {
    DetectResponse r;
    r.sequence = static_cast<std::uint32_t>(rng_());
    const std::size_t n = pick(0, 6);
    for (std::size_t i = 0; i < n; ++i) r.objects.push_back(observation());
    return r;
  }

  DetectRequest request() {
    DetectRequest r;
    r.sequence = static_cast<std::uint32_t>(rng_());
    r.timestamp_us = rng_();
    r.width = static_cast<std::uint16_t>(pick(1, 8));
    r.height = static_cast<std::uint16_t>(pick(1, 8));
    r.format = PixelFormat::raw_rgb8;
    r.payload = random_bytes(static_cast<std::size_t>(r.width) * r.height * 3);
    return r;
  }

  template <typename F>
  void run(FuzzStats& st, Label label, F&& decode) {
    ++st.cases;
    bool accepted = false;
    try {
      decode();
      accepted = true;
    } catch (const ProtocolError&) {
    } catch (...) {
      ++st.unexpected_exceptions;
    }
    switch (label) {
      case Label::malformed:
        ++st.malformed;
        if (!accepted) ++st.malformed_rejected;
        break;
      case Label::valid:
        ++st.valid;
        if (accepted) ++st.valid_accepted;
        break;
      case Label::unlabeled: ++st.unlabeled; break;
    }
  }

  void run_pose(FuzzStats& st, const Bytes& b, Label l) {
    run(st, l, [&] { decode_pose_stream(b); });
  }
  void run_response(FuzzStats& st, const Bytes& b, Label l) {
    run(st, l, [&] { decode_detect_response(b); });
  }
  void run_request(FuzzStats& st, const Bytes& b, Label l) {
    run(st, l, [&] { decode_detect_request(b); });
  }

  void run_stream(FuzzStats& st) {
    Bytes stream;
    const std::size_t n = pick(1, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const Bytes m = frame_message(encode_detect_response(response()));
      stream.insert(stream.end(), m.begin(), m.end());
    }
    mutate(stream);
    run(st, Label::unlabeled, [&] {
      StreamAssembler a;
      std::size_t off = 0;
      while (off < stream.size()) {
        const std::size_t len = std::min(stream.size() - off, pick(1, 64));
        a.feed({stream.data() + off, len});
        off += len;
        while (auto msg = a.next()) {
          try {
            decode_detect_response(*msg);
          } catch (const ProtocolError&) {
          }
        }
      }
    });
  }

  std::mt19937_64 rng_;
};

}  // namespace

FuzzStats run_protocol_fuzz(std::uint64_t cases, std::uint64_t seed) {
  FuzzStats st;
  Fuzzer f(seed);
  while (st.cases < cases) f.one_case(st);
  return st;
}

}  // namespace vil::net
