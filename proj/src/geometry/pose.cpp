// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <fmt/format.h>

#include "vil/bytes.hpp"
#include "vil/error.hpp"
#include "vil/geometry.hpp"

namespace vil {

bool Pose::approx_equal(const Pose& other, double tol) const {
  return (position - other.position).cwiseAbs().maxCoeff() <= tol && rotation.approx_equal(other.rotation, tol);
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.position + a.position, a.rotation * b.rotation};
}

Pose inverse(const Pose& p) {
  const Rotation r_inv = p.rotation.inverse();
  return {-(r_inv * p.position), r_inv};
}

bool StateVector::finite() const {
  return pose.position.allFinite() && pose.rotation.quaternion().coeffs().allFinite() && velocity.allFinite() &&
         angular_velocity.allFinite() && std::isfinite(timestamp);
}

std::array<std::uint8_t, kPoseWireSize> encode_pose(const Pose& p) {
  std::array<std::uint8_t, kPoseWireSize> out{};
  auto* o = out.data();
  for (int i = 0; i < 3; ++i) bytes::store_le(o + 8 * i, p.position[i]);
  const auto q = p.rotation.wxyz();
  for (int i = 0; i < 4; ++i) bytes::store_le(o + 24 + 8 * i, q[i]);
  return out;
}

Pose decode_pose(std::span<const std::uint8_t> in) {
  if (in.size() < kPoseWireSize) throw ProtocolError(fmt::format("pose record too short ({} bytes)", in.size()));
  Pose p;
  for (int i = 0; i < 3; ++i) p.position[i] = bytes::load_le<double>(in.data() + 8 * i);
  double q[4];
  for (int i = 0; i < 4; ++i) q[i] = bytes::load_le<double>(in.data() + 24 + 8 * i);
  if (!p.position.allFinite() || !std::isfinite(q[0]) || !std::isfinite(q[1]) || !std::isfinite(q[2]) ||
      !std::isfinite(q[3])) {
    throw ProtocolError("pose record holds non-finite values");
  }
  try {
    p.rotation = Rotation::from_quaternion(q[0], q[1], q[2], q[3]);
  } catch (const InvalidArgument&) {
    throw ProtocolError("pose record holds a zero quaternion");
  }
  return p;
}

namespace bytes {

std::string hex_dump(std::span<const std::uint8_t> b, std::size_t max_bytes) {
  std::string out;
  const std::size_t n = std::min(b.size(), max_bytes);
  for (std::size_t i = 0; i < n; ++i) {
    if (i && i % 16 == 0) out += '\n';
    else if (i) out += ' ';
    out += fmt::format("{:02x}", b[i]);
  }
  if (b.size() > n) out += fmt::format(" ... (+{} bytes)", b.size() - n);
  return out;
}

}  // namespace bytes
}  // namespace vil
