// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vil {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Skew-symmetric matrix such that hat(v) * w == v.cross(w).
Mat3 hat(const Vec3& v);

/// Inverse of hat. Throws InvalidArgument when |m + m^T|_max >= 1e-6.
Vec3 vee(const Mat3& m);

/// Element of SO(3), stored as a unit quaternion with w >= 0.
///
/// Every constructor and every composition re-normalizes, so the matrix view
/// stays orthonormal to machine precision under long chains of products.
class Rotation {
 public:
  Rotation() = default;

  static Rotation identity() { return Rotation(); }
  /// Quaternion in (w, x, y, z) order; need not be normalized, must be nonzero.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_quaternion(const Eigen::Quaterniond& q);
  /// Projects onto SO(3) first (nearest rotation in Frobenius norm).
  static Rotation from_matrix(const Mat3& m);
  static Rotation from_axis_angle(const Vec3& axis, double angle_rad);
  static Rotation about_x(double angle_rad) { return from_axis_angle(Vec3::UnitX(), angle_rad); }
  static Rotation about_y(double angle_rad) { return from_axis_angle(Vec3::UnitY(), angle_rad); }
  static Rotation about_z(double angle_rad) { return from_axis_angle(Vec3::UnitZ(), angle_rad); }
  /// Intrinsic Z-Y-X (yaw, pitch, roll), radians.
  static Rotation from_ypr(double yaw, double pitch, double roll);

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }
  /// (w, x, y, z)
  std::array<double, 4> wxyz() const { return {q_.w(), q_.x(), q_.y(), q_.z()}; }
  /// Rotation angle in [0, pi] and unit axis (x axis when the angle is zero).
  std::pair<Vec3, double> axis_angle() const;
  /// Intrinsic Z-Y-X angles (yaw, pitch, roll), radians. Plotting only.
  Vec3 ypr() const;

  Rotation inverse() const;
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  Rotation operator*(const Rotation& rhs) const;
  Vec3 operator*(const Vec3& v) const { return rotate(v); }

  /// Equality as rotations (q and -q are the same rotation).
  bool approx_equal(const Rotation& other, double tol = 1e-9) const;

 private:
  explicit Rotation(const Eigen::Quaterniond& unit_q);
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Rodrigues exponential of a rotation vector (radians).
Rotation exp_map(const Vec3& omega);

/// Rotation vector of R. Throws DegenerateError when the angle is within 1e-6 of pi.
Vec3 log_map(const Rotation& r);

/// Geodesic distance angle(R1^T R2) in degrees, in [0, 180].
double geodesic_deg(const Rotation& a, const Rotation& b);

/// Rigid transform mapping body-frame coordinates into the parent frame:
/// p_parent = rotation * p_body + position.
struct Pose {
  Vec3 position = Vec3::Zero();
  Rotation rotation;

  static Pose identity() { return {}; }
  Vec3 transform(const Vec3& p_body) const { return rotation * p_body + position; }
  bool approx_equal(const Pose& other, double tol = 1e-9) const;
};

/// a then b: (compose(a, b)).transform(p) == a.transform(b.transform(p)).
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

/// Full rigid-body state; velocity in world frame, angular velocity in body frame.
struct StateVector {
  Pose pose;
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  double timestamp = 0.0;

  bool finite() const;
};

/// Little-endian wire image of a pose: 3 x f64 position then 4 x f64 (w,x,y,z).
inline constexpr std::size_t kPoseWireSize = 56;
std::array<std::uint8_t, kPoseWireSize> encode_pose(const Pose& p);
/// Throws ProtocolError on a short buffer or non-finite values.
Pose decode_pose(std::span<const std::uint8_t> bytes);

}  // namespace vil
