// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/geometry.hpp"

namespace vil {

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) {
  const double asym = (m + m.transpose()).cwiseAbs().maxCoeff();
  if (!(asym < 1e-6)) {
    throw InvalidArgument(fmt::format("vee: matrix is not skew-symmetric (|m + m^T|_max = {:.3g})", asym));
  }
  return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1))};
}

Rotation::Rotation(const Eigen::Quaterniond& unit_q) : q_(unit_q) {
  q_.normalize();
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  return from_quaternion(Eigen::Quaterniond(w, x, y, z));
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) throw InvalidArgument("quaternion must be finite and nonzero");
  return Rotation(q);
}

Rotation Rotation::from_matrix(const Mat3& m) {
  if (!m.allFinite()) throw InvalidArgument("rotation matrix must be finite");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return Rotation(Eigen::Quaterniond(r));
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw InvalidArgument("axis must be nonzero");
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis / n)));
}

Rotation Rotation::from_ypr(double yaw, double pitch, double roll) {
  return about_z(yaw) * about_y(pitch) * about_x(roll);
}

std::pair<Vec3, double> Rotation::axis_angle() const {
  const Vec3 v = q_.vec();
  const double s = v.norm();
  if (s < 1e-300) return {Vec3::UnitX(), 0.0};
  return {v / s, 2.0 * std::atan2(s, q_.w())};
}

Vec3 Rotation::ypr() const {
  const Mat3 m = matrix();
  const double pitch = std::asin(std::clamp(-m(2, 0), -1.0, 1.0));
  const double yaw = std::atan2(m(1, 0), m(0, 0));
  const double roll = std::atan2(m(2, 1), m(2, 2));
  return {yaw, pitch, roll};
}

Rotation Rotation::inverse() const { return Rotation(q_.conjugate()); }

Rotation Rotation::operator*(const Rotation& rhs) const { return Rotation(q_ * rhs.q_); }

bool Rotation::approx_equal(const Rotation& other, double tol) const {
  // Both are canonical (w >= 0) but w == 0 leaves a residual sign ambiguity.
  const double d = std::min((q_.coeffs() - other.q_.coeffs()).cwiseAbs().maxCoeff(),
                            (q_.coeffs() + other.q_.coeffs()).cwiseAbs().maxCoeff());
  return d <= tol;
}

Rotation exp_map(const Vec3& omega) {
  const double theta = omega.norm();
  const double half = 0.5 * theta;
  // sin(x)/x series below 1e-4 keeps full precision for tiny angles.
  const double k = theta < 1e-4 ? 0.5 - theta * theta / 48.0 : std::sin(half) / theta;
  return Rotation::from_quaternion(std::cos(half), k * omega.x(), k * omega.y(), k * omega.z());
}

Vec3 log_map(const Rotation& r) {
  const auto& q = r.quaternion();
  const Vec3 v = q.vec();
  const double s = v.norm();
  const double theta = 2.0 * std::atan2(s, q.w());
  if (theta >= kPi - 1e-6) {
    throw DegenerateError(fmt::format("log_map: angle {:.9f} rad is at the cut locus", theta));
  }
  if (s < 1e-12) {
    // theta ~ 2 s / w; first-order inverse is exact to rounding here.
    return v * (2.0 / q.w());
  }
  return v * (theta / s);
}

double geodesic_deg(const Rotation& a, const Rotation& b) {
  const Eigen::Quaterniond d = a.quaternion().conjugate() * b.quaternion();
  const double s = d.vec().norm();
  const double c = std::abs(d.w());
  return rad2deg(2.0 * std::atan2(s, c));
}

}  // namespace vil
