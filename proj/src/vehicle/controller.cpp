// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "vil/vehicle.hpp"

namespace vil::vehicle {

Vec3 attitude_error(const Rotation& r, const Rotation& rd) {
  const Mat3 rm = r.matrix(), rdm = rd.matrix();
  const Mat3 d = rdm.transpose() * rm - rm.transpose() * rdm;
  return 0.5 * Vec3(d(2, 1), d(0, 2), d(1, 0));
}

ControlOutput geometric_control(const StateVector& s, const ReferencePoint& ref, const VehicleParams& p) {
  ControlOutput out;
  out.e_x = s.pose.position - ref.position;
  out.e_v = s.velocity - ref.velocity;

  Vec3 f_des = -p.kx * out.e_x - p.kv * out.e_v + p.mass * (p.gravity * Vec3::UnitZ() + ref.acceleration);
  if (!(f_des.norm() > 1e-9)) f_des = Vec3::UnitZ() * 1e-9;  // free-fall reference: keep b3d defined
  const Vec3 b3d = f_des.normalized();
  const Vec3 b1c(std::cos(ref.yaw), std::sin(ref.yaw), 0.0);
  Vec3 b2d = b3d.cross(b1c);
  if (b2d.norm() < 1e-9) b2d = b3d.cross(Vec3::UnitX());  // heading undefined when b3d is horizontal
  b2d.normalize();
  const Vec3 b1d = b2d.cross(b3d);
  Mat3 rd;
  rd.col(0) = b1d;
  rd.col(1) = b2d;
  rd.col(2) = b3d;
  out.desired_attitude = Rotation::from_matrix(rd);

  const Mat3 r = s.pose.rotation.matrix();
  const Mat3 rdm = out.desired_attitude.matrix();
  const Vec3 omega_d = rdm.transpose() * Vec3::UnitZ() * ref.yaw_rate;
  out.e_R = attitude_error(s.pose.rotation, out.desired_attitude);
  out.e_Omega = s.angular_velocity - r.transpose() * rdm * omega_d;

  const double f = f_des.dot(r * Vec3::UnitZ());
  out.command.thrust = std::clamp(f, 0.0, p.max_thrust);
  out.thrust_clamped = out.command.thrust != f;
  const Vec3& w = s.angular_velocity;
  out.command.moment = -p.kR * out.e_R - p.kOmega * out.e_Omega + w.cross(p.inertia * w);
  return out;
}

}  // namespace vil::vehicle
