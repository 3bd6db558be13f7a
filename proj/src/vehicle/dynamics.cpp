// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/vehicle.hpp"

namespace vil::vehicle {
namespace {

struct Stage {
  Vec3 x, v, u, w;  // position, velocity, Lie-algebra offset of attitude, body rate
};

Stage operator+(const Stage& a, const Stage& b) { return {a.x + b.x, a.v + b.v, a.u + b.u, a.w + b.w}; }
Stage operator*(double s, const Stage& a) { return {s * a.x, s * a.v, s * a.u, s * a.w}; }

// Truncated inverse of the SO(3) exponential's differential for R = R0 exp(u)
// driven by body rates, sufficient for fourth order.
Vec3 dexp_inv(const Vec3& u, const Vec3& w) {
  const Vec3 uw = u.cross(w);
  return w + 0.5 * uw + (1.0 / 12.0) * u.cross(uw);
}

}  // namespace

void VehicleParams::validate() const {
  if (!(mass > 0.0)) throw InvalidArgument("vehicle mass must be positive");
  if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      inertia.llt().info() != Eigen::Success) {
    throw InvalidArgument("vehicle inertia must be symmetric positive definite");
  }
  if (!(gravity > 0.0) || !(max_thrust > 0.0)) throw InvalidArgument("gravity and max thrust must be positive");
  if (!(kx > 0.0 && kv > 0.0 && kR > 0.0 && kOmega > 0.0)) throw InvalidArgument("control gains must be positive");
}

StateDerivative state_derivative(const StateVector& s, const Command& cmd, const VehicleParams& p) {
  StateDerivative d;
  d.velocity = s.velocity;
  d.acceleration = -p.gravity * Vec3::UnitZ() + (cmd.thrust / p.mass) * (s.pose.rotation * Vec3::UnitZ());
  const Vec3& w = s.angular_velocity;
  d.angular_acceleration = p.inertia.ldlt().solve(cmd.moment - w.cross(p.inertia * w));
  return d;
}

StateVector dynamics_step(const StateVector& s, const Command& cmd, double dt, const VehicleParams& p) {
  if (!(dt > 0.0 && dt <= 0.01)) throw InvalidArgument(fmt::format("dynamics_step: dt {} outside (0, 0.01]", dt));
  if (!std::isfinite(cmd.thrust) || !cmd.moment.allFinite()) throw InvalidArgument("dynamics_step: non-finite command");
  if (cmd.thrust < 0.0 || cmd.thrust > p.max_thrust) {
    throw InvalidArgument(fmt::format("dynamics_step: thrust {} outside [0, {}]", cmd.thrust, p.max_thrust));
  }

  const Mat3 r0 = s.pose.rotation.matrix();
  const auto ldlt = p.inertia.ldlt();
  const Vec3 thrust_accel = (cmd.thrust / p.mass) * Vec3::UnitZ();
  auto f = [&](const Stage& y) -> Stage {
    const Mat3 r = r0 * exp_map(y.u).matrix();
    return {y.v, -p.gravity * Vec3::UnitZ() + r * thrust_accel, dexp_inv(y.u, y.w),
            ldlt.solve(cmd.moment - y.w.cross(p.inertia * y.w))};
  };

  const Stage y0{s.pose.position, s.velocity, Vec3::Zero(), s.angular_velocity};
  const Stage k1 = f(y0);
  const Stage k2 = f(y0 + (0.5 * dt) * k1);
  const Stage k3 = f(y0 + (0.5 * dt) * k2);
  const Stage k4 = f(y0 + dt * k3);
  const Stage y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  StateVector out;
  out.pose.position = y1.x;
  out.pose.rotation = s.pose.rotation * exp_map(y1.u);
  out.velocity = y1.v;
  out.angular_velocity = y1.w;
  out.timestamp = s.timestamp + dt;
  return out;
}

}  // namespace vil::vehicle
