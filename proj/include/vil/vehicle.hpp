// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vil/geometry.hpp"

namespace vil::vehicle {

/// Quadrotor parameters. World frame is z-up with gravity along -z; body z is the thrust axis.
struct VehicleParams {
  double mass = 1.5;
  Mat3 inertia = Vec3(0.02, 0.02, 0.04).asDiagonal();
  double gravity = 9.81;
  double max_thrust = 36.0;
  double kx = 6.0;
  double kv = 5.4;
  double kR = 2.0;
  double kOmega = 0.36;

  void validate() const;
};

/// Collective thrust (N) along body z and body moment (N m).
struct Command {
  double thrust = 0.0;
  Vec3 moment = Vec3::Zero();
};

struct StateDerivative {
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Vec3 angular_acceleration = Vec3::Zero();
};

StateDerivative state_derivative(const StateVector& s, const Command& cmd, const VehicleParams& p);

/// One RK4 step of the Newton-Euler equations, with the attitude advanced on
/// SO(3) through the exponential map (Munthe-Kaas form). Throws
/// InvalidArgument for dt outside (0, 0.01], a non-finite command, or thrust
/// outside [0, max_thrust].
StateVector dynamics_step(const StateVector& s, const Command& cmd, double dt, const VehicleParams& p);

struct ReferencePoint {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

struct ControlOutput {
  Command command;
  Vec3 e_x = Vec3::Zero();
  Vec3 e_v = Vec3::Zero();
  Vec3 e_R = Vec3::Zero();
  Vec3 e_Omega = Vec3::Zero();
  Rotation desired_attitude;
  bool thrust_clamped = false;
};

/// e_R = 1/2 vee(Rd^T R - R^T Rd)
Vec3 attitude_error(const Rotation& r, const Rotation& rd);

/// Geometric tracking law on SE(3), non-adaptive, fixed gains.
ControlOutput geometric_control(const StateVector& s, const ReferencePoint& ref, const VehicleParams& p);

enum class TrajectoryKind { hover, straight, zigzag };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::hover;
  /// Takeoff and landing point (hover: the hover point).
  Vec3 start = Vec3::Zero();
  /// Horizontal goal; its z is ignored when takeoff/landing is enabled.
  Vec3 end = Vec3::Zero();
  double cruise_altitude = 2.0;
  int legs = 4;
  double lateral_amplitude = 2.0;
  double cruise_speed = 1.0;
  /// Minimum duration of each quintic move (s).
  double blend_duration = 1.0;
  /// Pause at each waypoint (s).
  double hold = 1.0;
  bool takeoff_landing = true;
  double yaw = 0.0;
  /// Hover only: total duration (s).
  double duration = 10.0;
  /// Every waypoint must lie within this distance of the origin (m).
  double max_range = 15.0;
};

/// Piecewise rest-to-rest path: each move uses a quintic time scaling, so
/// position, velocity and acceleration are continuous at the joins.
class ReferenceTrajectory {
 public:
  struct Segment {
    double t0 = 0.0;
    double duration = 0.0;
    Vec3 from = Vec3::Zero();
    Vec3 to = Vec3::Zero();
    const char* label = "";
  };

  ReferenceTrajectory(std::vector<Segment> segments, double yaw);

  ReferencePoint at(double t) const;
  double duration() const;
  const std::vector<Segment>& segments() const { return segments_; }
  /// Sum of straight-line segment lengths.
  double path_length() const;

 private:
  std::vector<Segment> segments_;
  double yaw_;
};

/// Throws InvalidArgument on a bad spec (non-positive speed, waypoints outside max_range, ...).
ReferenceTrajectory make_trajectory(const TrajectorySpec& spec);

struct ImuNoise {
  double gyro_density = 1.7e-4;      // rad/s/sqrt(Hz)
  double accel_density = 1.4e-3;     // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1e-5;      // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 1e-4;     // m/s^3/sqrt(Hz)
  Vec3 initial_gyro_bias = Vec3::Zero();
  Vec3 initial_accel_bias = Vec3::Zero();
};

struct ImuSample {
  double timestamp = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body
  Vec3 accel = Vec3::Zero();  // specific force, m/s^2, body
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
};

/// IMU measurement model with random-walk biases; deterministic for a given seed.
class ImuModel {
 public:
  ImuModel(const ImuNoise& noise, std::uint64_t seed, double gravity = 9.81);

  /// `accel_world` is the true world-frame acceleration over the sample interval `dt`.
  ImuSample sample(const StateVector& s, const Vec3& accel_world, double dt);

  const Vec3& gyro_bias() const { return gyro_bias_; }
  const Vec3& accel_bias() const { return accel_bias_; }

 private:
  ImuNoise noise_;
  double gravity_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  Vec3 gyro_bias_;
  Vec3 accel_bias_;
};

}  // namespace vil::vehicle
