// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "vil/error.hpp"
#include "vil/vehicle.hpp"

using namespace vil;
using namespace vil::vehicle;

namespace {

StateVector hover_state(const Vec3& p = Vec3(0, 0, 2)) {
  StateVector s;
  s.pose.position = p;
  return s;
}

double state_distance(const StateVector& a, const StateVector& b) {
  return (a.pose.position - b.pose.position).norm() + (a.velocity - b.velocity).norm() +
         (a.pose.rotation.matrix() - b.pose.rotation.matrix()).norm() +
         (a.angular_velocity - b.angular_velocity).norm();
}

StateVector integrate(StateVector s, const Command& cmd, double dt, double duration, const VehicleParams& p) {
  const int steps = static_cast<int>(std::lround(duration / dt));
  for (int i = 0; i < steps; ++i) s = dynamics_step(s, cmd, dt, p);
  return s;
}

// Closed loop at 1 kHz; `record` sees each control output.
template <typename F>
StateVector fly(StateVector s, const ReferencePoint& ref, double duration, const VehicleParams& p, F&& record) {
  const double dt = 1e-3;
  const int steps = static_cast<int>(std::lround(duration / dt));
  for (int i = 0; i < steps; ++i) {
    const ControlOutput c = geometric_control(s, ref, p);
    record(c, s);
    s = dynamics_step(s, c.command, dt, p);
  }
  return s;
}

}  // namespace

TEST(Dynamics, HoverEquilibrium) {
  const VehicleParams p;
  const StateVector s0 = hover_state();
  const StateVector s = integrate(s0, {p.mass * p.gravity, Vec3::Zero()}, 1e-3, 10.0, p);
  EXPECT_LT((s.pose.position - s0.pose.position).norm(), 1e-9);
  EXPECT_LT(s.velocity.norm(), 1e-9);
  EXPECT_LT(geodesic_deg(s.pose.rotation, s0.pose.rotation), 1e-9);
  EXPECT_NEAR(s.timestamp, 10.0, 1e-9);
}

TEST(Dynamics, FreeFall) {
  const VehicleParams p;
  const StateVector s = integrate(hover_state(Vec3(0, 0, 10)), {}, 1e-3, 1.0, p);
  EXPECT_NEAR(s.velocity.z(), -9.81, 1e-9);
  EXPECT_NEAR(s.pose.position.z(), 10.0 - 0.5 * 9.81, 1e-9);
}

TEST(Dynamics, TiltedThrustAccelerates) {
  // Oracle: with a fixed attitude the acceleration is R e3 f / m - g e3.
  const VehicleParams p;
  StateVector s = hover_state();
  s.pose.rotation = Rotation::about_x(0.2);
  const Command cmd{20.0, Vec3::Zero()};
  const auto d = state_derivative(s, cmd, p);
  const Vec3 expected = s.pose.rotation * Vec3::UnitZ() * (20.0 / p.mass) - p.gravity * Vec3::UnitZ();
  EXPECT_LT((d.acceleration - expected).norm(), 1e-12);
}

TEST(Dynamics, TorqueFreeSpinConservesAngularMomentum) {
  const VehicleParams p;
  StateVector s = hover_state();
  s.angular_velocity = Vec3(1.0, 0.5, 3.0);
  const double h0 = (p.inertia * s.angular_velocity).norm();
  const double e0 = s.angular_velocity.dot(p.inertia * s.angular_velocity);
  s = integrate(s, {}, 1e-3, 10.0, p);
  EXPECT_NEAR((p.inertia * s.angular_velocity).norm(), h0, 1e-6);
  EXPECT_NEAR(s.angular_velocity.dot(p.inertia * s.angular_velocity), e0, 1e-6);
  // Principal-axis spin stays on that axis.
  StateVector z = hover_state();
  z.angular_velocity = Vec3(0, 0, 5.0);
  z = integrate(z, {}, 1e-3, 10.0, p);
  EXPECT_LT((z.angular_velocity - Vec3(0, 0, 5.0)).norm(), 1e-9);
}

TEST(Dynamics, Rk4ConvergenceOrder) {
  const VehicleParams p;
  StateVector s0 = hover_state();
  s0.velocity = Vec3(0.5, -0.3, 0.2);
  s0.angular_velocity = Vec3(1.0, 2.0, 0.5);
  const Command cmd{20.0, Vec3(0.01, -0.02, 0.005)};
  const StateVector ref = integrate(s0, cmd, 1e-4, 2.0, p);
  const double e1 = state_distance(integrate(s0, cmd, 1e-2, 2.0, p), ref);
  const double e2 = state_distance(integrate(s0, cmd, 5e-3, 2.0, p), ref);
  EXPECT_NEAR(e1 / e2, 16.0, 4.0) << "errors " << e1 << " " << e2;
}

TEST(Dynamics, RotationStaysOrthonormalOverMillionSteps) {
  const VehicleParams p;
  StateVector s = hover_state();
  s.angular_velocity = Vec3(0.7, -1.1, 2.3);
  s = integrate(s, {}, 1e-3, 1000.0, p);
  const Mat3 r = s.pose.rotation.matrix();
  EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dynamics, RejectsBadInput) {
  const VehicleParams p;
  const StateVector s = hover_state();
  EXPECT_THROW(dynamics_step(s, {}, 0.0, p), InvalidArgument);
  EXPECT_THROW(dynamics_step(s, {}, 0.02, p), InvalidArgument);
  EXPECT_THROW(dynamics_step(s, {-1.0, Vec3::Zero()}, 1e-3, p), InvalidArgument);
  EXPECT_THROW(dynamics_step(s, {p.max_thrust + 1.0, Vec3::Zero()}, 1e-3, p), InvalidArgument);
  EXPECT_THROW(dynamics_step(s, {1.0, Vec3(NAN, 0, 0)}, 1e-3, p), InvalidArgument);
}

TEST(Control, ZeroErrorOnReference) {
  const VehicleParams p;
  ReferencePoint ref;
  ref.position = Vec3(1, 2, 3);
  const StateVector s = hover_state(ref.position);
  const auto c = geometric_control(s, ref, p);
  EXPECT_LT(c.e_x.norm() + c.e_v.norm() + c.e_R.norm() + c.e_Omega.norm(), 1e-12);
  EXPECT_NEAR(c.command.thrust, p.mass * p.gravity, 1e-12);
  EXPECT_LT(c.command.moment.norm(), 1e-12);
  EXPECT_FALSE(c.thrust_clamped);
}

TEST(Control, GyroscopicFeedforwardOnYawRateReference) {
  const VehicleParams p;
  ReferencePoint ref;
  ref.yaw_rate = 0.8;
  StateVector s = hover_state(Vec3::Zero());
  s.angular_velocity = Vec3(0, 0, 0.8);
  const auto c = geometric_control(s, ref, p);
  EXPECT_LT(c.e_Omega.norm(), 1e-12);
  const Vec3 w = s.angular_velocity;
  EXPECT_LT((c.command.moment - w.cross(p.inertia * w)).norm(), 1e-12);
}

TEST(Control, AttitudeErrorAnalytic) {
  for (double th : {0.1, 0.5, 1.2, -0.7}) {
    const Vec3 e = attitude_error(Rotation::about_z(th), Rotation());
    EXPECT_LT((e - Vec3(0, 0, std::sin(th))).norm(), 1e-15);
  }
}

TEST(Control, RecoversFromTenDegreeTilt) {
  const VehicleParams p;
  ReferencePoint ref;
  ref.position = Vec3(0, 0, 2);
  StateVector s = hover_state(ref.position);
  s.pose.rotation = Rotation::about_x(deg2rad(10.0));
  double err = 0.0;
  s = fly(s, ref, 2.0, p, [&](const ControlOutput& c, const StateVector& st) {
    err = geodesic_deg(st.pose.rotation, c.desired_attitude);
  });
  EXPECT_LT(geodesic_deg(s.pose.rotation, Rotation()), 1.0);
  EXPECT_LT(err, 1.0);
}

TEST(Control, YawEquivariance) {
  const VehicleParams p;
  ReferencePoint ref;
  ref.position = Vec3(1.0, 0.5, 2.0);
  ref.yaw = 0.3;
  StateVector s0 = hover_state(Vec3(0.2, -0.4, 1.5));
  s0.velocity = Vec3(0.3, 0.1, -0.2);
  s0.pose.rotation = Rotation::from_ypr(0.1, 0.15, -0.1);
  s0.angular_velocity = Vec3(0.2, -0.1, 0.3);

  const double psi = 1.1;
  const Rotation rz = Rotation::about_z(psi);
  ReferencePoint ref2 = ref;
  ref2.position = rz * ref.position;
  ref2.yaw = ref.yaw + psi;
  StateVector s2 = s0;
  s2.pose.position = rz * s0.pose.position;
  s2.velocity = rz * s0.velocity;
  s2.pose.rotation = rz * s0.pose.rotation;

  std::vector<Vec3> a, b;
  fly(s0, ref, 3.0, p, [&](const ControlOutput& c, const StateVector&) {
    a.push_back(Vec3(c.e_x.norm(), c.e_v.norm(), c.e_R.norm()));
    a.push_back(c.e_Omega);
  });
  fly(s2, ref2, 3.0, p, [&](const ControlOutput& c, const StateVector&) {
    b.push_back(Vec3(c.e_x.norm(), c.e_v.norm(), c.e_R.norm()));
    b.push_back(c.e_Omega);
  });
  ASSERT_EQ(a.size(), b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (a[i] - b[i]).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-9);
}

TEST(Control, ThrustClampFlagged) {
  const VehicleParams p;
  ReferencePoint ref;
  ref.position = Vec3(0, 0, 50);
  const auto up = geometric_control(hover_state(), ref, p);
  EXPECT_TRUE(up.thrust_clamped);
  EXPECT_EQ(up.command.thrust, p.max_thrust);
  ref.position = Vec3(0, 0, -50);
  const auto down = geometric_control(hover_state(), ref, p);
  EXPECT_TRUE(down.thrust_clamped);
  EXPECT_EQ(down.command.thrust, 0.0);
}

TEST(Control, TracksStraightTrajectory) {
  const VehicleParams p;
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::straight;
  spec.start = Vec3(-6, 0, 0);
  spec.end = Vec3(-2, 0, 0);
  const auto traj = make_trajectory(spec);
  StateVector s = hover_state(spec.start);
  double worst = 0.0;
  const double dt = 1e-3;
  for (double t = 0.0; t < traj.duration(); t += dt) {
    const auto c = geometric_control(s, traj.at(s.timestamp), p);
    worst = std::max(worst, c.e_x.norm());
    s = dynamics_step(s, c.command, dt, p);
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Trajectory, HoverIsConstant) {
  TrajectorySpec spec;
  spec.start = Vec3(1, 2, 3);
  spec.duration = 5.0;
  const auto traj = make_trajectory(spec);
  EXPECT_DOUBLE_EQ(traj.duration(), 5.0);
  for (double t : {0.0, 1.3, 4.9, 7.0}) {
    const auto r = traj.at(t);
    EXPECT_EQ(r.position, spec.start);
    EXPECT_EQ(r.velocity, Vec3::Zero());
    EXPECT_EQ(r.acceleration, Vec3::Zero());
  }
}

TEST(Trajectory, StraightMidpoint) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::straight;
  spec.takeoff_landing = false;
  spec.start = Vec3(-8, 1, 2);
  spec.end = Vec3(-2, -1, 2.5);
  const auto traj = make_trajectory(spec);
  ASSERT_EQ(traj.segments().size(), 1u);
  const double T = traj.duration();
  EXPECT_LT((traj.at(0.5 * T).position - 0.5 * (spec.start + spec.end)).norm(), 1e-12);
  EXPECT_LT((traj.at(T).position - spec.end).norm(), 1e-12);
  EXPECT_LT(traj.at(T).velocity.norm(), 1e-12);
  // Peak speed of a quintic rest-to-rest move is 15/8 of the mean speed.
  const double mean = (spec.end - spec.start).norm() / T;
  EXPECT_NEAR(traj.at(0.5 * T).velocity.norm(), 1.875 * mean, 1e-9);
  EXPECT_LE(traj.at(0.5 * T).velocity.norm(), spec.cruise_speed + 1e-9);
}

TEST(Trajectory, ZigzagPathLength) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::zigzag;
  spec.start = Vec3(-10, 0, 0);
  spec.end = Vec3(-2, 0, 0);
  spec.legs = 4;
  const auto traj = make_trajectory(spec);
  // Independent sum of leg lengths from the waypoint construction.
  const double cruise = spec.cruise_altitude;
  std::vector<Vec3> w{Vec3(-10, 0, cruise), Vec3(-8, 2, cruise), Vec3(-6, -2, cruise), Vec3(-4, 2, cruise),
                      Vec3(-2, 0, cruise)};
  double legs = 2.0 * cruise;
  for (std::size_t i = 1; i < w.size(); ++i) legs += (w[i] - w[i - 1]).norm();
  EXPECT_NEAR(traj.path_length(), legs, 1e-9);
  // Numeric arc length of the sampled reference.
  double arc = 0.0;
  Vec3 prev = traj.at(0.0).position;
  for (double t = 1e-3; t <= traj.duration(); t += 1e-3) {
    const Vec3 cur = traj.at(t).position;
    arc += (cur - prev).norm();
    prev = cur;
  }
  EXPECT_NEAR(arc, legs, 0.01 * legs);
}

TEST(Trajectory, ContinuousAtJoins) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::zigzag;
  spec.start = Vec3(-10, 0, 0);
  spec.end = Vec3(-2, 0, 0);
  const auto traj = make_trajectory(spec);
  for (const auto& seg : traj.segments()) {
    if (seg.t0 == 0.0) continue;
    const auto a = traj.at(seg.t0 - 1e-9), b = traj.at(seg.t0 + 1e-9);
    EXPECT_LT((a.position - b.position).norm(), 1e-8);
    EXPECT_LT((a.velocity - b.velocity).norm(), 1e-6);
    EXPECT_LT((a.acceleration - b.acceleration).norm(), 1e-4);
  }
  // Acceleration matches the numerical derivative of velocity inside a move.
  const auto& mv = traj.segments()[1];
  const double t = mv.t0 + 0.3 * mv.duration, h = 1e-5;
  const Vec3 num = (traj.at(t + h).velocity - traj.at(t - h).velocity) / (2 * h);
  EXPECT_LT((traj.at(t).acceleration - num).norm(), 1e-6);
}

TEST(Trajectory, RejectsBadSpecs) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::straight;
  spec.start = Vec3(-5, 0, 0);
  spec.end = Vec3(-20, 0, 0);
  EXPECT_THROW(make_trajectory(spec), InvalidArgument);
  spec.end = Vec3(-2, 0, 0);
  spec.cruise_speed = 0.0;
  EXPECT_THROW(make_trajectory(spec), InvalidArgument);
  TrajectorySpec hover;
  hover.duration = 0.0;
  EXPECT_THROW(make_trajectory(hover), InvalidArgument);
}

TEST(Imu, NoiseFreeSpecificForce) {
  ImuNoise noise{0, 0, 0, 0, Vec3::Zero(), Vec3::Zero()};
  ImuModel imu(noise, 1);
  const StateVector s = hover_state();
  const auto rest = imu.sample(s, Vec3::Zero(), 1e-3);
  EXPECT_LT(rest.gyro.norm(), 1e-15);
  EXPECT_LT((rest.accel - Vec3(0, 0, 9.81)).norm(), 1e-12);
  const auto fall = imu.sample(s, Vec3(0, 0, -9.81), 1e-3);
  EXPECT_LT(fall.accel.norm(), 1e-12);
  StateVector tilted = s;
  tilted.pose.rotation = Rotation::about_y(0.3);
  tilted.angular_velocity = Vec3(0.1, 0.2, 0.3);
  const auto t = imu.sample(tilted, Vec3::Zero(), 1e-3);
  EXPECT_LT((t.accel - tilted.pose.rotation.matrix().transpose() * Vec3(0, 0, 9.81)).norm(), 1e-12);
  EXPECT_EQ(t.gyro, tilted.angular_velocity);
}

TEST(Imu, DeterministicForSeed) {
  const ImuNoise noise;
  ImuModel a(noise, 9), b(noise, 9), c(noise, 10);
  const StateVector s = hover_state();
  for (int i = 0; i < 100; ++i) {
    const auto sa = a.sample(s, Vec3::Zero(), 1e-3), sb = b.sample(s, Vec3::Zero(), 1e-3);
    const auto sc = c.sample(s, Vec3::Zero(), 1e-3);
    EXPECT_EQ(sa.gyro, sb.gyro);
    EXPECT_EQ(sa.accel, sb.accel);
    if (i == 99) {
      EXPECT_NE(sa.gyro, sc.gyro);
    }
  }
}

TEST(Imu, GyroAllanDeviationMatchesDensity) {
  ImuNoise noise;
  noise.gyro_bias_walk = 0.0;
  ImuModel imu(noise, 3);
  const StateVector s = hover_state();
  const double dt = 1e-3;
  const int n = 1000000;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = imu.sample(s, Vec3::Zero(), dt).gyro.x();
  // Non-overlapping Allan variance; for white rate noise sigma(tau) = N / sqrt(tau).
  for (int m : {10, 100, 1000}) {
    const double tau = m * dt;
    std::vector<double> avg;
    for (int k = 0; k + m <= n; k += m) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += x[k + j];
      avg.push_back(acc / m);
    }
    double av = 0.0;
    for (std::size_t k = 1; k < avg.size(); ++k) av += (avg[k] - avg[k - 1]) * (avg[k] - avg[k - 1]);
    av /= 2.0 * static_cast<double>(avg.size() - 1);
    const double density = std::sqrt(av * tau);
    EXPECT_NEAR(density / noise.gyro_density, 1.0, 0.1) << "tau " << tau;
  }
}

TEST(Imu, BiasRandomWalkGrowth) {
  // Bias variance after T seconds is walk^2 * T; check the spread across seeds.
  ImuNoise noise;
  noise.gyro_bias_walk = 1e-3;
  const StateVector s = hover_state();
  double var = 0.0;
  const int seeds = 400;
  for (int seed = 0; seed < seeds; ++seed) {
    ImuModel imu(noise, seed);
    for (int i = 0; i < 1000; ++i) imu.sample(s, Vec3::Zero(), 1e-3);
    var += imu.gyro_bias().squaredNorm() / 3.0;
  }
  var /= seeds;
  EXPECT_NEAR(var / (1e-6 * 1.0), 1.0, 0.15);
}
