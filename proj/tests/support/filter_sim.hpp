// SPDX-License-Identifier: Apache-2.0
// Closed-loop truth flight with a delayed-fix error-state filter riding along,
// shared by the estimator tests and the acceptance suite.
#pragma once

#include <cmath>
#include <deque>
#include <random>
#include <vector>

#include "vil/estimator.hpp"
#include "vil/vehicle.hpp"

namespace vil::sim {

struct FilterSimConfig {
  double duration = 60.0;
  double dt = 1e-3;
  double vision_period = 0.1;
  double latency = 0.1;
  double pos_sigma = 0.05;
  double rot_sigma = 0.01;
  double inflation = 1.0;
  /// Prior standard deviations; the filter's initial error is drawn from them.
  double p0_pos = 0.1, p0_vel = 0.1, p0_att = 0.02, p0_bg = 2e-3, p0_ba = 2e-2;
  /// Injected constant gyro bias; when zero a bias is drawn from the prior.
  Vec3 gyro_bias = Vec3::Zero();
  vehicle::ImuNoise imu;
  /// Consistency epochs every this many seconds.
  double epoch_period = 1.0;
  std::uint64_t seed = 1;
};

struct FilterSimResult {
  std::vector<est::ConsistencyEpoch> epochs;
  est::FilterState final_state;
  Vec3 true_gyro_bias = Vec3::Zero();
  double max_position_error = 0.0;
};

// Smooth excitation: a slow circle with altitude and yaw oscillation.
inline vehicle::ReferencePoint excitation_reference(double t) {
  const double w = 0.5, r = 2.0, wz = 0.3, az = 0.5, wy = 0.4, ay = 0.4;
  vehicle::ReferencePoint ref;
  ref.position = Vec3(r * std::cos(w * t), r * std::sin(w * t), 2.0 + az * std::sin(wz * t));
  ref.velocity = Vec3(-r * w * std::sin(w * t), r * w * std::cos(w * t), az * wz * std::cos(wz * t));
  ref.acceleration = Vec3(-r * w * w * std::cos(w * t), -r * w * w * std::sin(w * t), -az * wz * wz * std::sin(wz * t));
  ref.yaw = ay * std::sin(wy * t);
  ref.yaw_rate = ay * wy * std::cos(wy * t);
  return ref;
}

inline FilterSimResult run_filter_sim(const FilterSimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto draw = [&](double s) -> Vec3 { return Vec3(n01(rng), n01(rng), n01(rng)) * s; };

  const vehicle::VehicleParams vp;
  StateVector truth;
  const auto r0 = excitation_reference(0.0);
  truth.pose.position = r0.position;
  truth.velocity = r0.velocity;

  vehicle::ImuNoise imu_noise = cfg.imu;
  const Vec3 bg = cfg.gyro_bias.isZero(0.0) ? draw(cfg.p0_bg) : cfg.gyro_bias;
  imu_noise.initial_gyro_bias = bg;
  imu_noise.initial_accel_bias = draw(cfg.p0_ba);
  vehicle::ImuModel imu(imu_noise, cfg.seed * 7919 + 1);

  est::FilterState init;
  init.timestamp = 0.0;
  init.nominal.position = truth.pose.position + draw(cfg.p0_pos);
  init.nominal.velocity = truth.velocity + draw(cfg.p0_vel);
  init.nominal.attitude = truth.pose.rotation * exp_map(draw(cfg.p0_att));
  init.P = est::Cov15::Zero();
  const double sig[5] = {cfg.p0_pos, cfg.p0_vel, cfg.p0_att, cfg.p0_bg, cfg.p0_ba};
  for (int b = 0; b < 5; ++b) init.P.block<3, 3>(3 * b, 3 * b) = Mat3::Identity() * sig[b] * sig[b];

  est::DelayedFilterConfig fc;
  fc.inflation = cfg.inflation;
  fc.noise = {cfg.imu.gyro_density, cfg.imu.accel_density, cfg.imu.gyro_bias_walk, cfg.imu.accel_bias_walk};
  est::DelayedFilter filter(init, fc);

  FilterSimResult res;
  res.true_gyro_bias = bg;
  std::deque<est::PoseMeasurement> in_flight;
  const long steps = std::lround(cfg.duration / cfg.dt);
  const long vision_every = std::lround(cfg.vision_period / cfg.dt);
  const long epoch_every = std::lround(cfg.epoch_period / cfg.dt);
  for (long i = 0; i < steps; ++i) {
    const double t = i * cfg.dt;
    if (i % vision_every == 0 && i > 0) {
      est::PoseMeasurement m;
      m.pose.position = truth.pose.position + draw(cfg.pos_sigma);
      m.pose.rotation = truth.pose.rotation * exp_map(draw(cfg.rot_sigma));
      m.position_cov = Mat3::Identity() * cfg.pos_sigma * cfg.pos_sigma;
      m.rotation_sigma = cfg.rot_sigma;
      m.capture_timestamp = t;
      m.arrival_timestamp = t + cfg.latency;
      in_flight.push_back(m);
    }
    while (!in_flight.empty() && in_flight.front().arrival_timestamp <= t + 1e-9) {
      filter.update_delayed(in_flight.front());
      in_flight.pop_front();
    }
    if (i % epoch_every == 0 && i > 0) {
      const auto e = est::pose_velocity_error(filter.state(), truth);
      res.epochs.push_back({t, e, filter.state().P.topLeftCorner<9, 9>()});
      res.max_position_error = std::max(res.max_position_error, e.head<3>().norm());
    }
    const auto c = vehicle::geometric_control(truth, excitation_reference(t), vp);
    const StateVector next = vehicle::dynamics_step(truth, c.command, cfg.dt, vp);
    const Vec3 accel = (next.velocity - truth.velocity) / cfg.dt;
    filter.predict(imu.sample(truth, accel, cfg.dt), cfg.dt);
    truth = next;
  }
  res.final_state = filter.state();
  return res;
}

}  // namespace vil::sim
