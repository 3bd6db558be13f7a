// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "vil/error.hpp"
#include "vil/vehicle.hpp"

namespace vil::vehicle {

ImuModel::ImuModel(const ImuNoise& noise, std::uint64_t seed, double gravity)
    : noise_(noise), gravity_(gravity), rng_(seed), gyro_bias_(noise.initial_gyro_bias),
      accel_bias_(noise.initial_accel_bias) {}

ImuSample ImuModel::sample(const StateVector& s, const Vec3& accel_world, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("imu sample interval must be positive");
  auto draw = [&] { return Vec3(gauss_(rng_), gauss_(rng_), gauss_(rng_)); };
  const double sqrt_dt = std::sqrt(dt);
  const Vec3 n_g = draw() * (noise_.gyro_density / sqrt_dt);
  const Vec3 n_a = draw() * (noise_.accel_density / sqrt_dt);
  const Vec3 w_g = draw() * (noise_.gyro_bias_walk * sqrt_dt);
  const Vec3 w_a = draw() * (noise_.accel_bias_walk * sqrt_dt);

  ImuSample out;
  out.timestamp = s.timestamp;
  out.gyro_bias = gyro_bias_;
  out.accel_bias = accel_bias_;
  out.gyro = s.angular_velocity + gyro_bias_ + n_g;
  out.accel = s.pose.rotation.inverse() * (accel_world + gravity_ * Vec3::UnitZ()) + accel_bias_ + n_a;
  gyro_bias_ += w_g;
  accel_bias_ += w_a;
  return out;
}

}  // namespace vil::vehicle
