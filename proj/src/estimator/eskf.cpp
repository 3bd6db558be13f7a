// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/estimator.hpp"

namespace vil::est {
namespace {

void symmetrize(Cov15& p) { p = 0.5 * (p + p.transpose()).eval(); }

}  // namespace

FilterState predict(const FilterState& fs, const vehicle::ImuSample& imu, double dt, const FilterNoise& noise,
                    double gravity) {
  if (!(dt > 0.0 && dt <= 0.02)) throw InvalidArgument(fmt::format("predict: dt {} outside (0, 0.02]", dt));
  if (!imu.gyro.allFinite() || !imu.accel.allFinite()) throw InvalidArgument("predict: non-finite IMU sample");

  const NominalState& n = fs.nominal;
  const Vec3 omega = imu.gyro - n.gyro_bias;
  const Vec3 acc_body = imu.accel - n.accel_bias;
  const Mat3 r = n.attitude.matrix();
  const Vec3 acc_world = r * acc_body - gravity * Vec3::UnitZ();

  FilterState out;
  out.timestamp = fs.timestamp + dt;
  out.nominal = n;
  out.nominal.position = n.position + n.velocity * dt + 0.5 * acc_world * dt * dt;
  out.nominal.velocity = n.velocity + acc_world * dt;
  out.nominal.attitude = n.attitude * exp_map(omega * dt);

  Cov15 f = Cov15::Identity();
  f.block<3, 3>(idx::pos, idx::vel) = Mat3::Identity() * dt;
  f.block<3, 3>(idx::vel, idx::att) = -r * hat(acc_body) * dt;
  f.block<3, 3>(idx::vel, idx::ba) = -r * dt;
  f.block<3, 3>(idx::att, idx::att) = exp_map(-omega * dt).matrix();
  f.block<3, 3>(idx::att, idx::bg) = -Mat3::Identity() * dt;

  Vec15 q = Vec15::Zero();
  q.segment<3>(idx::vel).setConstant(noise.accel_density * noise.accel_density * dt);
  q.segment<3>(idx::att).setConstant(noise.gyro_density * noise.gyro_density * dt);
  q.segment<3>(idx::bg).setConstant(noise.gyro_bias_walk * noise.gyro_bias_walk * dt);
  q.segment<3>(idx::ba).setConstant(noise.accel_bias_walk * noise.accel_bias_walk * dt);

  out.P = f * fs.P * f.transpose();
  out.P.diagonal() += q;
  symmetrize(out.P);
  return out;
}

FilterState update_pose(const FilterState& fs, const PoseMeasurement& m, double inflation, double* nis_out) {
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  Eigen::Matrix<double, 6, kErrorDim> h = Eigen::Matrix<double, 6, kErrorDim>::Zero();
  h.block<3, 3>(0, idx::pos).setIdentity();
  h.block<3, 3>(3, idx::att).setIdentity();

  Vec6 r;
  r.head<3>() = m.pose.position - fs.nominal.position;
  r.tail<3>() = log_map(fs.nominal.attitude.inverse() * m.pose.rotation);

  Mat6 rn = Mat6::Zero();
  rn.block<3, 3>(0, 0) = inflation * m.position_cov;
  rn.block<3, 3>(3, 3) = Mat3::Identity() * (inflation * m.rotation_sigma * m.rotation_sigma);

  const Mat6 s = h * fs.P * h.transpose() + rn;
  const Eigen::LDLT<Mat6> s_ldlt(s);
  const Eigen::Matrix<double, kErrorDim, 6> k = (s_ldlt.solve(h * fs.P)).transpose();
  if (nis_out) *nis_out = r.dot(s_ldlt.solve(r));
  const Vec15 dx = k * r;

  FilterState out = fs;
  const Cov15 ikh = Cov15::Identity() - k * h;
  out.P = ikh * fs.P * ikh.transpose() + k * rn * k.transpose();

  out.nominal.position += dx.segment<3>(idx::pos);
  out.nominal.velocity += dx.segment<3>(idx::vel);
  out.nominal.attitude = out.nominal.attitude * exp_map(dx.segment<3>(idx::att));
  out.nominal.gyro_bias += dx.segment<3>(idx::bg);
  out.nominal.accel_bias += dx.segment<3>(idx::ba);

  // Reset the attitude error to the new nominal.
  Cov15 g = Cov15::Identity();
  g.block<3, 3>(idx::att, idx::att) = Mat3::Identity() - 0.5 * hat(dx.segment<3>(idx::att));
  out.P = g * out.P * g.transpose();
  symmetrize(out.P);
  return out;
}

Eigen::Matrix<double, 9, 1> pose_velocity_error(const FilterState& fs, const StateVector& truth) {
  Eigen::Matrix<double, 9, 1> e;
  e.segment<3>(0) = truth.pose.position - fs.nominal.position;
  e.segment<3>(3) = truth.velocity - fs.nominal.velocity;
  e.segment<3>(6) = log_map(fs.nominal.attitude.inverse() * truth.pose.rotation);
  return e;
}

}  // namespace vil::est
