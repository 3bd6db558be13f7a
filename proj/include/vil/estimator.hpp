// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vil/geometry.hpp"
#include "vil/vehicle.hpp"

namespace vil::est {

inline constexpr int kErrorDim = 15;
using Cov15 = Eigen::Matrix<double, kErrorDim, kErrorDim>;
using Vec15 = Eigen::Matrix<double, kErrorDim, 1>;

/// Error-state ordering: position, velocity, attitude (local, R = R_hat exp(dtheta)), gyro bias, accel bias.
namespace idx {
inline constexpr int pos = 0;
inline constexpr int vel = 3;
inline constexpr int att = 6;
inline constexpr int bg = 9;
inline constexpr int ba = 12;
}  // namespace idx

struct NominalState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Rotation attitude;
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
};

struct FilterState {
  NominalState nominal;
  Cov15 P = Cov15::Identity();
  double timestamp = 0.0;
};

/// Continuous-time densities driving Q.
struct FilterNoise {
  double gyro_density = 1.7e-4;
  double accel_density = 1.4e-3;
  double gyro_bias_walk = 1e-5;
  double accel_bias_walk = 1e-4;
};

struct PoseMeasurement {
  Pose pose;
  Mat3 position_cov = Mat3::Identity() * 0.01;
  double rotation_sigma = 0.02;  // rad, isotropic
  double capture_timestamp = 0.0;
  double arrival_timestamp = 0.0;
};

/// Strapdown propagation with bias-corrected IMU, P <- F P F^T + Q.
/// Throws InvalidArgument for dt outside (0, 0.02] or non-finite input.
FilterState predict(const FilterState& fs, const vehicle::ImuSample& imu, double dt, const FilterNoise& noise,
                    double gravity = 9.81);

/// Joseph-form pose update applied at the filter's own timestamp. Position
/// residual is linear, attitude residual is log(R_hat^T R_meas). The
/// measurement covariance is multiplied by `inflation`.
FilterState update_pose(const FilterState& fs, const PoseMeasurement& m, double inflation = 1.0,
                        double* nis_out = nullptr);

struct DelayedFilterConfig {
  double window = 0.5;        // s of IMU history kept for rewinds
  double inflation = 1.5;     // measurement covariance multiplier
  double outage_limit = 3.0;  // s without a fix before the estimate is flagged degraded
  double gravity = 9.81;
  FilterNoise noise;
};

/// Error-state filter that applies pose measurements at their capture time by
/// rewinding to the buffered state at or just before capture, updating, and
/// replaying the buffered IMU samples (and any later measurements) to the present.
class DelayedFilter {
 public:
  DelayedFilter(const FilterState& initial, const DelayedFilterConfig& cfg);

  void predict(const vehicle::ImuSample& imu, double dt);

  enum class UpdateResult { applied, dropped_stale };
  UpdateResult update_delayed(const PoseMeasurement& m);

  /// Vision produced no fix at `now`; only the outage bookkeeping changes.
  void handle_no_fix(double now);

  const FilterState& state() const { return current_; }
  /// (x, R, v, Omega) with Omega from the latest bias-corrected gyro sample.
  StateVector state_vector() const;

  bool degraded() const { return degraded_; }
  bool ever_degraded() const { return ever_degraded_; }
  double outage_duration() const { return outage_; }
  std::size_t dropped_measurements() const { return dropped_; }
  std::size_t buffered_samples() const { return entries_.size(); }
  double last_nis() const { return last_nis_; }
  const DelayedFilterConfig& config() const { return cfg_; }

 private:
  struct Entry {
    FilterState prior;  // state at prior.timestamp before any measurement at that time
    vehicle::ImuSample imu;
    double dt;
  };
  struct Applied {
    PoseMeasurement meas;
    std::uint64_t order;
  };

  void apply_slot(FilterState& s, double slot_start, double slot_end, bool last_slot);
  void prune();

  DelayedFilterConfig cfg_;
  std::deque<Entry> entries_;
  std::vector<Applied> applied_;  // sorted by (capture_timestamp, order)
  FilterState current_prior_;
  FilterState current_;
  Vec3 last_rate_ = Vec3::Zero();
  std::uint64_t next_order_ = 0;
  std::size_t dropped_ = 0;
  double last_fix_time_;
  double outage_ = 0.0;
  bool degraded_ = false;
  bool ever_degraded_ = false;
  double last_nis_ = 0.0;
};

/// Error (truth minus estimate) on position, velocity and attitude: 9 components.
Eigen::Matrix<double, 9, 1> pose_velocity_error(const FilterState& fs, const StateVector& truth);

double nees(const Eigen::VectorXd& error, const Eigen::MatrixXd& cov);

struct ChiSquareBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided bounds on the average of `samples` independent chi-square(dof) draws.
ChiSquareBounds chi_square_bounds(int dof, int samples = 1, double confidence = 0.95);

struct ConsistencyEpoch {
  double t = 0.0;
  Eigen::VectorXd error;
  Eigen::MatrixXd cov;
};

struct ConsistencyReport {
  std::vector<double> nees;
  double mean_nees = 0.0;
  int dof = 0;
  ChiSquareBounds epoch_bounds;  // per-epoch 95% bounds
  ChiSquareBounds mean_bounds;   // bounds on the mean over all epochs
  double fraction_inside = 0.0;
};

ConsistencyReport consistency_stats(std::span<const ConsistencyEpoch> epochs, double confidence = 0.95);

}  // namespace vil::est
