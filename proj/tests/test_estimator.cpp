// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "support/filter_sim.hpp"
#include "vil/error.hpp"
#include "vil/estimator.hpp"

using namespace vil;
using namespace vil::est;

namespace {

FilterState initial_state(const Vec3& p = Vec3(0, 0, 2)) {
  FilterState fs;
  fs.nominal.position = p;
  fs.P = Cov15::Identity() * 1e-2;
  return fs;
}

vehicle::ImuSample hover_imu(double t) {
  vehicle::ImuSample s;
  s.timestamp = t;
  s.accel = Vec3(0, 0, 9.81);
  return s;
}

PoseMeasurement measurement(const Vec3& p, double capture, double arrival) {
  PoseMeasurement m;
  m.pose.position = p;
  m.pose.rotation = Rotation::about_z(0.01);
  m.position_cov = Mat3::Identity() * 1e-3;
  m.rotation_sigma = 0.01;
  m.capture_timestamp = capture;
  m.arrival_timestamp = arrival;
  return m;
}

double max_abs_diff(const FilterState& a, const FilterState& b) {
  double d = (a.P - b.P).cwiseAbs().maxCoeff();
  d = std::max(d, (a.nominal.position - b.nominal.position).cwiseAbs().maxCoeff());
  d = std::max(d, (a.nominal.velocity - b.nominal.velocity).cwiseAbs().maxCoeff());
  d = std::max(d, (a.nominal.attitude.matrix() - b.nominal.attitude.matrix()).cwiseAbs().maxCoeff());
  d = std::max(d, (a.nominal.gyro_bias - b.nominal.gyro_bias).cwiseAbs().maxCoeff());
  d = std::max(d, (a.nominal.accel_bias - b.nominal.accel_bias).cwiseAbs().maxCoeff());
  return d;
}

bool bit_identical(const FilterState& a, const FilterState& b) {
  return a.P == b.P && a.nominal.position == b.nominal.position && a.nominal.velocity == b.nominal.velocity &&
         a.nominal.attitude.wxyz() == b.nominal.attitude.wxyz() && a.nominal.gyro_bias == b.nominal.gyro_bias &&
         a.nominal.accel_bias == b.nominal.accel_bias && a.timestamp == b.timestamp;
}

// IMU stream with some motion so that the delayed replays are non-trivial.
std::vector<vehicle::ImuSample> moving_imu(int n, double dt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<vehicle::ImuSample> out;
  for (int i = 0; i < n; ++i) {
    vehicle::ImuSample s;
    s.timestamp = i * dt;
    s.gyro = Vec3(0.3 * std::sin(i * dt), 0.2, -0.1) + Vec3(g(rng), g(rng), g(rng));
    s.accel = Vec3(0.5, -0.2, 9.81) + Vec3(g(rng), g(rng), g(rng));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Predict, NoiseFreeHoverTracksTruth) {
  vehicle::ImuNoise zero{0, 0, 0, 0, Vec3::Zero(), Vec3::Zero()};
  vehicle::ImuModel imu(zero, 1);
  const vehicle::VehicleParams vp;
  StateVector truth;
  truth.pose.position = Vec3(0, 0, 2);
  FilterState fs = initial_state(truth.pose.position);
  const double dt = 1e-3;
  const vehicle::Command hover{vp.mass * vp.gravity, Vec3::Zero()};
  for (int i = 0; i < 10000; ++i) {
    const StateVector next = vehicle::dynamics_step(truth, hover, dt, vp);
    fs = predict(fs, imu.sample(truth, (next.velocity - truth.velocity) / dt, dt), dt, {});
    truth = next;
  }
  EXPECT_LT((fs.nominal.position - truth.pose.position).norm(), 1e-6);
  EXPECT_LT((fs.nominal.velocity - truth.velocity).norm(), 1e-6);
  EXPECT_LT(geodesic_deg(fs.nominal.attitude, truth.pose.rotation), 1e-6);
  EXPECT_NEAR(fs.timestamp, 10.0, 1e-9);
}

TEST(Predict, NoiseFreeManoeuvreTracksTruth) {
  // First-order strapdown on a smooth closed-loop flight stays within millimetres over 10 s.
  vehicle::ImuNoise zero{0, 0, 0, 0, Vec3::Zero(), Vec3::Zero()};
  vehicle::ImuModel imu(zero, 1);
  const vehicle::VehicleParams vp;
  StateVector truth;
  const auto r0 = sim::excitation_reference(0.0);
  truth.pose.position = r0.position;
  truth.velocity = r0.velocity;
  FilterState fs = initial_state(truth.pose.position);
  fs.nominal.velocity = truth.velocity;
  const double dt = 1e-3;
  for (int i = 0; i < 10000; ++i) {
    const auto c = vehicle::geometric_control(truth, sim::excitation_reference(i * dt), vp);
    const StateVector next = vehicle::dynamics_step(truth, c.command, dt, vp);
    fs = predict(fs, imu.sample(truth, (next.velocity - truth.velocity) / dt, dt), dt, {});
    truth = next;
  }
  EXPECT_LT((fs.nominal.position - truth.pose.position).norm(), 5e-3);
  EXPECT_LT(geodesic_deg(fs.nominal.attitude, truth.pose.rotation), 0.05);
}

TEST(Predict, RejectsBadInput) {
  const FilterState fs = initial_state();
  EXPECT_THROW(predict(fs, hover_imu(0), 0.0, {}), InvalidArgument);
  EXPECT_THROW(predict(fs, hover_imu(0), 0.03, {}), InvalidArgument);
  auto bad = hover_imu(0);
  bad.gyro.x() = NAN;
  EXPECT_THROW(predict(fs, bad, 1e-3, {}), InvalidArgument);
}

TEST(Predict, CovarianceGrowsAndStaysSymmetric) {
  FilterState fs = initial_state();
  for (int i = 0; i < 1000; ++i) {
    const FilterState next = predict(fs, hover_imu(fs.timestamp), 1e-3, {});
    EXPECT_GE((next.P.block<3, 3>(0, 0).trace()), (fs.P.block<3, 3>(0, 0).trace()));
    fs = next;
  }
  EXPECT_LT((fs.P - fs.P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Update, TraceNonIncreasingWithoutProcessNoise) {
  FilterState fs = initial_state();
  const FilterNoise none{0, 0, 0, 0};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.03);
  for (int k = 0; k < 50; ++k) {
    for (int i = 0; i < 100; ++i) fs = predict(fs, hover_imu(fs.timestamp), 1e-3, none);
    const double before = fs.P.trace();
    fs = update_pose(fs, measurement(Vec3(0, 0, 2) + Vec3(g(rng), g(rng), g(rng)), fs.timestamp, fs.timestamp));
    EXPECT_LE(fs.P.trace(), before + 1e-15);
    EXPECT_LT((fs.P - fs.P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Cov15> es(fs.P);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Update, MatchesTextbookKalmanOnPositionBlock) {
  // Oracle: with a diagonal prior the position update is the scalar Kalman update per axis.
  FilterState fs = initial_state();
  fs.P = Cov15::Identity() * 0.04;
  PoseMeasurement m = measurement(Vec3(0.3, -0.2, 2.1), 0, 0);
  m.pose.rotation = Rotation();
  m.position_cov = Mat3::Identity() * 0.01;
  const FilterState out = update_pose(fs, m);
  const double k = 0.04 / (0.04 + 0.01);
  EXPECT_LT((out.nominal.position - (fs.nominal.position + k * (m.pose.position - fs.nominal.position))).norm(), 1e-12);
  EXPECT_NEAR(out.P(0, 0), (1 - k) * 0.04, 1e-12);
  EXPECT_LT(out.nominal.velocity.norm(), 1e-15);
}

TEST(Update, InflationScalesMeasurementCovariance) {
  const FilterState fs = initial_state();
  PoseMeasurement m = measurement(Vec3(0.3, 0, 2), 0, 0);
  PoseMeasurement scaled = m;
  scaled.position_cov *= 1.5;
  scaled.rotation_sigma *= std::sqrt(1.5);
  EXPECT_LT(max_abs_diff(update_pose(fs, m, 1.5), update_pose(fs, scaled, 1.0)), 1e-12);
}

TEST(Update, PerfectMeasurementReducesErrorMonteCarlo) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  int decreased = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    FilterState fs;
    fs.P = Cov15::Identity() * 0.25;
    fs.nominal.position = Vec3(g(rng), g(rng), g(rng)) * 0.5;
    const Vec3 truth(g(rng), g(rng), g(rng));
    PoseMeasurement m;
    m.pose.position = truth + Vec3(g(rng), g(rng), g(rng)) * 1e-4;
    m.position_cov = Mat3::Identity() * 1e-8;
    m.rotation_sigma = 1e-4;
    const double before = (fs.nominal.position - truth).norm();
    const double after = (update_pose(fs, m).nominal.position - truth).norm();
    decreased += after < before;
  }
  EXPECT_GE(decreased, 0.99 * trials);
}

TEST(Update, NisReported) {
  const FilterState fs = initial_state();
  double nis = -1.0;
  update_pose(fs, measurement(Vec3(0, 0, 2), 0, 0), 1.0, &nis);
  EXPECT_GT(nis, 0.0);
  PoseMeasurement exact = measurement(Vec3(0, 0, 2), 0, 0);
  exact.pose.rotation = Rotation();
  update_pose(fs, exact, 1.0, &nis);
  EXPECT_EQ(nis, 0.0);
}

TEST(DelayedFilter, ZeroLatencyEqualsImmediateUpdate) {
  const auto imu = moving_imu(300, 1e-3, 5);
  DelayedFilterConfig cfg;
  DelayedFilter df(initial_state(), cfg);
  FilterState direct = initial_state();
  for (std::size_t i = 0; i < imu.size(); ++i) {
    df.predict(imu[i], 1e-3);
    direct = predict(direct, imu[i], 1e-3, cfg.noise);
    if (i % 100 == 99) {
      const auto m = measurement(Vec3(0.01 * i, 0, 2), df.state().timestamp, df.state().timestamp);
      EXPECT_EQ(df.update_delayed(m), DelayedFilter::UpdateResult::applied);
      direct = update_pose(direct, m, cfg.inflation);
      EXPECT_LT(max_abs_diff(df.state(), direct), 1e-12);
    }
  }
  EXPECT_LT(max_abs_diff(df.state(), direct), 1e-12);
}

TEST(DelayedFilter, DelayedUpdateEqualsRewindAndReplay) {
  // Oracle: an independent filter that applies the measurement at its capture time directly.
  const auto imu = moving_imu(400, 1e-3, 6);
  DelayedFilterConfig cfg;
  DelayedFilter df(initial_state(), cfg);
  FilterState oracle = initial_state();
  const auto m = measurement(Vec3(0.2, -0.1, 2.05), 0.150, 0.250);
  for (std::size_t i = 0; i < imu.size(); ++i) {
    if (std::abs(oracle.timestamp - m.capture_timestamp) < 1e-9) oracle = update_pose(oracle, m, cfg.inflation);
    oracle = predict(oracle, imu[i], 1e-3, cfg.noise);
    df.predict(imu[i], 1e-3);
    if (std::abs(df.state().timestamp - m.arrival_timestamp) < 1e-9) df.update_delayed(m);
  }
  EXPECT_LT(max_abs_diff(df.state(), oracle), 1e-9);
}

TEST(DelayedFilter, OutOfOrderEqualsSorted) {
  const auto imu = moving_imu(1000, 1e-3, 7);
  DelayedFilterConfig cfg;
  std::vector<PoseMeasurement> ms;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lat(0.02, 0.3);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int k = 1; k <= 9; ++k) {
    const double cap = 0.1 * k;
    ms.push_back(measurement(Vec3(g(rng), g(rng), 2 + g(rng)), cap, cap + lat(rng)));
  }
  auto run = [&](bool by_arrival) {
    DelayedFilter df(initial_state(), cfg);
    std::vector<PoseMeasurement> pending = ms;
    // The sorted reference delivers each measurement the moment it is captured.
    for (auto& m : pending) {
      if (!by_arrival) m.arrival_timestamp = m.capture_timestamp;
    }
    for (const auto& s : imu) {
      df.predict(s, 1e-3);
      const double now = df.state().timestamp;
      std::vector<PoseMeasurement> due;
      for (auto it = pending.begin(); it != pending.end();) {
        if (it->arrival_timestamp <= now + 1e-9) {
          due.push_back(*it);
          it = pending.erase(it);
        } else {
          ++it;
        }
      }
      std::sort(due.begin(), due.end(),
                [](const auto& a, const auto& b) { return a.arrival_timestamp < b.arrival_timestamp; });
      for (const auto& m : due) EXPECT_EQ(df.update_delayed(m), DelayedFilter::UpdateResult::applied);
    }
    return df.state();
  };
  const FilterState shuffled = run(true);
  const FilterState sorted = run(false);
  EXPECT_LT(max_abs_diff(shuffled, sorted), 1e-9);
}

TEST(DelayedFilter, ReplayIsBitIdentical) {
  const auto imu = moving_imu(500, 1e-3, 9);
  auto run = [&] {
    DelayedFilter df(initial_state(), {});
    for (std::size_t i = 0; i < imu.size(); ++i) {
      df.predict(imu[i], 1e-3);
      if (i % 100 == 99) {
        const double now = df.state().timestamp;
        df.update_delayed(measurement(Vec3(0.001 * i, 0, 2), now - 0.08, now));
      }
    }
    return df.state();
  };
  EXPECT_TRUE(bit_identical(run(), run()));
}

TEST(DelayedFilter, StaleMeasurementDropped) {
  DelayedFilterConfig cfg;
  cfg.window = 0.5;
  DelayedFilter df(initial_state(), cfg);
  for (int i = 0; i < 1500; ++i) df.predict(hover_imu(i * 1e-3), 1e-3);
  const FilterState before = df.state();
  const double now = before.timestamp;
  EXPECT_EQ(df.update_delayed(measurement(Vec3(1, 1, 1), now - 1.0, now)), DelayedFilter::UpdateResult::dropped_stale);
  EXPECT_EQ(df.dropped_measurements(), 1u);
  EXPECT_TRUE(bit_identical(df.state(), before));
  EXPECT_LE(df.buffered_samples(), 502u);
}

TEST(DelayedFilter, NoFixIsPurePrediction) {
  DelayedFilter df(initial_state(), {});
  FilterState direct = initial_state();
  const auto imu = moving_imu(200, 1e-3, 10);
  for (std::size_t i = 0; i < imu.size(); ++i) {
    df.predict(imu[i], 1e-3);
    direct = predict(direct, imu[i], 1e-3, {});
    if (i == 100) df.handle_no_fix(df.state().timestamp);
  }
  EXPECT_TRUE(bit_identical(df.state(), direct));
  EXPECT_FALSE(df.degraded());
}

TEST(DelayedFilter, OutageRaisesDegradedAndSigmaGrows) {
  DelayedFilterConfig cfg;
  DelayedFilter df(initial_state(), cfg);
  double prev_sigma = 0.0;
  for (int i = 0; i < 3200; ++i) {
    df.predict(hover_imu(i * 1e-3), 1e-3);
    if (i % 100 == 99) {
      df.handle_no_fix(df.state().timestamp);
      const double sigma = std::sqrt(df.state().P.block<3, 3>(0, 0).trace());
      EXPECT_GT(sigma, prev_sigma);
      prev_sigma = sigma;
      if (df.state().timestamp < cfg.outage_limit - 1e-9) {
        EXPECT_FALSE(df.degraded());
      }
    }
  }
  EXPECT_TRUE(df.degraded());
  EXPECT_TRUE(df.ever_degraded());
  EXPECT_GT(df.outage_duration(), 3.0);
  df.update_delayed(measurement(Vec3(0, 0, 2), df.state().timestamp, df.state().timestamp));
  EXPECT_FALSE(df.degraded());
  EXPECT_TRUE(df.ever_degraded());
}

TEST(Consistency, ExactEstimateHasZeroNees) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(9);
  EXPECT_EQ(nees(e, Eigen::MatrixXd::Identity(9, 9)), 0.0);
  e(0) = 2.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(9, 9) * 4.0;
  EXPECT_NEAR(nees(e, c), 1.0, 1e-15);
  EXPECT_THROW(nees(e, Eigen::MatrixXd::Identity(3, 3)), InvalidArgument);
}

TEST(Consistency, ChiSquareBoundsKnownQuantiles) {
  // Table values: chi2(3) 2.5% = 0.2158, 97.5% = 9.3484.
  const auto b = chi_square_bounds(3);
  EXPECT_NEAR(b.lower, 0.215795, 1e-5);
  EXPECT_NEAR(b.upper, 9.348404, 1e-5);
  const auto m = chi_square_bounds(2, 50);
  EXPECT_NEAR(m.lower * 50, 74.2219, 1e-3);
  EXPECT_NEAR(m.upper * 50, 129.5612, 1e-3);
}

namespace {

// Scalar-position constant-velocity Kalman filter with white-acceleration noise.
std::vector<ConsistencyEpoch> linear_toy(double q_true, double q_filter, std::uint64_t seed, int epochs) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const double dt = 0.1, r = 0.04;
  Eigen::Matrix2d f;
  f << 1, dt, 0, 1;
  Eigen::Matrix2d qd;
  qd << dt * dt * dt / 3, dt * dt / 2, dt * dt / 2, dt;
  const Eigen::Matrix2d q_chol = (qd * q_true).llt().matrixL();
  Eigen::Vector2d x(0, 1), xh(0, 1);
  Eigen::Matrix2d p = Eigen::Matrix2d::Identity() * 1e-6;
  std::vector<ConsistencyEpoch> out;
  for (int k = 0; k < epochs; ++k) {
    x = f * x + q_chol * Eigen::Vector2d(g(rng), g(rng));
    xh = f * xh;
    p = f * p * f.transpose() + qd * q_filter;
    const double z = x(0) + std::sqrt(r) * g(rng);
    const Eigen::Vector2d k_gain = p.col(0) / (p(0, 0) + r);
    xh += k_gain * (z - xh(0));
    p = (Eigen::Matrix2d::Identity() - k_gain * Eigen::RowVector2d(1, 0)) * p;
    out.push_back({k * dt, x - xh, p});
  }
  return out;
}

}  // namespace

TEST(Consistency, TunedLinearToyMeanNees) {
  const auto ep = linear_toy(1.0, 1.0, 11, 1000);
  const auto rep = consistency_stats(ep);
  EXPECT_EQ(rep.dof, 2);
  EXPECT_GE(rep.mean_nees, 2 * 0.8);
  EXPECT_LE(rep.mean_nees, 2 * 1.2);
}

TEST(Consistency, OverconfidentToyExceedsBound) {
  const auto ep = linear_toy(1.0, 0.1, 12, 1000);
  const auto rep = consistency_stats(ep);
  EXPECT_GT(rep.mean_nees, rep.mean_bounds.upper);
}

TEST(Consistency, EskfMonteCarloEnsembleNees) {
  // Twenty seeded 60 s closed-loop runs; the ensemble-average NEES at each epoch is
  // compared with the chi-square bounds for 20 x 9 degrees of freedom.
  const int runs = 20;
  std::vector<double> sum;
  for (int s = 1; s <= runs; ++s) {
    sim::FilterSimConfig cfg;
    cfg.duration = 60.0;
    cfg.seed = s;
    const auto r = sim::run_filter_sim(cfg);
    if (sum.empty()) sum.assign(r.epochs.size(), 0.0);
    for (std::size_t i = 0; i < r.epochs.size(); ++i) sum[i] += nees(r.epochs[i].error, r.epochs[i].cov);
  }
  const auto b = chi_square_bounds(9, runs);
  int inside = 0;
  for (double v : sum) inside += v / runs >= b.lower && v / runs <= b.upper;
  EXPECT_GE(inside, 0.9 * static_cast<double>(sum.size()));
}

TEST(Consistency, GyroBiasObservableUnderMotion) {
  sim::FilterSimConfig cfg;
  cfg.gyro_bias = Vec3(0.02, -0.015, 0.01);
  cfg.p0_bg = 0.03;
  cfg.seed = 77;
  const auto r = sim::run_filter_sim(cfg);
  const Vec3 err = r.final_state.nominal.gyro_bias - r.true_gyro_bias;
  EXPECT_LT(err.norm(), 0.1 * r.true_gyro_bias.norm());
}
