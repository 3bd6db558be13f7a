// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "vil/error.hpp"
#include "vil/posepipe.hpp"

using namespace vil;
using namespace vil::pose;

namespace {

Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Rotation::from_quaternion(n(rng), n(rng), n(rng), n(rng));
}

// Independent pinhole projector written out longhand from the quaternion.
Vec2 project_longhand(const Pose& model_to_cam, const Vec3& p, const Intrinsics& k) {
  const auto q = model_to_cam.rotation.wxyz();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const double r00 = 1 - 2 * (y * y + z * z), r01 = 2 * (x * y - w * z), r02 = 2 * (x * z + w * y);
  const double r10 = 2 * (x * y + w * z), r11 = 1 - 2 * (x * x + z * z), r12 = 2 * (y * z - w * x);
  const double r20 = 2 * (x * z - w * y), r21 = 2 * (y * z + w * x), r22 = 1 - 2 * (x * x + y * y);
  const Vec3& t = model_to_cam.position;
  const double cx = r00 * p.x() + r01 * p.y() + r02 * p.z() + t.x();
  const double cy = r10 * p.x() + r11 * p.y() + r12 * p.z() + t.y();
  const double cz = r20 * p.x() + r21 * p.y() + r22 * p.z() + t.z();
  return {k.fx * cx / cz + k.cx, k.fy * cy / cz + k.cy};
}

// Random model points in a box and a random pose that keeps them in front of the camera.
struct Instance {
  Pose truth;
  std::vector<Correspondence> corr;
};

Instance random_instance(std::mt19937_64& rng, int n, const Intrinsics& k, double noise_px = 0.0) {
  std::uniform_real_distribution<double> u(-2.0, 2.0), depth(6.0, 20.0), lateral(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, noise_px);
  Instance inst;
  inst.truth.rotation = random_rotation(rng);
  const double d = depth(rng);
  inst.truth.position = Vec3(lateral(rng), lateral(rng), d);
  for (int i = 0; i < n; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    Vec2 px = project_longhand(inst.truth, p, k);
    if (noise_px > 0.0) px += Vec2(gauss(rng), gauss(rng));
    inst.corr.push_back({p, px});
  }
  return inst;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

ClassEstimate class_estimate(const Pose& camera_in_ship, double confidence, int id) {
  ClassEstimate ce;
  ce.confidence = confidence;
  ce.estimate.pose = inverse(camera_in_ship);
  ce.estimate.classes = {id};
  ce.estimate.reprojection_rms = 1.0;
  return ce;
}

// Camera about 10 m from the deck center, behind the stern, looking forward and slightly down.
Pose viewing_camera() {
  Pose cam = forward_camera_extrinsic(deg2rad(10.0));
  cam.position = Vec3(-9.5, 0.0, 3.0);
  return cam;
}

}  // namespace

TEST(ReprojectionRms, ExactAndThreeFourFive) {
  const Intrinsics k;
  std::mt19937_64 rng(11);
  auto inst = random_instance(rng, 8, k);
  EXPECT_LT(reprojection_rms(inst.truth, inst.corr, k), 1e-9);
  std::vector<Correspondence> one{inst.corr[0]};
  one[0].pixel += Vec2(3.0, 4.0);
  EXPECT_NEAR(reprojection_rms(inst.truth, one, k), 5.0, 1e-9);
}

TEST(ReprojectionRms, MatchesLonghandProjector) {
  const Intrinsics k;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    auto inst = random_instance(rng, 10, k);
    double sq = 0.0;
    for (auto& c : inst.corr) {
      c.pixel += Vec2(noise(rng), noise(rng));
      sq += (project_longhand(inst.truth, c.model, k) - c.pixel).squaredNorm();
    }
    EXPECT_NEAR(reprojection_rms(inst.truth, inst.corr, k), std::sqrt(sq / inst.corr.size()), 1e-9);
  }
}

TEST(ReprojectionRms, BehindCameraIsLargeButFinite) {
  const Intrinsics k;
  const Pose id;
  const std::vector<Correspondence> corr{{Vec3(0, 0, -5), Vec2(320, 320)}};
  const double r = reprojection_rms(id, corr, k);
  EXPECT_TRUE(std::isfinite(r));
  EXPECT_GE(r, kBehindCameraPenaltyPx);
}

TEST(Epnp, RandomNoiseFreeInstances) {
  const Intrinsics k;
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> count(6, 20);
  double worst_pos = 0.0, worst_rot = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto inst = random_instance(rng, count(rng), k);
    const auto sol = epnp_solve(inst.corr, k);
    worst_pos = std::max(worst_pos, (sol.pose.position - inst.truth.position).norm());
    worst_rot = std::max(worst_rot, geodesic_deg(sol.pose.rotation, inst.truth.rotation));
    EXPECT_LT(sol.reprojection_rms, 1e-6);
  }
  EXPECT_LT(worst_pos, 1e-6);
  EXPECT_LT(worst_rot, 1e-4);
}

TEST(Epnp, PlanarSquare) {
  const Intrinsics k;
  std::mt19937_64 rng(15);
  const std::vector<Vec3> square{{-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0}};
  for (int t = 0; t < 200; ++t) {
    Pose truth;
    // Keep the square facing the camera within 60 degrees so its image is a proper quadrilateral.
    std::uniform_real_distribution<double> tilt(-1.0, 1.0), lat(-1.0, 1.0), d(5.0, 15.0);
    truth.rotation = exp_map(Vec3(tilt(rng), tilt(rng), 3.0 * tilt(rng)).cwiseProduct(Vec3(0.9, 0.9, 1.0)));
    truth.position = Vec3(lat(rng), lat(rng), d(rng));
    std::vector<Correspondence> corr;
    for (const auto& p : square) corr.push_back({p, project_longhand(truth, p, k)});
    const auto sol = epnp_solve(corr, k);
    EXPECT_LT((sol.pose.position - truth.position).norm(), 1e-4);
    EXPECT_LT(geodesic_deg(sol.pose.rotation, truth.rotation), 1e-2);
  }
}

TEST(Epnp, PreconditionsAndDegeneracy) {
  const Intrinsics k;
  std::mt19937_64 rng(16);
  auto inst = random_instance(rng, 3, k);
  EXPECT_THROW(epnp_solve(inst.corr, k), InvalidArgument);
  std::vector<Correspondence> line;
  const Pose cam{Vec3(0, 0, 10), Rotation()};
  for (int i = 0; i < 6; ++i) {
    const Vec3 p(0.5 * i, 0.0, 0.0);
    line.push_back({p, project_longhand(cam, p, k)});
  }
  EXPECT_THROW(epnp_solve(line, k), DegenerateError);
}

TEST(Epnp, RigidEquivariance) {
  const Intrinsics k;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    const auto inst = random_instance(rng, 10, k);
    const Pose g{Vec3(u(rng), u(rng), u(rng)), random_rotation(rng)};
    std::vector<Correspondence> moved = inst.corr;
    for (auto& c : moved) c.model = g.transform(c.model);
    const auto a = epnp_solve(inst.corr, k);
    const auto b = epnp_solve(moved, k);
    EXPECT_TRUE(compose(b.pose, g).approx_equal(a.pose, 1e-6));
  }
}

TEST(Epnp, OnePixelNoise) {
  const Intrinsics k;
  std::mt19937_64 rng(18);
  std::vector<double> errs;
  for (int t = 0; t < 500; ++t) {
    const auto inst = random_instance(rng, 8, k, 1.0);
    const auto sol = epnp_solve(inst.corr, k);
    errs.push_back((sol.pose.position - inst.truth.position).norm());
  }
  EXPECT_LT(median(errs), 0.15);
}

TEST(Fusion, SingleInputIsUnchanged) {
  std::mt19937_64 rng(19);
  const Pose cam{Vec3(1, 2, 3), random_rotation(rng)};
  const std::vector<ClassEstimate> in{class_estimate(cam, 0.95, 2)};
  const auto out = fuse_poses(in);
  ASSERT_TRUE(out);
  EXPECT_TRUE(out->camera_in_ship().approx_equal(cam, 1e-12));
  EXPECT_EQ(out->classes, std::vector<int>{2});
}

TEST(Fusion, EqualWeightMean) {
  const std::vector<ClassEstimate> in{class_estimate({Vec3(0, 0, 0), Rotation()}, 0.95, 0),
                                      class_estimate({Vec3(1, 0, 0), Rotation()}, 0.95, 1)};
  FusionConfig cfg;
  cfg.sigma0 = 1.0;  // keep both inside the outlier radius
  const auto out = fuse_poses(in, cfg);
  ASSERT_TRUE(out);
  EXPECT_LT((out->camera_in_ship().position - Vec3(0.5, 0, 0)).norm(), 1e-12);
  EXPECT_LT(geodesic_deg(out->camera_in_ship().rotation, Rotation()), 1e-9);
  // Covariance is the inverse of the summed information.
  const double s = cfg.sigma0 / 0.95;
  EXPECT_NEAR(out->position_cov(0, 0), s * s / 2.0, 1e-12);
}

TEST(Fusion, InverseVarianceWeights) {
  FusionConfig cfg;
  cfg.sigma0 = 10.0;
  const std::vector<ClassEstimate> in{class_estimate({Vec3(0, 0, 0), Rotation()}, 1.0, 0),
                                      class_estimate({Vec3(0, 3, 0), Rotation()}, 0.9, 1)};
  const auto out = fuse_poses(in, cfg);
  ASSERT_TRUE(out);
  const double w0 = 1.0, w1 = 0.81;
  EXPECT_NEAR(out->camera_in_ship().position.y(), 3.0 * w1 / (w0 + w1), 1e-12);
}

TEST(Fusion, GateProducesNoFix) {
  std::vector<ClassEstimate> in{class_estimate({Vec3(0, 0, 0), Rotation()}, 0.5, 0)};
  EXPECT_FALSE(fuse_poses(in));
  in[0].confidence = 0.95;
  in[0].estimate.reprojection_rms = 9.0;
  EXPECT_FALSE(fuse_poses(in));
  EXPECT_FALSE(fuse_poses(std::span<const ClassEstimate>{}));
}

TEST(Fusion, OutlierRejected) {
  std::vector<ClassEstimate> in;
  for (int i = 0; i < 5; ++i) in.push_back(class_estimate({Vec3(0.01 * i, 0, 0), Rotation()}, 0.95, i));
  in.push_back(class_estimate({Vec3(5, 0, 0), Rotation()}, 0.95, 5));
  const auto out = fuse_poses(in);
  ASSERT_TRUE(out);
  EXPECT_LT(out->camera_in_ship().position.norm(), 0.05);
  EXPECT_EQ(out->classes, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Fusion, ConfidenceScaleInvariance) {
  std::mt19937_64 rng(20);
  std::normal_distribution<double> n(0.0, 0.2);
  std::uniform_real_distribution<double> conf(0.9, 1.0);
  FusionConfig cfg, scaled_cfg;
  scaled_cfg.min_confidence = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<ClassEstimate> in, scaled;
    for (int c = 0; c < 6; ++c) {
      const Pose cam{Vec3(n(rng), n(rng), n(rng)), exp_map(Vec3(n(rng), n(rng), n(rng)) * 0.1)};
      in.push_back(class_estimate(cam, conf(rng), c));
      scaled.push_back(in.back());
      scaled.back().confidence *= 10.0;
    }
    const auto a = fuse_poses(in, cfg);
    const auto b = fuse_poses(scaled, scaled_cfg);
    ASSERT_TRUE(a && b);
    EXPECT_LT((a->camera_in_ship().position - b->camera_in_ship().position).norm(), 1e-12);
    EXPECT_LT(geodesic_deg(a->camera_in_ship().rotation, b->camera_in_ship().rotation), 1e-9);
    EXPECT_EQ(a->classes, b->classes);
  }
}

TEST(Fusion, AddingTheFusedPoseDoesNotMoveIt) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 0.03);
  for (int t = 0; t < 100; ++t) {
    std::vector<ClassEstimate> in;
    for (int c = 0; c < 4; ++c) in.push_back(class_estimate({Vec3(n(rng), n(rng), n(rng)), Rotation()}, 0.95, c));
    const auto a = fuse_poses(in);
    ASSERT_TRUE(a);
    in.push_back(class_estimate(a->camera_in_ship(), 0.95, 4));
    const auto b = fuse_poses(in);
    ASSERT_TRUE(b);
    EXPECT_LT((a->camera_in_ship().position - b->camera_in_ship().position).norm(), 1e-12);
    EXPECT_EQ(b->classes.size(), a->classes.size() + 1);
  }
}

TEST(Fusion, QuaternionMeanHandlesSignAndMatchesSmallAngleAverage) {
  // Rotations about z by +/-0.1 rad average to identity regardless of quaternion sign.
  std::vector<ClassEstimate> in{class_estimate({Vec3::Zero(), Rotation::about_z(0.1)}, 0.95, 0),
                                class_estimate({Vec3::Zero(), Rotation::about_z(-0.1)}, 0.95, 1)};
  const auto out = fuse_poses(in);
  ASSERT_TRUE(out);
  EXPECT_LT(geodesic_deg(out->camera_in_ship().rotation, Rotation()), 1e-9);
  // Unequal weights about one axis: the chordal mean angle satisfies tan(theta/2) = sum w sin / sum w cos on half angles.
  in[1] = class_estimate({Vec3::Zero(), Rotation::about_z(0.3)}, 0.9, 1);
  in[0] = class_estimate({Vec3::Zero(), Rotation()}, 1.0, 0);
  FusionConfig cfg;
  const auto out2 = fuse_poses(in, cfg);
  ASSERT_TRUE(out2);
  // Oracle: top eigenvector of the 2x2 block spanned by (w, z) quaternion components.
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  const Eigen::Vector2d q0(1.0, 0.0), q1(std::cos(0.15), std::sin(0.15));
  m += 1.0 * q0 * q0.transpose() + 0.9 * q1 * q1.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const Eigen::Vector2d top = es.eigenvectors().col(1);
  const double expected = 2.0 * std::atan2(std::abs(top(1)), std::abs(top(0)));
  EXPECT_NEAR(rad2deg(log_map(out2->camera_in_ship().rotation).z()), rad2deg(expected), 1e-9);
}

TEST(Fusion, MonteCarloBeatsBestSingleClass) {
  // Six estimates with per-class sigma0/confidence noise. The fused position is
  // compared with the highest-confidence class (the one a single-class system
  // would pick) and, informationally, with the per-trial best class in hindsight.
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> conf(0.9, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const FusionConfig cfg;
  const int trials = 1000;
  int beats_top = 0, beats_hindsight = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<ClassEstimate> in;
    double top_conf = -1.0, top_err = 0.0, min_err = 1e9;
    for (int c = 0; c < 6; ++c) {
      const double cc = conf(rng);
      const Vec3 e = Vec3(n(rng), n(rng), n(rng)) * (cfg.sigma0 / cc);
      in.push_back(class_estimate({e, Rotation()}, cc, c));
      min_err = std::min(min_err, e.norm());
      if (cc > top_conf) top_conf = cc, top_err = e.norm();
    }
    const auto out = fuse_poses(in, cfg);
    ASSERT_TRUE(out);
    const double fused = out->camera_in_ship().position.norm();
    beats_top += fused <= top_err;
    beats_hindsight += fused <= min_err;
  }
  RecordProperty("fraction_vs_hindsight_best", std::to_string(beats_hindsight / double(trials)));
  std::printf("fused <= top-confidence class: %.3f; fused <= hindsight-best class: %.3f\n", beats_top / double(trials),
              beats_hindsight / double(trials));
  EXPECT_GE(beats_top, 0.9 * trials);
}

TEST(Oracle, NoiseFreeMatchesProjection) {
  const Intrinsics k;
  const ShipModel ship = default_ship_model();
  const Pose cam = viewing_camera();
  const auto obs = oracle_detect(cam, ship, k, {}, 0);
  ASSERT_EQ(obs.size(), 6u);
  const Pose ship_to_cam = inverse(cam);
  for (const auto& o : obs) {
    EXPECT_EQ(o.confidence, 1.0);
    const ObjectModel* part = ship.find(o.class_id);
    ASSERT_NE(part, nullptr);
    for (std::size_t i = 0; i < part->model_points.size(); ++i) {
      ASSERT_TRUE(o.visible[i]);
      EXPECT_LT((o.keypoints[i] - project_longhand(ship_to_cam, part->model_points[i], k)).norm(), 1e-9);
    }
  }
}

TEST(Oracle, LookingAwayIsEmpty) {
  Pose cam = viewing_camera();
  cam.rotation = Rotation::about_z(kPi) * cam.rotation;
  EXPECT_TRUE(oracle_detect(cam, default_ship_model(), Intrinsics{}, {}, 0).empty());
}

TEST(Oracle, DeterministicPerSeedAndKey) {
  OracleNoise noise;
  noise.pixel_sigma = 2.0;
  noise.dropout_prob = 0.3;
  noise.seed = 42;
  const auto ship = default_ship_model();
  const auto a = oracle_detect(viewing_camera(), ship, Intrinsics{}, noise, 7);
  const auto b = oracle_detect(viewing_camera(), ship, Intrinsics{}, noise, 7);
  const auto c = oracle_detect(viewing_camera(), ship, Intrinsics{}, noise, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& o : a) EXPECT_NEAR(o.confidence, 1.0 - 0.01 * 2.0, 1e-12);
}

TEST(Oracle, DropoutOneDropsEverything) {
  OracleNoise noise;
  noise.dropout_prob = 1.0;
  EXPECT_TRUE(oracle_detect(viewing_camera(), default_ship_model(), Intrinsics{}, noise, 0).empty());
}

TEST(Pipeline, NoiseFreeEndToEnd) {
  const Intrinsics k;
  const auto ship = default_ship_model();
  OracleDetector det(ship, k, {});
  splat::Frame frame;
  frame.camera_pose = viewing_camera();
  const auto res = estimate_from_frame(frame, det, ship, k);
  ASSERT_TRUE(res.estimate);
  EXPECT_LT((res.estimate->camera_in_ship().position - frame.camera_pose.position).norm(), 1e-4);
  EXPECT_EQ(res.estimate->classes.size(), 6u);
  EXPECT_LT(res.estimate->reprojection_rms, 1e-6);
}

TEST(Pipeline, AllDroppedIsNoFix) {
  const Intrinsics k;
  const auto ship = default_ship_model();
  OracleNoise noise;
  noise.dropout_prob = 1.0;
  OracleDetector det(ship, k, noise);
  splat::Frame frame;
  frame.camera_pose = viewing_camera();
  EXPECT_FALSE(estimate_from_frame(frame, det, ship, k).estimate);
}

TEST(Pipeline, TwoPixelNoiseAtTenMetres) {
  const Intrinsics k;
  const auto ship = default_ship_model();
  OracleNoise noise;
  noise.pixel_sigma = 2.0;
  noise.seed = 5;
  // The fusion gate is confidence-based; 2 px noise lowers oracle confidence to 0.98.
  OracleDetector det(ship, k, noise);
  splat::Frame frame;
  frame.camera_pose = viewing_camera();
  ASSERT_NEAR(frame.camera_pose.position.norm(), 10.0, 0.1);
  std::vector<double> errs;
  for (int i = 0; i < 500; ++i) {
    frame.timestamp = 0.1 * i;
    const auto res = estimate_from_frame(frame, det, ship, k);
    if (!res.estimate) continue;
    errs.push_back((res.estimate->camera_in_ship().position - frame.camera_pose.position).norm());
  }
  ASSERT_GE(errs.size(), 450u);
  EXPECT_LT(median(errs), 0.2);
}

TEST(Pipeline, FusedReprojectionBoundedByClassMaximum) {
  const Intrinsics k;
  const auto ship = default_ship_model();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    Pose cam = viewing_camera();
    cam.position += Vec3(jitter(rng), jitter(rng), 0.5 * jitter(rng));
    const auto res = estimate_from_observations(oracle_detect(cam, ship, k, {}, 0), ship, k);
    ASSERT_TRUE(res.estimate);
    double max_rms = 0.0;
    for (const auto& ce : res.per_class) max_rms = std::max(max_rms, ce.estimate.reprojection_rms);
    EXPECT_LE(res.estimate->reprojection_rms, max_rms + 1.0);
  }
}

TEST(ShipModel, DefaultIsValid) {
  const auto m = default_ship_model();
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.parts.size(), 6u);
  for (const auto& p : m.parts) EXPECT_EQ(p.model_points.size(), 8u);
}

TEST(ShipModel, ValidationRejectsBadModels) {
  auto m = default_ship_model();
  m.parts[1].class_id = 0;
  EXPECT_THROW(m.validate(), InvalidArgument);
  m = default_ship_model();
  m.parts[0].model_points.resize(3);
  EXPECT_THROW(m.validate(), InvalidArgument);
  m = default_ship_model();
  for (int i = 0; i < 8; ++i) m.parts[2].model_points[i] = Vec3(i, 0, 0);
  EXPECT_THROW(m.validate(), InvalidArgument);
  m = default_ship_model();
  m.parts[3].class_id = 6;
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(ShipModel, JsonRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "vil_test_ship";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ship.json";
  const auto m = default_ship_model();
  save_ship_model(m, path);
  const auto back = load_ship_model(path);
  ASSERT_EQ(back.parts.size(), m.parts.size());
  for (std::size_t i = 0; i < m.parts.size(); ++i) {
    EXPECT_EQ(back.parts[i].class_id, m.parts[i].class_id);
    EXPECT_EQ(back.parts[i].name, m.parts[i].name);
    ASSERT_EQ(back.parts[i].model_points.size(), m.parts[i].model_points.size());
    for (std::size_t j = 0; j < m.parts[i].model_points.size(); ++j)
      EXPECT_EQ(back.parts[i].model_points[j], m.parts[i].model_points[j]);
  }
  EXPECT_THROW(load_ship_model(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}
