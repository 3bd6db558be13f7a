// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vil/camera.hpp"
#include "vil/geometry.hpp"
#include "vil/splat.hpp"

namespace vil::pose {

inline constexpr int kNumClasses = 6;

/// One rigid ship part with its 3D keypoints in the ship frame
/// (origin at flight-deck center, x forward, z up).
struct ObjectModel {
  int class_id = 0;
  std::string name;
  std::vector<Vec3> model_points;
};

struct ShipModel {
  std::vector<ObjectModel> parts;

  const ObjectModel* find(int class_id) const;
  /// Unique ids in [0, kNumClasses), >= 4 points per part, centered points of rank >= 2.
  void validate() const;
};

/// Six parts, keypoints at the 8 corners of each part's bounding box.
ShipModel default_ship_model();
/// Axis-aligned extents (min, max) of each default part, for building matching scenes.
std::vector<std::pair<Vec3, Vec3>> default_part_boxes();

ShipModel load_ship_model(const std::filesystem::path& path);
void save_ship_model(const ShipModel& model, const std::filesystem::path& path);

/// Detector output for one object class. keypoints[i] pairs with model_points[i].
struct KeypointObservation {
  int class_id = 0;
  double confidence = 0.0;
  std::vector<Vec2> keypoints;
  std::vector<bool> visible;

  std::size_t visible_count() const;
  bool operator==(const KeypointObservation&) const = default;
};

struct Correspondence {
  Vec3 model;
  Vec2 pixel;
};

struct PnpSolution {
  /// Model frame -> camera frame.
  Pose pose;
  double reprojection_rms = 0.0;
};

/// Penalty distance for a point at or behind the camera plane.
inline constexpr double kBehindCameraPenaltyPx = 1e6;

/// RMS pixel distance between projected model points and observations.
double reprojection_rms(const Pose& model_to_camera, std::span<const Correspondence> corr, const Intrinsics& k);

/// EPnP with Gauss-Newton refinement of the nullspace weights. Throws
/// InvalidArgument below 4 correspondences and DegenerateError on collinear
/// points or when no candidate is finite.
PnpSolution epnp_solve(std::span<const Correspondence> corr, const Intrinsics& k);

/// Fused (or single-class) 6D pose.
struct PoseEstimate {
  /// Ship frame -> camera frame.
  Pose pose;
  /// Covariance of the camera position expressed in the ship frame (m^2).
  Mat3 position_cov = Mat3::Identity();
  double rotation_conf = 0.0;
  std::vector<int> classes;
  double reprojection_rms = 0.0;

  Pose camera_in_ship() const { return inverse(pose); }
};

struct ClassEstimate {
  PoseEstimate estimate;
  double confidence = 0.0;
};

struct FusionConfig {
  double min_confidence = 0.9;
  double max_reprojection_rms = 8.0;
  /// Position std. dev. of a confidence-1 estimate (m).
  double sigma0 = 0.15;
  double outlier_sigmas = 3.0;
};

/// Gate, reject outliers around the confidence-weighted median, then fuse:
/// inverse-variance mean position with sigma_c = sigma0 / confidence_c and the
/// confidence-weighted quaternion mean. Empty when nothing passes the gate.
std::optional<PoseEstimate> fuse_poses(std::span<const ClassEstimate> per_class, const FusionConfig& cfg = {});

/// Source of keypoint observations for a frame. Implementations must not
/// carry state between calls.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<KeypointObservation> detect(const splat::Frame& frame) const = 0;
};

struct OracleNoise {
  double pixel_sigma = 0.0;
  double dropout_prob = 0.0;
  std::uint64_t seed = 0;
  /// confidence = 1 - visibility_penalty * hidden_fraction - noise_penalty * pixel_sigma
  double visibility_penalty = 0.5;
  double noise_penalty = 0.01;
};

/// Projects every part's keypoints from the known camera pose and perturbs
/// them. `frame_key` selects the random stream so repeated calls agree.
std::vector<KeypointObservation> oracle_detect(const Pose& camera_in_ship, const ShipModel& models,
                                               const Intrinsics& k, const OracleNoise& noise,
                                               std::uint64_t frame_key);

/// Oracle detector reading the truth camera pose stamped into each frame and
/// keying its noise on the frame timestamp.
class OracleDetector final : public Detector {
 public:
  OracleDetector(ShipModel models, Intrinsics k, OracleNoise noise);
  std::vector<KeypointObservation> detect(const splat::Frame& frame) const override;

 private:
  ShipModel models_;
  Intrinsics k_;
  OracleNoise noise_;
};

/// Stable random-stream key for a frame timestamp (microsecond resolution).
std::uint64_t frame_key(double timestamp);

struct StageTimings {
  double detect_ms = 0.0;
  double pnp_ms = 0.0;
  double fuse_ms = 0.0;
};

struct PipelineResult {
  std::optional<PoseEstimate> estimate;
  std::vector<KeypointObservation> observations;
  std::vector<ClassEstimate> per_class;
  StageTimings timings;
};

/// Per-class EPnP over already-detected keypoints followed by fusion.
PipelineResult estimate_from_observations(std::vector<KeypointObservation> observations, const ShipModel& models,
                                          const Intrinsics& k, const FusionConfig& cfg = {});

/// detect -> per-class EPnP -> fuse.
PipelineResult estimate_from_frame(const splat::Frame& frame, const Detector& detector, const ShipModel& models,
                                   const Intrinsics& k, const FusionConfig& cfg = {});

}  // namespace vil::pose
