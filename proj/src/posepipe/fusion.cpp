// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "vil/posepipe.hpp"

namespace vil::pose {
namespace {

struct Candidate {
  Pose camera_in_ship;
  double confidence;
  double rms;
  int index;
};

// Lower weighted median of one coordinate.
double weighted_median(std::vector<std::pair<double, double>> value_weight) {
  std::sort(value_weight.begin(), value_weight.end());
  double total = 0.0;
  for (const auto& [v, w] : value_weight) total += w;
  double acc = 0.0;
  for (const auto& [v, w] : value_weight) {
    acc += w;
    if (acc >= 0.5 * total) return v;
  }
  return value_weight.back().first;
}

Rotation quaternion_mean(const std::vector<Candidate>& cs) {
  Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
  for (const auto& c : cs) {
    const auto q = c.camera_in_ship.rotation.wxyz();
    const Eigen::Vector4d v(q[0], q[1], q[2], q[3]);
    acc += c.confidence * v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(acc);
  const Eigen::Vector4d top = es.eigenvectors().col(3);
  return Rotation::from_quaternion(top(0), top(1), top(2), top(3));
}

}  // namespace

std::optional<PoseEstimate> fuse_poses(std::span<const ClassEstimate> per_class, const FusionConfig& cfg) {
  std::vector<Candidate> gated;
  for (int i = 0; i < static_cast<int>(per_class.size()); ++i) {
    const auto& ce = per_class[i];
    if (!(ce.confidence >= cfg.min_confidence) || !(ce.estimate.reprojection_rms <= cfg.max_reprojection_rms)) continue;
    if (!ce.estimate.pose.position.allFinite()) continue;
    gated.push_back({ce.estimate.camera_in_ship(), ce.confidence, ce.estimate.reprojection_rms, i});
  }
  if (gated.empty()) return std::nullopt;

  // Outlier test uses confidences relative to the strongest estimate so that a
  // common rescaling of all confidences cannot change which estimates survive.
  const double max_conf = std::max_element(gated.begin(), gated.end(), [](const auto& a, const auto& b) {
                            return a.confidence < b.confidence;
                          })->confidence;
  Vec3 median;
  for (int a = 0; a < 3; ++a) {
    std::vector<std::pair<double, double>> vw;
    for (const auto& c : gated) vw.emplace_back(c.camera_in_ship.position[a], c.confidence);
    median[a] = weighted_median(std::move(vw));
  }
  std::vector<Candidate> kept;
  for (const auto& c : gated) {
    const double sigma_rel = cfg.sigma0 * max_conf / c.confidence;
    if ((c.camera_in_ship.position - median).norm() <= cfg.outlier_sigmas * sigma_rel) kept.push_back(c);
  }
  if (kept.empty()) kept = gated;

  double info = 0.0;
  Vec3 weighted = Vec3::Zero();
  double rms_acc = 0.0, conf_acc = 0.0;
  for (const auto& c : kept) {
    const double w = c.confidence * c.confidence / (cfg.sigma0 * cfg.sigma0);
    info += w;
    weighted += w * c.camera_in_ship.position;
    rms_acc += c.confidence * c.rms;
    conf_acc += c.confidence;
  }

  Pose fused_cam{weighted / info, kept.size() == 1 ? kept.front().camera_in_ship.rotation : quaternion_mean(kept)};
  if (kept.size() == 1) fused_cam.position = kept.front().camera_in_ship.position;

  PoseEstimate out;
  out.pose = inverse(fused_cam);
  out.position_cov = Mat3::Identity() / info;
  out.rotation_conf = conf_acc / static_cast<double>(kept.size());
  out.reprojection_rms = rms_acc / conf_acc;
  for (const auto& c : kept) {
    for (int id : per_class[c.index].estimate.classes) out.classes.push_back(id);
  }
  std::sort(out.classes.begin(), out.classes.end());
  return out;
}

}  // namespace vil::pose
