// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "vil/geometry.hpp"

namespace vil {

/// Pinhole intrinsics. Pixel (i, j) samples the continuous image point (i, j),
/// so an on-axis point projects exactly onto pixel (cx, cy).
struct Intrinsics {
  int width = 640;
  int height = 640;
  double fx = 580.0;
  double fy = 580.0;
  double cx = 320.0;
  double cy = 320.0;

  /// Throws InvalidArgument unless width, height, fx, fy > 0 and the principal point is inside the image.
  void validate() const;

  /// Projection of a camera-frame point (z forward). Caller checks z > 0.
  Vec2 project(const Vec3& p_cam) const { return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy}; }
  bool in_bounds(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 && px.y() <= height - 1.0;
  }
};

/// Camera-to-world pose; optical axis +z, image x right, image y down.
struct CameraModel {
  Intrinsics intrinsics;
  Pose pose;
};

/// Maps camera-frame axes into a z-up, x-forward body frame: the optical axis looks
/// along body +x, pitched down by `pitch_down_rad`. This is where the renderer's
/// z-forward/y-down convention meets the vehicle's z-up convention.
Pose forward_camera_extrinsic(double pitch_down_rad, const Vec3& offset = Vec3::Zero());

}  // namespace vil
