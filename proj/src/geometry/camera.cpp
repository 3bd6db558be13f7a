// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <fmt/format.h>

#include "vil/camera.hpp"
#include "vil/error.hpp"

namespace vil {

void Intrinsics::validate() const {
  if (width <= 0 || height <= 0) throw InvalidArgument(fmt::format("image size {}x{} must be positive", width, height));
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw InvalidArgument("focal lengths must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw InvalidArgument(fmt::format("principal point ({}, {}) outside the image", cx, cy));
  }
}

Pose forward_camera_extrinsic(double pitch_down_rad, const Vec3& offset) {
  Mat3 cam_axes_in_body;
  // columns: camera x (right), y (down), z (optical axis) in body coordinates
  cam_axes_in_body << 0.0, 0.0, 1.0,
                      -1.0, 0.0, 0.0,
                      0.0, -1.0, 0.0;
  const Rotation r = Rotation::about_y(pitch_down_rad) * Rotation::from_matrix(cam_axes_in_body);
  return {offset, r};
}

}  // namespace vil
