// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vil/posepipe.hpp"

namespace vil::harness::detail {

inline const std::vector<std::string> kVisionHeader{"t",  "fix", "n_classes", "x",  "y",         "z",
                                                    "qw", "qx",  "qy",        "qz", "pos_sigma", "reproj_rms"};

/// Vehicle pose implied by a pipeline fix, given the camera-to-body transform's inverse.
inline Pose body_from_fix(const pose::PoseEstimate& e, const Pose& body_to_camera) {
  return compose(e.camera_in_ship(), body_to_camera);
}

inline std::array<double, 12> vision_row(double t, const pose::PipelineResult& res, const Pose& body_to_camera) {
  if (!res.estimate) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    return {t, 0.0, 0.0, nan, nan, nan, nan, nan, nan, nan, nan, nan};
  }
  const Pose body = body_from_fix(*res.estimate, body_to_camera);
  const auto q = body.rotation.wxyz();
  return {t, 1.0, static_cast<double>(res.estimate->classes.size()), body.position.x(), body.position.y(),
          body.position.z(), q[0], q[1], q[2], q[3], std::sqrt(res.estimate->position_cov.trace() / 3.0),
          res.estimate->reprojection_rms};
}

}  // namespace vil::harness::detail
