// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include "vil/posepipe.hpp"

namespace vil::pose {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::size_t KeypointObservation::visible_count() const {
  return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), true));
}

std::uint64_t frame_key(double timestamp) { return static_cast<std::uint64_t>(std::llround(timestamp * 1e6)); }

std::vector<KeypointObservation> oracle_detect(const Pose& camera_in_ship, const ShipModel& models,
                                               const Intrinsics& k, const OracleNoise& noise,
                                               std::uint64_t key) {
  std::mt19937_64 rng(splitmix64(splitmix64(noise.seed) ^ key));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Pose ship_to_cam = inverse(camera_in_ship);

  std::vector<KeypointObservation> out;
  for (const auto& part : models.parts) {
    // Draw every variate even for dropped classes so one class's outcome never
    // shifts another's noise.
    const bool dropped = unit(rng) < noise.dropout_prob;
    KeypointObservation obs;
    obs.class_id = part.class_id;
    for (const auto& p : part.model_points) {
      const Vec2 n(gauss(rng), gauss(rng));
      const Vec3 pc = ship_to_cam.transform(p);
      bool vis = pc.z() > 1e-6;
      Vec2 px = Vec2::Zero();
      if (vis) {
        const Vec2 exact = k.project(pc);
        px = exact + noise.pixel_sigma * n;
        vis = k.in_bounds(exact) && k.in_bounds(px);
      }
      obs.keypoints.push_back(vis ? px : Vec2::Zero());
      obs.visible.push_back(vis);
    }
    const std::size_t nvis = obs.visible_count();
    if (dropped || nvis == 0) continue;
    const double hidden = 1.0 - static_cast<double>(nvis) / static_cast<double>(part.model_points.size());
    obs.confidence = std::max(0.0, 1.0 - noise.visibility_penalty * hidden - noise.noise_penalty * noise.pixel_sigma);
    out.push_back(std::move(obs));
  }
  return out;
}

OracleDetector::OracleDetector(ShipModel models, Intrinsics k, OracleNoise noise)
    : models_(std::move(models)), k_(k), noise_(noise) {}

std::vector<KeypointObservation> OracleDetector::detect(const splat::Frame& frame) const {
  return oracle_detect(frame.camera_pose, models_, k_, noise_, frame_key(frame.timestamp));
}

}  // namespace vil::pose
