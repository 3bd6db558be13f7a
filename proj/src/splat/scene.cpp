// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/splat.hpp"

namespace vil::splat {

Mat3 Gaussian::covariance() const {
  const Mat3 r = orientation.matrix();
  return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

Aabb compute_bounds(std::span<const Gaussian> gaussians) {
  if (gaussians.empty()) return {};
  Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& g : gaussians) {
    const Vec3 ext = Vec3::Constant(3.0 * g.scale.maxCoeff());
    box.min = box.min.cwiseMin(g.position - ext);
    box.max = box.max.cwiseMax(g.position + ext);
  }
  return box;
}

SceneModel generate_test_scene(std::span<const BlobSpec> spec) {
  if (spec.empty()) throw InvalidArgument("generate_test_scene: spec is empty");
  SceneModel scene;
  scene.gaussians.reserve(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& b = spec[i];
    if (!b.position.allFinite() || !(b.scale.array() > 0.0).all()) {
      throw InvalidArgument(fmt::format("blob {}: position must be finite and scale positive", i));
    }
    if (!(b.opacity > 0.0 && b.opacity < 1.0)) throw InvalidArgument(fmt::format("blob {}: opacity must be in (0,1)", i));
    if (!((b.rgb.array() >= 0.0).all() && (b.rgb.array() <= 1.0).all())) {
      throw InvalidArgument(fmt::format("blob {}: rgb must be in [0,1]", i));
    }
    Gaussian g;
    g.position = b.position;
    g.scale = b.scale;
    g.orientation = b.orientation;
    g.opacity = b.opacity;
    g.sh.fill(Vec3::Zero());
    g.sh[0] = (b.rgb - Vec3::Constant(0.5)) / kShC0;
    scene.gaussians.push_back(g);
  }
  scene.source = fmt::format("synthetic:{} blobs", spec.size());
  scene.bounds = compute_bounds(scene.gaussians);
  return scene;
}

SceneModel random_scene(std::size_t count, std::uint64_t seed, const Aabb& region, double min_scale,
                        double max_scale) {
  if (count == 0) throw InvalidArgument("random_scene: count must be positive");
  if (!(min_scale > 0.0 && max_scale >= min_scale)) throw InvalidArgument("random_scene: bad scale range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double log_lo = std::log(min_scale), log_hi = std::log(max_scale);

  SceneModel scene;
  scene.gaussians.resize(count);
  for (auto& g : scene.gaussians) {
    for (int a = 0; a < 3; ++a) g.position[a] = region.min[a] + unit(rng) * (region.max[a] - region.min[a]);
    for (int a = 0; a < 3; ++a) g.scale[a] = std::exp(log_lo + unit(rng) * (log_hi - log_lo));
    g.orientation = Rotation::from_quaternion(normal(rng), normal(rng), normal(rng), normal(rng));
    g.opacity = 0.2 + 0.75 * unit(rng);
    g.sh[0] = (Vec3(unit(rng), unit(rng), unit(rng)) - Vec3::Constant(0.5)) / kShC0;
    for (int k = 1; k < kShCoeffs; ++k) g.sh[k] = 0.05 * Vec3(normal(rng), normal(rng), normal(rng));
  }
  scene.source = fmt::format("random:{}:seed={}", count, seed);
  scene.bounds = compute_bounds(scene.gaussians);
  return scene;
}

}  // namespace vil::splat
