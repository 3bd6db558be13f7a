// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vil/camera.hpp"
#include "vil/geometry.hpp"

namespace vil::splat {

inline constexpr int kShDegree = 3;
inline constexpr int kShCoeffs = 16;
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

/// Per-coefficient RGB triples, coefficient 0 is the DC term.
using ShCoeffs = std::array<Vec3, kShCoeffs>;

inline ShCoeffs zero_sh() {
  ShCoeffs sh;
  sh.fill(Vec3::Zero());
  return sh;
}

/// Anisotropic 3D Gaussian with activated parameters (scale is a std. dev. in
/// meters, opacity in (0,1)).
struct Gaussian {
  Vec3 position = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Rotation orientation;
  double opacity = 0.5;
  ShCoeffs sh = zero_sh();

  /// R diag(s^2) R^T in world frame.
  Mat3 covariance() const;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
};

/// Immutable set of Gaussians plus provenance.
struct SceneModel {
  std::vector<Gaussian> gaussians;
  std::string source;
  Aabb bounds;
  /// Vertices dropped by the validity filter at load.
  std::size_t culled = 0;
};

/// Bounding box enclosing every Gaussian's position +- 3 * its largest scale.
Aabb compute_bounds(std::span<const Gaussian> gaussians);

/// Reads a binary little-endian 3DGS point-cloud PLY. Throws IoError.
SceneModel load_scene(const std::filesystem::path& path);
/// Writes raw (pre-activation) values: log scale, logit opacity, float32 fields.
void save_scene(const SceneModel& scene, const std::filesystem::path& path);

struct BlobSpec {
  Vec3 position = Vec3::Zero();
  Vec3 scale = Vec3::Constant(0.1);
  Rotation orientation;
  double opacity = 0.9;
  Vec3 rgb = Vec3::Ones();
};

/// View-independent scene from explicit blobs; rgb becomes the DC term.
SceneModel generate_test_scene(std::span<const BlobSpec> spec);

/// Random scene of `count` Gaussians inside `region`, full degree-3 color.
/// Scales are drawn log-uniformly in [min_scale, max_scale].
SceneModel random_scene(std::size_t count, std::uint64_t seed, const Aabb& region, double min_scale = 0.01,
                        double max_scale = 0.06);

/// clamp(0.5 + sum_k c_k Y_k(dir), 0, 1). Throws InvalidArgument unless |dir| = 1 +- 1e-6.
Vec3 evaluate_sh(const ShCoeffs& sh, const Vec3& view_dir);

/// Screen-space footprint of one Gaussian.
struct Splat2D {
  Vec2 mean = Vec2::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double alpha_peak = 0.0;
};

inline constexpr double kCovDilation = 0.3;
inline constexpr double kAlphaMax = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1.0 / 255.0;

/// EWA projection. Empty when depth <= near or the 3-sigma footprint misses the image.
std::optional<Splat2D> project_gaussian(const Gaussian& g, const CameraModel& cam, double near = 0.1);

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
  double timestamp = 0.0;
  /// Ground-truth camera-to-world pose the frame was rendered from.
  Pose camera_pose;

  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
};

struct RenderOptions {
  int tile_size = 16;
  /// 0 selects std::thread::hardware_concurrency().
  int threads = 0;
  Vec3 background = Vec3::Constant(0.5);
  double near = 0.1;
};

Frame rasterize(const SceneModel& scene, const CameraModel& cam, const RenderOptions& opts = {});

/// Renders from a vehicle pose; camera pose = body_pose * camera_to_body.
Frame render_at(const SceneModel& scene, const Pose& body_pose, const Intrinsics& intrinsics,
                const Pose& camera_to_body = Pose::identity(), const RenderOptions& opts = {}, double timestamp = 0.0);

/// RGB8 PNG. Throws IoError.
void write_png(const Frame& frame, const std::filesystem::path& path);
Frame read_png(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Frame& frame);
/// Throws IoError on malformed input.
Frame decode_png(std::span<const std::uint8_t> data);

}  // namespace vil::splat
