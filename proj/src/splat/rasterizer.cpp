// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <thread>

#include <Eigen/Eigenvalues>

#include "vil/error.hpp"
#include "vil/splat.hpp"
#include "sh_basis.hpp"

namespace vil::splat {
namespace {

Vec3 sh_color(const ShCoeffs& sh, const Vec3& dir) {
  std::array<double, kShCoeffs> basis;
  sh_basis(dir.x(), dir.y(), dir.z(), basis);
  Vec3 c = Vec3::Constant(0.5);
  for (int k = 0; k < kShCoeffs; ++k) c += basis[k] * sh[k];
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

// Four-lane float vectors (GCC/Clang vector extensions). Every lane runs the
// same IEEE operations as a scalar loop would, so grouping never changes results.
using F4 = float __attribute__((vector_size(16)));
using I4 = std::int32_t __attribute__((vector_size(16)));

inline F4 load4(const float* p) {
  F4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(float* p, F4 v) { std::memcpy(p, &v, sizeof v); }

// exp(x) for x in [-87, 0] with relative error below 2e-7.
inline F4 exp_neg(F4 x) {
  constexpr float kRound = 12582912.0f;  // 1.5 * 2^23: adding it rounds to an integer
  x = x < -87.0f ? F4{} - 87.0f : x;
  const F4 n = (x * 1.44269504f + kRound) - kRound;
  const F4 r = x - n * 0.693145752f - n * 1.42860677e-6f;
  F4 p = r * 1.98756912e-4f + 1.39819994e-3f;
  p = p * r + 8.33345205e-3f;
  p = p * r + 4.16657962e-2f;
  p = p * r + 1.66666657e-1f;
  p = p * r + 0.5f;
  p = p * r * r + r + 1.0f;
  const I4 bits = (__builtin_convertvector(n, I4) + 127) << 23;
  F4 scale;
  std::memcpy(&scale, &bits, sizeof scale);
  return p * scale;
}

// Screen-space record used by the compositing loop.
struct PackedSplat {
  float mx, my;
  float conic_a, conic_b, conic_c;
  float r, g, b;
  float alpha;
  float power_max;     // beyond this Mahalanobis power the splat contributes nothing
  int x0, x1, y0, y1;  // inclusive pixel bounds of the contributing ellipse
};

struct ProjectedEntry {
  double depth;
  std::uint32_t index;
  bool visible;
  PackedSplat packed;
};

PackedSplat pack(const Splat2D& s) {
  const double det = s.cov(0, 0) * s.cov(1, 1) - s.cov(0, 1) * s.cov(1, 0);
  PackedSplat p{};
  p.mx = static_cast<float>(s.mean.x());
  p.my = static_cast<float>(s.mean.y());
  p.conic_a = static_cast<float>(s.cov(1, 1) / det);
  p.conic_b = static_cast<float>(-s.cov(0, 1) / det);
  p.conic_c = static_cast<float>(s.cov(0, 0) / det);
  p.r = static_cast<float>(s.color.x());
  p.g = static_cast<float>(s.color.y());
  p.b = static_cast<float>(s.color.z());
  p.alpha = static_cast<float>(s.alpha_peak);
  // Contribution stops at the 3-sigma ellipse or where alpha drops under
  // kAlphaMin, whichever is tighter. The box is padded a pixel so float
  // rounding in the per-pixel test can never reach outside it.
  const double cutoff = 2.0 * std::log(s.alpha_peak / kAlphaMin);
  const double power_max = std::clamp(cutoff, 0.0, 9.0);
  p.power_max = static_cast<float>(power_max) + 1e-4f;
  const double ex = std::sqrt(power_max * s.cov(0, 0)) + 1.0;
  const double ey = std::sqrt(power_max * s.cov(1, 1)) + 1.0;
  p.x0 = static_cast<int>(std::floor(s.mean.x() - ex));
  p.x1 = static_cast<int>(std::ceil(s.mean.x() + ex));
  p.y0 = static_cast<int>(std::floor(s.mean.y() - ey));
  p.y1 = static_cast<int>(std::ceil(s.mean.y() + ey));
  return p;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
}

}  // namespace

namespace {

std::optional<Splat2D> project_with(const Gaussian& g, const CameraModel& cam, const Mat3& world_to_cam, double near) {
  const Intrinsics& k = cam.intrinsics;
  const Vec3 t = world_to_cam * (g.position - cam.pose.position);
  if (!(t.z() > near)) return std::nullopt;

  // Jacobian evaluated with the point clamped to 1.3x the field of view, as in
  // the reference 3DGS rasterizer; keeps off-screen splats from ballooning.
  const double inv_z = 1.0 / t.z();
  const double lim_x = 1.3 * std::max(k.cx, k.width - k.cx) / k.fx;
  const double lim_y = 1.3 * std::max(k.cy, k.height - k.cy) / k.fy;
  const double jx = std::clamp(t.x() * inv_z, -lim_x, lim_x) * t.z();
  const double jy = std::clamp(t.y() * inv_z, -lim_y, lim_y) * t.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << k.fx * inv_z, 0.0, -k.fx * jx * inv_z * inv_z,
         0.0, k.fy * inv_z, -k.fy * jy * inv_z * inv_z;
  const Eigen::Matrix<double, 2, 3> jw = jac * world_to_cam;

  Splat2D s;
  s.cov = jw * g.covariance() * jw.transpose();
  s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
  s.cov += kCovDilation * Eigen::Matrix2d::Identity();
  s.mean = k.project(t);
  s.depth = t.z();

  const double half_tr = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
  const double det = s.cov.determinant();
  const double lambda_max = half_tr + std::sqrt(std::max(0.0, half_tr * half_tr - det));
  const double r = 3.0 * std::sqrt(lambda_max);
  if (s.mean.x() + r < 0.0 || s.mean.x() - r > k.width - 1.0 || s.mean.y() + r < 0.0 || s.mean.y() - r > k.height - 1.0) {
    return std::nullopt;
  }

  s.color = sh_color(g.sh, (g.position - cam.pose.position).normalized());
  s.alpha_peak = g.opacity;
  return s;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const Gaussian& g, const CameraModel& cam, double near) {
  return project_with(g, cam, cam.pose.rotation.inverse().matrix(), near);
}

Frame rasterize(const SceneModel& scene, const CameraModel& cam, const RenderOptions& opts) {
  cam.intrinsics.validate();
  if (opts.tile_size <= 0) throw InvalidArgument("tile size must be positive");
  const int width = cam.intrinsics.width, height = cam.intrinsics.height;

  Frame frame;
  frame.width = width;
  frame.height = height;
  frame.camera_pose = cam.pose;
  frame.rgb.resize(static_cast<std::size_t>(width) * height * 3);

  // Project.
  const std::size_t n = scene.gaussians.size();
  std::vector<ProjectedEntry> projected(n);
  const Mat3 world_to_cam = cam.pose.rotation.inverse().matrix();
  constexpr std::size_t kChunk = 4096;
  parallel_for((n + kChunk - 1) / kChunk, opts.threads, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      auto s = project_with(scene.gaussians[i], cam, world_to_cam, opts.near);
      projected[i].index = static_cast<std::uint32_t>(i);
      projected[i].visible = s.has_value();
      if (s) {
        projected[i].depth = s->depth;
        projected[i].packed = pack(*s);
      }
    }
  });

  // Global depth order, index as tie-breaker.
  // Keys pack the float depth bits (monotonic for positive floats) above the index.
  std::vector<std::uint64_t> keyed;
  keyed.reserve(n);
  for (const auto& e : projected) {
    if (!e.visible) continue;
    const float d = static_cast<float>(e.depth);
    std::uint32_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    keyed.push_back(static_cast<std::uint64_t>(bits) << 32 | e.index);
  }
  std::sort(keyed.begin(), keyed.end());

  // Bin into tiles; each tile's list inherits the global order.
  const int ts = opts.tile_size;
  const int tiles_x = (width + ts - 1) / ts, tiles_y = (height + ts - 1) / ts;
  const std::size_t num_tiles = static_cast<std::size_t>(tiles_x) * tiles_y;
  std::vector<PackedSplat> sorted;
  sorted.reserve(keyed.size());
  for (auto key : keyed) sorted.push_back(projected[static_cast<std::uint32_t>(key)].packed);
  projected.clear();
  projected.shrink_to_fit();

  auto tile_range = [&](const PackedSplat& p, int& tx0, int& tx1, int& ty0, int& ty1) {
    tx0 = std::max(0, p.x0) / ts;
    tx1 = std::min(width - 1, p.x1) / ts;
    ty0 = std::max(0, p.y0) / ts;
    ty1 = std::min(height - 1, p.y1) / ts;
    return p.x1 >= 0 && p.y1 >= 0 && p.x0 <= width - 1 && p.y0 <= height - 1;
  };
  std::vector<std::uint32_t> tile_start(num_tiles + 1, 0);
  for (const auto& p : sorted) {
    int tx0, tx1, ty0, ty1;
    if (!tile_range(p, tx0, tx1, ty0, ty1)) continue;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) ++tile_start[static_cast<std::size_t>(ty) * tiles_x + tx + 1];
  }
  std::partial_sum(tile_start.begin(), tile_start.end(), tile_start.begin());
  std::vector<std::uint32_t> tile_items(tile_start.back());
  {
    std::vector<std::uint32_t> fill(tile_start.begin(), tile_start.end() - 1);
    for (std::uint32_t i = 0; i < sorted.size(); ++i) {
      int tx0, tx1, ty0, ty1;
      if (!tile_range(sorted[i], tx0, tx1, ty0, ty1)) continue;
      for (int ty = ty0; ty <= ty1; ++ty)
        for (int tx = tx0; tx <= tx1; ++tx) tile_items[fill[static_cast<std::size_t>(ty) * tiles_x + tx]++] = i;
    }
  }

  // Composite front to back. Each pixel sees its splats in global depth order
  // regardless of tiling, so tile size and worker count never change output.
  const float bg[3] = {static_cast<float>(opts.background.x()), static_cast<float>(opts.background.y()),
                       static_cast<float>(opts.background.z())};
  const float alpha_min = static_cast<float>(kAlphaMin), alpha_max = static_cast<float>(kAlphaMax);
  const float t_min = static_cast<float>(kTransmittanceMin);
  parallel_for(num_tiles, opts.threads, [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
    const int px0 = tx * ts, py0 = ty * ts;
    const int tw = std::min(ts, width - px0), th = std::min(ts, height - py0);
    const int npx = tw * th;
    // Planar buffers with a lane of slack: a vector group may run past the row end.
    // Those lanes see alpha 0, which leaves t and the sums bit-identical.
    const std::size_t buf = static_cast<std::size_t>(npx) + 4;
    std::vector<float> trans(buf, 1.0f), acc_r(buf, 0.0f), acc_g(buf, 0.0f), acc_b(buf, 0.0f);
    const F4 lane{0.0f, 1.0f, 2.0f, 3.0f};
    int finished = 0;
    for (std::uint32_t it = tile_start[tile]; it < tile_start[tile + 1] && finished < npx; ++it) {
      // Local copy: stores into the tile buffers would otherwise force reloads.
      const PackedSplat p = sorted[tile_items[it]];
      const int x0 = std::max(px0, p.x0), x1 = std::min(px0 + tw - 1, p.x1);
      const int y0 = std::max(py0, p.y0), y1 = std::min(py0 + th - 1, p.y1);
      for (int y = y0; y <= y1; ++y) {
        const float dy = static_cast<float>(y) - p.my;
        // x span of the ellipse on this row; computed per row, so independent of tiling.
        const float half_b = p.conic_b * dy;
        const float disc = half_b * half_b - p.conic_a * (p.conic_c * dy * dy - p.power_max);
        if (disc < 0.0f) continue;
        const float root = std::sqrt(disc);
        const float lo = p.mx + (-half_b - root) / p.conic_a, hi = p.mx + (-half_b + root) / p.conic_a;
        const int rx0 = std::max(x0, static_cast<int>(std::ceil(lo)));
        const int rx1 = std::min(x1, static_cast<int>(std::floor(hi)));
        const float row_b = 2.0f * half_b, row_c = p.conic_c * dy * dy;
        const int row = (y - py0) * tw - px0;
        for (int x = rx0; x <= rx1; x += 4) {
          const F4 xs = static_cast<float>(x) + lane;
          const F4 t = load4(&trans[row + x]);
          const F4 dx = xs - p.mx;
          const F4 power = (p.conic_a * dx + row_b) * dx + row_c;
          const F4 peak = p.alpha * exp_neg(-0.5f * power);
          F4 alpha = peak < alpha_max ? peak : F4{} + alpha_max;
          const I4 live = (xs <= static_cast<float>(rx1)) & (t >= t_min) & (power <= p.power_max) & (alpha >= alpha_min);
          alpha = live ? alpha : F4{};
          const F4 w = t * alpha;
          store4(&acc_r[row + x], load4(&acc_r[row + x]) + w * p.r);
          store4(&acc_g[row + x], load4(&acc_g[row + x]) + w * p.g);
          store4(&acc_b[row + x], load4(&acc_b[row + x]) + w * p.b);
          const F4 t_next = t * (1.0f - alpha);
          store4(&trans[row + x], t_next);
          const I4 done = live & (t_next < t_min);
          finished -= done[0] + done[1] + done[2] + done[3];
        }
      }
    }
    for (int y = 0; y < th; ++y) {
      for (int x = 0; x < tw; ++x) {
        const int li = y * tw + x;
        std::uint8_t* out = frame.rgb.data() + 3 * (static_cast<std::size_t>(py0 + y) * width + px0 + x);
        const float c[3] = {acc_r[li], acc_g[li], acc_b[li]};
        for (int k = 0; k < 3; ++k) {
          const float v = std::clamp(c[k] + trans[li] * bg[k], 0.0f, 1.0f);
          out[k] = static_cast<std::uint8_t>(255.0f * v + 0.5f);
        }
      }
    }
  });
  return frame;
}

Frame render_at(const SceneModel& scene, const Pose& body_pose, const Intrinsics& intrinsics,
                const Pose& camera_to_body, const RenderOptions& opts, double timestamp) {
  CameraModel cam{intrinsics, compose(body_pose, camera_to_body)};
  Frame f = rasterize(scene, cam, opts);
  f.timestamp = timestamp;
  return f;
}

}  // namespace vil::splat
