// SPDX-License-Identifier: Apache-2.0
//
// EPnP: world points are written as barycentric combinations of 4 control
// points (3 when the points are planar), the camera-frame control points lie
// in the near-nullspace of a 2n x 3m system, and their weights follow from the
// preserved pairwise control-point distances.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/posepipe.hpp"

namespace vil::pose {
namespace {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

constexpr double kPlanarRatio = 1e-6;
constexpr int kGaussNewtonIters = 10;
constexpr double kGaussNewtonTol = 1e-8;

// Index pairs (k <= l) of the quadratic monomials beta_k * beta_l.
std::vector<std::pair<int, int>> monomials(int nb) {
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < nb; ++k)
    for (int l = k; l < nb; ++l) out.emplace_back(k, l);
  return out;
}

struct DistanceSystem {
  MatX l;    // pairs x monomials
  VecX rho;  // squared control-point distances in the model frame
  std::vector<std::pair<int, int>> mono;
};

DistanceSystem build_distance_system(const std::vector<Vec3>& cw, const std::vector<VecX>& kernel) {
  const int m = static_cast<int>(cw.size());
  const int nb = static_cast<int>(kernel.size());
  DistanceSystem sys;
  sys.mono = monomials(nb);
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) pairs.emplace_back(a, b);
  sys.l.resize(static_cast<int>(pairs.size()), static_cast<int>(sys.mono.size()));
  sys.rho.resize(static_cast<int>(pairs.size()));
  for (int p = 0; p < static_cast<int>(pairs.size()); ++p) {
    const auto [a, b] = pairs[p];
    std::vector<Vec3> dv(nb);
    for (int k = 0; k < nb; ++k) dv[k] = kernel[k].segment<3>(3 * a) - kernel[k].segment<3>(3 * b);
    for (int c = 0; c < static_cast<int>(sys.mono.size()); ++c) {
      const auto [k, l] = sys.mono[c];
      sys.l(p, c) = (k == l ? 1.0 : 2.0) * dv[k].dot(dv[l]);
    }
    sys.rho(p) = (cw[a] - cw[b]).squaredNorm();
  }
  return sys;
}

int mono_index(const DistanceSystem& sys, int k, int l) {
  if (k > l) std::swap(k, l);
  for (int c = 0; c < static_cast<int>(sys.mono.size()); ++c)
    if (sys.mono[c] == std::make_pair(k, l)) return c;
  return -1;
}

// Linearized initial weights using only the first `n` kernel vectors.
VecX initial_betas(const DistanceSystem& sys, int n, int nb) {
  std::vector<int> cols;
  for (int k = 0; k < n; ++k)
    for (int l = k; l < n; ++l) cols.push_back(mono_index(sys, k, l));
  MatX a(sys.l.rows(), static_cast<int>(cols.size()));
  for (int c = 0; c < static_cast<int>(cols.size()); ++c) a.col(c) = sys.l.col(cols[c]);
  const VecX x = a.colPivHouseholderQr().solve(sys.rho);

  auto coeff = [&](int k, int l) {
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j, ++c)
        if (i == k && j == l) return x(c);
    return 0.0;
  };
  VecX beta = VecX::Zero(nb);
  beta(0) = std::sqrt(std::abs(coeff(0, 0)));
  for (int k = 1; k < n; ++k) {
    beta(k) = std::sqrt(std::abs(coeff(k, k)));
    if (coeff(0, k) < 0.0) beta(k) = -beta(k);
  }
  return beta;
}

void refine_betas(const DistanceSystem& sys, VecX& beta) {
  const int nb = static_cast<int>(beta.size());
  const int np = static_cast<int>(sys.rho.size());
  for (int it = 0; it < kGaussNewtonIters; ++it) {
    VecX r(np);
    MatX j = MatX::Zero(np, nb);
    for (int p = 0; p < np; ++p) {
      double v = 0.0;
      for (int c = 0; c < static_cast<int>(sys.mono.size()); ++c) {
        const auto [k, l] = sys.mono[c];
        const double lc = sys.l(p, c);
        v += lc * beta(k) * beta(l);
        j(p, k) += lc * beta(l);
        j(p, l) += lc * beta(k);
      }
      r(p) = v - sys.rho(p);
    }
    const VecX step = j.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) return;
    beta += step;
    if (step.norm() < kGaussNewtonTol) return;
  }
}

// Closed-form rigid alignment camera = R * model + t, reflection-corrected.
Pose align(const std::vector<Vec3>& model, const std::vector<Vec3>& cam) {
  const std::size_t n = model.size();
  Vec3 cm = Vec3::Zero(), cc = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cm += model[i];
    cc += cam[i];
  }
  cm /= static_cast<double>(n);
  cc /= static_cast<double>(n);
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) h += (model[i] - cm) * (cam[i] - cc).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  if (!r.allFinite()) throw DegenerateError("alignment produced a non-finite rotation");
  Pose p;
  p.rotation = Rotation::from_matrix(r);
  p.position = cc - p.rotation * cm;
  return p;
}

}  // namespace

double reprojection_rms(const Pose& model_to_camera, std::span<const Correspondence> corr, const Intrinsics& k) {
  if (corr.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : corr) {
    const Vec3 pc = model_to_camera.transform(c.model);
    if (!(pc.z() > 0.0)) {
      sum += kBehindCameraPenaltyPx * kBehindCameraPenaltyPx;
      continue;
    }
    sum += (k.project(pc) - c.pixel).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(corr.size()));
}

PnpSolution epnp_solve(std::span<const Correspondence> corr, const Intrinsics& k) {
  const int n = static_cast<int>(corr.size());
  if (n < 4) throw InvalidArgument(fmt::format("epnp_solve: need at least 4 correspondences, got {}", n));

  // Control points from the centroid and principal axes.
  Vec3 c0 = Vec3::Zero();
  for (const auto& c : corr) c0 += c.model;
  c0 /= n;
  Mat3 scatter = Mat3::Zero();
  for (const auto& c : corr) scatter += (c.model - c0) * (c.model - c0).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> pca(scatter);
  const Vec3 lambda = pca.eigenvalues().cwiseMax(0.0);  // ascending
  const Vec3 sv = lambda.cwiseSqrt();
  if (!(sv(2) > 0.0) || !(sv(1) > kPlanarRatio * sv(2))) {
    throw DegenerateError("epnp_solve: model points are collinear or coincident");
  }
  const bool planar = sv(0) < kPlanarRatio * sv(2);
  const int m = planar ? 3 : 4;

  std::vector<Vec3> cw{c0};
  for (int a = 2; a >= 3 - (m - 1); --a) cw.push_back(c0 + std::sqrt(lambda(a) / n) * pca.eigenvectors().col(a));

  // Barycentric coordinates; the control-point offsets are orthogonal.
  MatX alphas(n, m);
  for (int i = 0; i < n; ++i) {
    const Vec3 d = corr[i].model - c0;
    double rest = 1.0;
    for (int j = 1; j < m; ++j) {
      const Vec3 axis = cw[j] - c0;
      alphas(i, j) = axis.dot(d) / axis.squaredNorm();
      rest -= alphas(i, j);
    }
    alphas(i, 0) = rest;
  }

  MatX mm = MatX::Zero(2 * n, 3 * m);
  for (int i = 0; i < n; ++i) {
    const double u = corr[i].pixel.x(), v = corr[i].pixel.y();
    for (int j = 0; j < m; ++j) {
      const double a = alphas(i, j);
      mm(2 * i, 3 * j) = a * k.fx;
      mm(2 * i, 3 * j + 2) = a * (k.cx - u);
      mm(2 * i + 1, 3 * j + 1) = a * k.fy;
      mm(2 * i + 1, 3 * j + 2) = a * (k.cy - v);
    }
  }
  const MatX mtm = mm.transpose() * mm;
  Eigen::SelfAdjointEigenSolver<MatX> es(mtm);
  const int nb = m;  // kernel vectors carried through refinement
  std::vector<VecX> kernel;
  for (int i = 0; i < nb; ++i) kernel.push_back(es.eigenvectors().col(i));

  const DistanceSystem sys = build_distance_system(cw, kernel);
  const int num_pairs = static_cast<int>(sys.rho.size());

  PnpSolution best;
  best.reprojection_rms = std::numeric_limits<double>::infinity();
  bool any = false;
  for (int dim = 1; dim <= 3; ++dim) {
    if (dim * (dim + 1) / 2 > num_pairs) break;
    VecX beta = initial_betas(sys, dim, nb);
    refine_betas(sys, beta);
    if (!beta.allFinite()) continue;

    VecX ccam = VecX::Zero(3 * m);
    for (int b = 0; b < nb; ++b) ccam += beta(b) * kernel[b];
    std::vector<Vec3> model(n), cam(n);
    double mean_z = 0.0;
    for (int i = 0; i < n; ++i) {
      model[i] = corr[i].model;
      cam[i] = Vec3::Zero();
      for (int j = 0; j < m; ++j) cam[i] += alphas(i, j) * ccam.segment<3>(3 * j);
      mean_z += cam[i].z();
    }
    if (mean_z < 0.0)
      for (auto& p : cam) p = -p;
    Pose pose;
    try {
      pose = align(model, cam);
    } catch (const DegenerateError&) {
      continue;
    }
    const double rms = reprojection_rms(pose, corr, k);
    if (!std::isfinite(rms) || !pose.position.allFinite()) continue;
    any = true;
    if (rms < best.reprojection_rms) best = {pose, rms};
  }
  if (!any) throw DegenerateError("epnp_solve: no finite candidate solution");
  return best;
}

}  // namespace vil::pose
