// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "vil/error.hpp"
#include "vil/splat.hpp"
#include "sh_basis.hpp"

namespace vil::splat {

Vec3 evaluate_sh(const ShCoeffs& sh, const Vec3& view_dir) {
  if (!(std::abs(view_dir.norm() - 1.0) <= 1e-6)) throw InvalidArgument("evaluate_sh: view direction must be unit length");
  std::array<double, kShCoeffs> basis;
  sh_basis(view_dir.x(), view_dir.y(), view_dir.z(), basis);
  Vec3 c = Vec3::Constant(0.5);
  for (int k = 0; k < kShCoeffs; ++k) c += basis[k] * sh[k];
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace vil::splat
