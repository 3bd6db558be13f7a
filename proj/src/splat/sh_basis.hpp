// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "vil/splat.hpp"

namespace vil::splat {

// Real SH basis with the sign convention of the reference 3DGS rasterizer.
template <typename T>
inline void sh_basis(T x, T y, T z, std::array<T, kShCoeffs>& b) {
  constexpr T c1 = T(kShC1);
  constexpr T c2[5] = {T(1.0925484305920792), T(-1.0925484305920792), T(0.31539156525252005),
                       T(-1.0925484305920792), T(0.5462742152960396)};
  constexpr T c3[7] = {T(-0.5900435899266435), T(2.890611442640554), T(-0.4570457994644658), T(0.3731763325901154),
                       T(-0.4570457994644658), T(1.445305721320277), T(-0.5900435899266435)};
  const T xx = x * x, yy = y * y, zz = z * z;
  const T xy = x * y, yz = y * z, xz = x * z;
  b[0] = T(kShC0);
  b[1] = -c1 * y;
  b[2] = c1 * z;
  b[3] = -c1 * x;
  b[4] = c2[0] * xy;
  b[5] = c2[1] * yz;
  b[6] = c2[2] * (T(2) * zz - xx - yy);
  b[7] = c2[3] * xz;
  b[8] = c2[4] * (xx - yy);
  b[9] = c3[0] * y * (T(3) * xx - yy);
  b[10] = c3[1] * xy * z;
  b[11] = c3[2] * y * (T(4) * zz - xx - yy);
  b[12] = c3[3] * z * (T(2) * zz - T(3) * xx - T(3) * yy);
  b[13] = c3[4] * x * (T(4) * zz - xx - yy);
  b[14] = c3[5] * z * (xx - yy);
  b[15] = c3[6] * x * (xx - T(3) * yy);
}

}  // namespace vil::splat
