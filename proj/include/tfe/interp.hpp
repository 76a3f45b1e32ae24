// Copyright 2026 The TfeNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "tfe/volume.hpp"

namespace tfe {

/// Fractional lattice coordinate in (z, y, x) order.
template <typename T>
struct Point3 {
  T z{};
  T y{};
  T x{};
};

namespace detail {

template <typename T>
struct AxisCell {
  int lo = 0;
  int hi = 0;
  T frac{};
  bool clamped = false;
};

/// Clamps `c` into [0, n-1] and splits it into lattice cell and fraction.
/// NaN clamps to 0.
template <typename T>
inline AxisCell<T> axis_cell(T c, int n) {
  AxisCell<T> cell;
  const T top = static_cast<T>(n - 1);
  if (!(c >= T(0))) {
    c = T(0);
    cell.clamped = true;
  } else if (c > top) {
    c = top;
    cell.clamped = true;
  }
  const T fl = std::floor(c);
  cell.lo = static_cast<int>(fl);
  cell.hi = cell.lo + 1 < n ? cell.lo + 1 : n - 1;
  cell.frac = c - fl;
  return cell;
}

}  // namespace detail

/// The eight interpolation corners of one fractional point, shared by every
/// channel of a volume. Corner j uses bit 2 for z, bit 1 for y, bit 0 for x.
template <typename T>
struct TrilinearStencil {
  std::array<std::uint32_t, 8> offset{};
  std::array<T, 8> weight{};
  T fz{}, fy{}, fx{};
  bool clamp_z = false, clamp_y = false, clamp_x = false;

  TrilinearStencil() = default;
  TrilinearStencil(const Shape3& s, const Point3<T>& p) {
    const auto cz = detail::axis_cell(p.z, s.d);
    const auto cy = detail::axis_cell(p.y, s.h);
    const auto cx = detail::axis_cell(p.x, s.w);
    fz = cz.frac;
    fy = cy.frac;
    fx = cx.frac;
    clamp_z = cz.clamped;
    clamp_y = cy.clamped;
    clamp_x = cx.clamped;
    const int zs[2] = {cz.lo, cz.hi};
    const int ys[2] = {cy.lo, cy.hi};
    const int xs[2] = {cx.lo, cx.hi};
    const T wz[2] = {T(1) - fz, fz};
    const T wy[2] = {T(1) - fy, fy};
    const T wx[2] = {T(1) - fx, fx};
    for (int j = 0; j < 8; ++j) {
      const int bz = (j >> 2) & 1, by = (j >> 1) & 1, bx = j & 1;
      offset[j] = static_cast<std::uint32_t>(s.index(zs[bz], ys[by], xs[bx]));
      weight[j] = wz[bz] * wy[by] * wx[bx];
    }
  }

  T sample(const T* chan) const {
    T acc{};
    for (int j = 0; j < 8; ++j) acc += weight[j] * chan[offset[j]];
    return acc;
  }

  /// Partial derivatives of sample() with respect to (z, y, x); zero along
  /// any axis whose coordinate was clamped.
  Point3<T> coord_grad(const T* chan) const {
    T v[8];
    for (int j = 0; j < 8; ++j) v[j] = chan[offset[j]];
    const T gy0 = T(1) - fy, gy1 = fy, gx0 = T(1) - fx, gx1 = fx, gz0 = T(1) - fz, gz1 = fz;
    Point3<T> g;
    g.z = clamp_z ? T(0)
                  : gy0 * gx0 * (v[4] - v[0]) + gy0 * gx1 * (v[5] - v[1]) + gy1 * gx0 * (v[6] - v[2]) +
                        gy1 * gx1 * (v[7] - v[3]);
    g.y = clamp_y ? T(0)
                  : gz0 * gx0 * (v[2] - v[0]) + gz0 * gx1 * (v[3] - v[1]) + gz1 * gx0 * (v[6] - v[4]) +
                        gz1 * gx1 * (v[7] - v[5]);
    g.x = clamp_x ? T(0)
                  : gz0 * gy0 * (v[1] - v[0]) + gz0 * gy1 * (v[3] - v[2]) + gz1 * gy0 * (v[5] - v[4]) +
                        gz1 * gy1 * (v[7] - v[6]);
    return g;
  }
};

/// Interpolated value of `channel` at `p`, clamping out-of-range coordinates.
template <typename T>
T trilinear_sample(const Tensor<T>& vol, const Point3<T>& p, int channel) {
  if (channel < 0 || channel >= vol.channels()) throw std::invalid_argument("trilinear_sample: invalid channel index");
  const TrilinearStencil<T> st(vol.shape(), p);
  return st.sample(vol.channel(channel).data());
}

template <typename T>
struct SampleGrad {
  /// Flat indices into the tensor (channel offset included); duplicates occur
  /// when a clamped cell collapses.
  std::array<std::size_t, 8> index{};
  std::array<T, 8> data_grad{};
  Point3<T> point_grad{};
};

template <typename T>
SampleGrad<T> trilinear_sample_grad(const Tensor<T>& vol, const Point3<T>& p, int channel, T upstream) {
  if (channel < 0 || channel >= vol.channels()) {
    throw std::invalid_argument("trilinear_sample_grad: invalid channel index");
  }
  const TrilinearStencil<T> st(vol.shape(), p);
  const std::size_t base = static_cast<std::size_t>(channel) * vol.voxels();
  SampleGrad<T> g;
  for (int j = 0; j < 8; ++j) {
    g.index[j] = base + st.offset[j];
    g.data_grad[j] = st.weight[j] * upstream;
  }
  const auto cg = st.coord_grad(vol.channel(channel).data());
  g.point_grad = {cg.z * upstream, cg.y * upstream, cg.x * upstream};
  return g;
}

}  // namespace tfe
