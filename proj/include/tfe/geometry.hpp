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
#include <numbers>
#include <string>
#include <vector>

#include "tfe/interp.hpp"

namespace tfe {

/// Base direction of a linear kernel. X is the fastest-varying volume axis.
enum class Axis { X = 0, Y = 1, Z = 2 };

const char* axis_name(Axis a);
Axis parse_axis(const std::string& s);

/// Shape of one direction-aware linear kernel.
struct KernelSpec {
  Axis axis = Axis::X;
  int k = 7;          ///< tap count, odd
  int dilation = 1;   ///< spacing between taps along the base axis
  double q = std::numbers::pi / 4;  ///< largest admissible |angle|

  int half() const { return (k - 1) / 2; }
  /// Throws std::invalid_argument unless k is odd and positive, dilation >= 1
  /// and q lies in (0, pi].
  void validate() const;
};

/// Rotation angles of the two kernel arms: [0], [1] drive the negative arm,
/// [2], [3] the positive arm.
using Angles = std::array<double, 4>;

/// Row-major 3x3 matrix acting on (x, y, z) column vectors.
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Right-handed rotation about `about` by `theta` radians.
Mat3 rotation_matrix(Axis about, double theta);

/// Unrotated tap offsets in (z, y, x) lattice units, negative side first.
std::vector<std::array<int, 3>> base_taps(const KernelSpec& spec);

/// Tap offsets after rotating each arm; center tap stays at the origin.
/// Throws std::invalid_argument if any |angle| exceeds spec.q.
std::vector<Point3<double>> rotated_offsets(const KernelSpec& spec, const Angles& angles);

/// Absolute sampling positions of the kernel anchored at `center`.
std::vector<Point3<double>> sampling_positions(const Point3<double>& center, const KernelSpec& spec,
                                               const Angles& angles);

/// Offset of a tap at signed distance `s` (in lattice units, dilation already
/// applied) whose arm is rotated by (`a`, `b`): first about the axis listed
/// first for `axis`, then the second. Optionally returns d/da and d/db.
///
///   X: a about y, then b about z    Y: a about x, then b about z
///   Z: a about x, then b about y
template <typename T>
inline Point3<T> arm_offset(Axis axis, T s, T a, T b, Point3<T>* d_a = nullptr, Point3<T>* d_b = nullptr) {
  const T ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
  // (dx, dy, dz) in the rotation frame, mapped to Point3's (z, y, x).
  switch (axis) {
    case Axis::X:
      if (d_a) *d_a = {-s * ca, -s * sa * sb, -s * sa * cb};
      if (d_b) *d_b = {T(0), s * ca * cb, -s * ca * sb};
      return {-s * sa, s * ca * sb, s * ca * cb};
    case Axis::Y:
      if (d_a) *d_a = {s * ca, -s * sa * cb, s * sa * sb};
      if (d_b) *d_b = {T(0), -s * ca * sb, -s * ca * cb};
      return {s * sa, s * ca * cb, -s * ca * sb};
    case Axis::Z:
    default:
      if (d_a) *d_a = {-s * sa * cb, -s * ca, -s * sa * sb};
      if (d_b) *d_b = {-s * ca * sb, T(0), s * ca * cb};
      return {s * ca * cb, -s * sa, s * ca * sb};
  }
}

}  // namespace tfe
