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


#include "tfe/geometry.hpp"

#include <stdexcept>

namespace tfe {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

Axis parse_axis(const std::string& s) {
  if (s == "x" || s == "X") return Axis::X;
  if (s == "y" || s == "Y") return Axis::Y;
  if (s == "z" || s == "Z") return Axis::Z;
  throw std::invalid_argument("unknown axis '" + s + "'");
}

void KernelSpec::validate() const {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("kernel tap count must be odd and positive");
  if (dilation < 1) throw std::invalid_argument("dilation must be >= 1");
  if (!(q > 0.0 && q <= std::numbers::pi)) throw std::invalid_argument("q must lie in (0, pi]");
}

Mat3 rotation_matrix(Axis about, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  switch (about) {
    case Axis::X: return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
    case Axis::Y: return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    case Axis::Z: return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  }
  throw std::invalid_argument("bad axis");
}

std::vector<std::array<int, 3>> base_taps(const KernelSpec& spec) {
  spec.validate();
  std::vector<std::array<int, 3>> taps;
  taps.reserve(spec.k);
  for (int c = -spec.half(); c <= spec.half(); ++c) {
    const int s = c * spec.dilation;
    switch (spec.axis) {
      case Axis::X: taps.push_back({0, 0, s}); break;
      case Axis::Y: taps.push_back({0, s, 0}); break;
      case Axis::Z: taps.push_back({s, 0, 0}); break;
    }
  }
  return taps;
}

std::vector<Point3<double>> rotated_offsets(const KernelSpec& spec, const Angles& angles) {
  spec.validate();
  for (double t : angles) {
    if (!(std::abs(t) <= spec.q)) throw std::invalid_argument("rotation angle exceeds the kernel bound q");
  }
  std::vector<Point3<double>> out;
  out.reserve(spec.k);
  for (int c = -spec.half(); c <= spec.half(); ++c) {
    const double s = static_cast<double>(c * spec.dilation);
    if (c < 0) {
      out.push_back(arm_offset(spec.axis, s, angles[0], angles[1]));
    } else if (c > 0) {
      out.push_back(arm_offset(spec.axis, s, angles[2], angles[3]));
    } else {
      out.push_back({0.0, 0.0, 0.0});
    }
  }
  return out;
}

std::vector<Point3<double>> sampling_positions(const Point3<double>& center, const KernelSpec& spec,
                                               const Angles& angles) {
  auto pts = rotated_offsets(spec, angles);
  for (auto& p : pts) {
    p.z += center.z;
    p.y += center.y;
    p.x += center.x;
  }
  return pts;
}

}  // namespace tfe
