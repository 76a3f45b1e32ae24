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

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tfe/volume.hpp"

namespace tfe::testing {

template <typename T>
Tensor<T> random_tensor(int c, Shape3 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(c, s);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

inline Mask random_mask(Shape3 s, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Mask m(s);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tfe_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Filled axis-aligned box [lo, hi).
inline Mask box(Shape3 s, std::array<int, 3> lo, std::array<int, 3> hi) {
  Mask m(s);
  for (int z = lo[0]; z < hi[0]; ++z)
    for (int y = lo[1]; y < hi[1]; ++y)
      for (int x = lo[2]; x < hi[2]; ++x) m.at(z, y, x) = 1;
  return m;
}

/// Clamped trilinear sample written as an explicit eight-term sum.
inline double lerp_sample(const Tensor<double>& v, int c, double z, double y, double x) {
  const Shape3 s = v.shape();
  auto cl = [](double a, int n) { return std::min(std::max(a, 0.0), double(n - 1)); };
  z = cl(z, s.d), y = cl(y, s.h), x = cl(x, s.w);
  const int z0 = int(std::floor(z)), y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const int z1 = std::min(z0 + 1, s.d - 1), y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
  const double fz = z - z0, fy = y - y0, fx = x - x0;
  return (1 - fz) * (1 - fy) * (1 - fx) * v(c, z0, y0, x0) + (1 - fz) * (1 - fy) * fx * v(c, z0, y0, x1) +
         (1 - fz) * fy * (1 - fx) * v(c, z0, y1, x0) + (1 - fz) * fy * fx * v(c, z0, y1, x1) +
         fz * (1 - fy) * (1 - fx) * v(c, z1, y0, x0) + fz * (1 - fy) * fx * v(c, z1, y0, x1) +
         fz * fy * (1 - fx) * v(c, z1, y1, x0) + fz * fy * fx * v(c, z1, y1, x1);
}

}  // namespace tfe::testing
