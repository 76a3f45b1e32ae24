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


#include "tfe/components.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <stdexcept>

namespace tfe {
namespace {

struct Offset3 {
  int dz, dy, dx;
};

std::vector<Offset3> neighbourhood(int connectivity) {
  std::vector<Offset3> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan != 1) continue;
        out.push_back({dz, dy, dx});
      }
  return out;
}

// Breadth-first flood over voxels where `inside(i)` holds, starting at seed.
template <typename Pred, typename Visit>
void flood(const Shape3& s, std::size_t seed, const std::vector<Offset3>& nb, std::vector<std::size_t>& queue,
           Pred inside, Visit visit) {
  queue.clear();
  queue.push_back(seed);
  visit(seed);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t i = queue[head];
    const int x = static_cast<int>(i % s.w);
    const int y = static_cast<int>((i / s.w) % s.h);
    const int z = static_cast<int>(i / (static_cast<std::size_t>(s.w) * s.h));
    for (const auto& o : nb) {
      const int nz = z + o.dz, ny = y + o.dy, nx = x + o.dx;
      if (!s.contains(nz, ny, nx)) continue;
      const std::size_t j = s.index(nz, ny, nx);
      if (!inside(j)) continue;
      visit(j);
      queue.push_back(j);
    }
  }
}

}  // namespace

std::vector<std::size_t> Components::sorted_sizes() const {
  auto s = sizes;
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

std::int32_t Components::largest() const {
  if (sizes.empty()) return 0;
  return static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin()) + 1;
}

Components connected_components(const Mask& mask, int connectivity) {
  if (connectivity != 6 && connectivity != 26) throw std::invalid_argument("connectivity must be 6 or 26");
  Components cc;
  cc.shape = mask.shape;
  cc.labels.assign(mask.data.size(), 0);
  const auto nb = neighbourhood(connectivity);
  std::vector<std::size_t> queue;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (!mask.data[i] || cc.labels[i] != 0) continue;
    const auto id = static_cast<std::int32_t>(cc.sizes.size() + 1);
    std::size_t size = 0;
    flood(
        mask.shape, i, nb, queue, [&](std::size_t j) { return mask.data[j] && cc.labels[j] == 0; },
        [&](std::size_t j) {
          cc.labels[j] = id;
          ++size;
        });
    cc.sizes.push_back(size);
  }
  return cc;
}

Mask fill_holes(const Mask& mask) {
  const Shape3& s = mask.shape;
  std::vector<std::uint8_t> outside(mask.data.size(), 0);
  const auto nb = neighbourhood(6);
  std::vector<std::size_t> queue;
  auto seed = [&](int z, int y, int x) {
    const std::size_t i = s.index(z, y, x);
    if (mask.data[i] || outside[i]) return;
    flood(
        s, i, nb, queue, [&](std::size_t j) { return !mask.data[j] && !outside[j]; },
        [&](std::size_t j) { outside[j] = 1; });
  };
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const bool border = z == 0 || y == 0 || x == 0 || z == s.d - 1 || y == s.h - 1 || x == s.w - 1;
        if (border) seed(z, y, x);
      }
  Mask out = mask;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = outside[i] ? 0 : 1;
  return out;
}

Mask largest_component(const Mask& mask) {
  const auto cc = connected_components(mask, 26);
  Mask out(mask.shape, mask.spacing);
  const auto keep = cc.largest();
  if (keep == 0) return out;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = cc.labels[i] == keep ? 1 : 0;
  return out;
}

}  // namespace tfe
