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

#include <cstdint>
#include <vector>

#include "tfe/volume.hpp"

namespace tfe {

struct Components {
  Shape3 shape{};
  /// 0 for background, otherwise a component id in [1, count()].
  std::vector<std::int32_t> labels;
  /// sizes[id - 1] is the voxel count of component `id`.
  std::vector<std::size_t> sizes;

  std::size_t count() const { return sizes.size(); }
  /// Component sizes, largest first.
  std::vector<std::size_t> sorted_sizes() const;
  /// Id of the largest component (lowest id on ties); 0 when empty.
  std::int32_t largest() const;
};

/// Labels foreground components under 6- or 26-adjacency. Ids are assigned in
/// raster order of each component's first voxel.
Components connected_components(const Mask& mask, int connectivity = 26);

/// Sets every background voxel that cannot reach the volume border through
/// 6-connected background to foreground.
Mask fill_holes(const Mask& mask);

/// Keeps only the largest 26-connected component.
Mask largest_component(const Mask& mask);

}  // namespace tfe
