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

#include "tfe/volume.hpp"

#include <numeric>

namespace tfe {

std::string to_string(const Shape3& s) {
  return std::to_string(s.d) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Mask threshold(const Tensor<float>& prob, float threshold) {
  Mask m(prob.shape());
  const auto c0 = prob.channel(0);
  for (std::size_t i = 0; i < c0.size(); ++i) m.data[i] = c0[i] > threshold ? 1 : 0;
  return m;
}

Tensor<float> to_tensor(const Mask& mask) {
  Tensor<float> t(1, mask.shape);
  for (std::size_t i = 0; i < mask.data.size(); ++i) t[i] = mask.data[i] ? 1.0f : 0.0f;
  return t;
}

}  // namespace tfe
