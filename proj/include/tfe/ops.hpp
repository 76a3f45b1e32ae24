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
#include <span>
#include <vector>

#include "tfe/volume.hpp"

namespace tfe::ops {

inline constexpr double kNormEpsilon = 1e-5;

/// Cached per-channel statistics of an instance-norm forward pass.
template <typename T>
struct NormCache {
  Tensor<T> normalized;     ///< (x - mean) / sqrt(var + eps)
  std::vector<T> inv_std;   ///< one per channel
};

/// Per-channel zero-mean unit-variance normalisation followed by an affine map.
template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& x, std::span<const T> scale, std::span<const T> shift,
                                NormCache<T>* cache = nullptr);

/// Returns dL/dx; accumulates dL/dscale and dL/dshift.
template <typename T>
Tensor<T> instance_norm_backward(const NormCache<T>& cache, std::span<const T> scale, const Tensor<T>& grad_out,
                                 std::span<T> grad_scale, std::span<T> grad_shift);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// Gradient gated on the forward output (y > 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// 2x2x2 max pooling; `argmax` receives the winning input voxel (flat index
/// within its channel), first in scan order on ties. Throws on odd extents.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint32_t>* argmax = nullptr);
template <typename T>
Tensor<T> maxpool2_backward(const Shape3& in_shape, const std::vector<std::uint32_t>& argmax,
                            const Tensor<T>& grad_out);

/// 2x trilinear upsampling with half-voxel alignment and edge clamping.
template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2_backward(const Shape3& in_shape, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>* const> parts);
/// Splits a channel-concatenated gradient back into per-part gradients.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& grad, std::span<const int> channels);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

}  // namespace tfe::ops
