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

#include <span>
#include <vector>

#include "tfe/geometry.hpp"
#include "tfe/interp.hpp"
#include "tfe/volume.hpp"

namespace tfe::kernels {

/// Per-voxel rotated linear convolution.
///
/// `angles` is a 4-channel field on the input grid; at every voxel the kernel
/// arms are rotated by that voxel's angles (channels 0-1 negative arm, 2-3
/// positive arm), the input is sampled trilinearly (clamped) at each tap, and
/// the samples are contracted with weights laid out [out][in][tap]. The
/// output grid equals the input grid.
///
/// backward: grad_in and grad_angles are overwritten when non-null; grad_w
/// and grad_b are accumulated.

/// Cached sampling state from the last parallel forward call; reused by the
/// matching backward call when shapes agree.
template <typename T>
struct DaconvWorkspace {
  Shape3 shape{};
  int in_channels = 0;
  int taps = 0;
  std::vector<TrilinearStencil<T>> stencils;  ///< [tap][voxel]
  std::vector<T> samples;                     ///< [tap][in][voxel]

  bool matches(const Shape3& s, int cin, int k) const {
    return shape == s && in_channels == cin && taps == k && !samples.empty();
  }
};

void check_daconv_args(const Shape3& in_shape, int in_channels, const Shape3& angle_shape, int angle_channels,
                       std::size_t weight_size, std::size_t bias_size, int out_channels, const KernelSpec& spec);

namespace serial {

template <typename T>
Tensor<T> daconv_forward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, std::span<const T> b,
                         int out_channels, const KernelSpec& spec);

template <typename T>
void daconv_backward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, int out_channels,
                     const KernelSpec& spec, const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_angles,
                     std::span<T> grad_w, std::span<T> grad_b);

}  // namespace serial

namespace parallel {

template <typename T>
Tensor<T> daconv_forward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, std::span<const T> b,
                         int out_channels, const KernelSpec& spec, DaconvWorkspace<T>* ws = nullptr);

template <typename T>
void daconv_backward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, int out_channels,
                     const KernelSpec& spec, const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_angles,
                     std::span<T> grad_w, std::span<T> grad_b, DaconvWorkspace<T>* ws = nullptr);

}  // namespace parallel

}  // namespace tfe::kernels
