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
#include <span>

#include "tfe/volume.hpp"

namespace tfe::kernels {

enum class Padding { Zero, Replicate };

/// Dense 3D cross-correlation geometry. Weights are laid out
/// [out][in][kz][ky][kx].
struct ConvParams {
  std::array<int, 3> kernel{3, 3, 3};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{1, 1, 1};
  Padding padding = Padding::Zero;

  static ConvParams cube(int k) { return {{k, k, k}, {1, 1, 1}, {(k - 1) / 2, (k - 1) / 2, (k - 1) / 2}, Padding::Zero}; }
  int taps() const { return kernel[0] * kernel[1] * kernel[2]; }
};

Shape3 conv_output_shape(const Shape3& in, const ConvParams& p);

/// Throws std::invalid_argument when weight/bias sizes disagree with the
/// channel counts or the output would be empty.
void check_conv_args(int in_channels, int out_channels, std::size_t weight_size, std::size_t bias_size,
                     const Shape3& in, const ConvParams& p);

// Both namespaces expose the same contract:
//   forward:  out = conv(in, w) + b
//   backward: grad_in is overwritten; grad_w and grad_b are accumulated (+=).
// grad_in may be null when the input gradient is not needed.

namespace serial {

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int out_channels,
                         const ConvParams& p);

template <typename T>
void conv3d_backward(const Tensor<T>& in, std::span<const T> w, int out_channels, const ConvParams& p,
                     const Tensor<T>& grad_out, Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b);

}  // namespace serial

namespace parallel {

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int out_channels,
                         const ConvParams& p);

template <typename T>
void conv3d_backward(const Tensor<T>& in, std::span<const T> w, int out_channels, const ConvParams& p,
                     const Tensor<T>& grad_out, Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b);

}  // namespace parallel

}  // namespace tfe::kernels
