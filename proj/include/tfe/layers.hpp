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

#include <random>
#include <string>

#include "tfe/geometry.hpp"
#include "tfe/kernels/conv3d.hpp"
#include "tfe/kernels/daconv.hpp"
#include "tfe/ops.hpp"
#include "tfe/params.hpp"

namespace tfe {

enum class KernelBackend { Parallel, Serial };

/// Process-wide choice of kernel implementation used by the layers.
void set_kernel_backend(KernelBackend b);
KernelBackend kernel_backend();

using Rng = std::mt19937_64;

/// He-normal initialisation of a parameter with the given fan-in.
template <typename T>
void he_init(Param<T>& p, int fan_in, Rng& rng);

// Layers own pointers into a ParamStore and cache whatever their backward
// pass needs from the most recent forward call. backward() accumulates
// parameter gradients into the store and returns the input gradient.

template <typename T>
class Conv3dLayer {
 public:
  Conv3dLayer() = default;
  Conv3dLayer(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, kernels::ConvParams params,
              Rng& rng, bool zero_init = false, double lr_mult = 1.0);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true);

  int out_channels() const { return out_ch_; }
  Param<T>& weight() { return *w_; }
  Param<T>& bias() { return *b_; }
  const kernels::ConvParams& params() const { return params_; }

 private:
  int in_ch_ = 0, out_ch_ = 0;
  kernels::ConvParams params_;
  Param<T>* w_ = nullptr;
  Param<T>* b_ = nullptr;
  Tensor<T> input_;
};

template <typename T>
class InstanceNormLayer {
 public:
  InstanceNormLayer() = default;
  InstanceNormLayer(ParamStore<T>& store, const std::string& name, int channels, double lr_mult = 1.0);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

  Param<T>& scale() { return *scale_; }
  Param<T>& shift() { return *shift_; }

 private:
  Param<T>* scale_ = nullptr;
  Param<T>* shift_ = nullptr;
  ops::NormCache<T> cache_;
};

/// conv -> instance norm -> ReLU.
template <typename T>
class ConvNormRelu {
 public:
  ConvNormRelu() = default;
  ConvNormRelu(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int k, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Conv3dLayer<T> conv_;
  InstanceNormLayer<T> norm_;
  Tensor<T> out_;
};

/// Per-voxel rotation angles: q * tanh(IN(conv3x3x3(x))), four channels.
/// Conv weights and bias start at exactly zero.
template <typename T>
class AngleHead {
 public:
  AngleHead() = default;
  AngleHead(ParamStore<T>& store, const std::string& name, int in_ch, double q, double lr_mult, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_angles);

  double q() const { return q_; }
  Conv3dLayer<T>& conv() { return conv_; }

 private:
  double q_ = 0;
  Conv3dLayer<T> conv_;
  InstanceNormLayer<T> norm_;
  Tensor<T> tanh_out_;
};

/// Direction-aware linear convolution with its own angle head.
///
/// In `straight` mode the layer ignores the head and runs the equivalent
/// axis-aligned k-tap convolution with replicate padding, sharing weights.
template <typename T>
class DAConvLayer {
 public:
  DAConvLayer() = default;
  DAConvLayer(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, KernelSpec spec,
              double head_lr_mult, Rng& rng, bool straight = false);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

  const KernelSpec& spec() const { return spec_; }
  const Tensor<T>& last_angles() const { return angles_; }
  AngleHead<T>& head() { return head_; }

 private:
  kernels::ConvParams straight_params() const;

  int in_ch_ = 0, out_ch_ = 0;
  KernelSpec spec_;
  bool straight_ = false;
  AngleHead<T> head_;
  Param<T>* w_ = nullptr;
  Param<T>* b_ = nullptr;
  Tensor<T> input_;
  Tensor<T> angles_;
  kernels::DaconvWorkspace<T> work_;
};

}  // namespace tfe
