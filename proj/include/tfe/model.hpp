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

#include <memory>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "tfe/layers.hpp"

namespace tfe {

/// Encoder/decoder building block with hand-wired backward.
template <typename T>
class Block {
 public:
  virtual ~Block() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
};

/// Tubular feature fusion: x/y/z direction-aware branches and a dense 3x3x3
/// branch are concatenated, fused by a 3x3x3 conv and added to a 1x1x1
/// projection of the input. Every conv is followed by IN + ReLU.
template <typename T>
class TffmBlock final : public Block<T> {
 public:
  TffmBlock(ParamStore<T>& store, const std::string& name, int in_ch, int width, int k, double q, double head_lr_mult,
            Rng& rng, bool straight = false);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  DAConvLayer<T>& branch(Axis a) { return dir_[static_cast<int>(a)].conv; }

 private:
  struct DirBranch {
    DAConvLayer<T> conv;
    InstanceNormLayer<T> norm;
    Tensor<T> out;
  };
  int width_;
  DirBranch dir_[3];
  ConvNormRelu<T> dense_;
  ConvNormRelu<T> fuse_;
  ConvNormRelu<T> residual_;
};

/// Two stacked 3x3x3 convs plus a 1x1x1 residual projection.
template <typename T>
class ResConvBlock final : public Block<T> {
 public:
  ResConvBlock(ParamStore<T>& store, const std::string& name, int in_ch, int width, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  ConvNormRelu<T> first_;
  ConvNormRelu<T> second_;
  ConvNormRelu<T> residual_;
};

struct TfeNetConfig {
  int levels = 4;
  std::vector<int> widths{8, 16, 32, 64};
  int k = 7;
  double q = std::numbers::pi / 4;
  int in_channels = 1;
  /// Learning-rate multiplier of angle heads in the encoder and bottleneck.
  double encoder_head_lr_mult = 0.1;
  /// Auxiliary full-resolution outputs from the coarser decoder levels.
  int aux_heads = 0;
  /// Replace every DAConv by its axis-aligned linear convolution.
  bool straight = false;
  std::uint64_t init_seed = 1;

  void validate() const;
  /// Spatial extents must be multiples of this.
  int required_multiple() const { return 1 << (levels - 1); }
};

nlohmann::json to_json(const TfeNetConfig& c);
TfeNetConfig tfenet_config_from_json(const nlohmann::json& j);

/// Encoder-decoder with TFFM blocks, skip connections by concatenation,
/// max-pool downsampling, trilinear-upsample + conv upsampling, a ResConv
/// block at the full-resolution decoder level and a sigmoid output.
template <typename T>
class TfeNet {
 public:
  explicit TfeNet(const TfeNetConfig& config);
  TfeNet(const TfeNet&) = delete;
  TfeNet& operator=(const TfeNet&) = delete;
  TfeNet(TfeNet&&) = default;
  TfeNet& operator=(TfeNet&&) = default;

  /// Single-channel probability map with the input's spatial shape.
  Tensor<T> forward(const Tensor<T>& x);
  /// Auxiliary probability maps from the last forward call (empty unless
  /// aux_heads > 0).
  const std::vector<Tensor<T>>& aux_outputs() const { return aux_out_; }

  /// Backpropagates dL/dprob (and optional per-aux-head gradients) into the
  /// parameter store.
  void backward(const Tensor<T>& grad_prob, const std::vector<Tensor<T>>& grad_aux = {});

  ParamStore<T>& params() { return *store_; }
  const ParamStore<T>& params() const { return *store_; }
  const TfeNetConfig& config() const { return config_; }

  /// Every DAConv layer, encoder first.
  std::vector<DAConvLayer<T>*> daconv_layers();

 private:
  struct UpPath {
    ConvNormRelu<T> conv;
    Shape3 in_shape;
  };
  struct AuxHead {
    Conv3dLayer<T> conv;
    int level;
    std::vector<Shape3> shapes;
    Tensor<T> out;
  };

  TfeNetConfig config_;
  std::unique_ptr<ParamStore<T>> store_;
  std::vector<std::unique_ptr<Block<T>>> encoder_;  // last entry is the bottleneck
  std::vector<std::unique_ptr<Block<T>>> decoder_;  // decoder_[i] runs at level i
  std::vector<UpPath> up_;                          // up_[i] lifts level i+1 to level i
  std::vector<AuxHead> aux_;
  Conv3dLayer<T> head_;

  std::vector<Shape3> level_shapes_;
  std::vector<std::vector<std::uint32_t>> pool_argmax_;
  std::vector<TffmBlock<T>*> tffm_;
  Tensor<T> prob_;
  std::vector<Tensor<T>> aux_out_;
};

}  // namespace tfe
