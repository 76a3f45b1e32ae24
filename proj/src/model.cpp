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


#include "tfe/model.hpp"

#include <stdexcept>
#include <string>

namespace tfe {

// ---- TffmBlock --------------------------------------------------------------

template <typename T>
TffmBlock<T>::TffmBlock(ParamStore<T>& store, const std::string& name, int in_ch, int width, int k, double q,
                        double head_lr_mult, Rng& rng, bool straight)
    : width_(width) {
  const char* tags[3] = {"dax", "day", "daz"};
  for (int a = 0; a < 3; ++a) {
    KernelSpec spec{static_cast<Axis>(a), k, 1, q};
    const std::string n = name + "." + tags[a];
    dir_[a].conv = DAConvLayer<T>(store, n, in_ch, width, spec, head_lr_mult, rng, straight);
    dir_[a].norm = InstanceNormLayer<T>(store, n + ".norm", width);
  }
  dense_ = ConvNormRelu<T>(store, name + ".dense", in_ch, width, 3, rng);
  fuse_ = ConvNormRelu<T>(store, name + ".fuse", 4 * width, width, 3, rng);
  residual_ = ConvNormRelu<T>(store, name + ".res", in_ch, width, 1, rng);
}

template <typename T>
Tensor<T> TffmBlock<T>::forward(const Tensor<T>& x) {
  for (auto& b : dir_) b.out = ops::relu_forward(b.norm.forward(b.conv.forward(x)));
  const Tensor<T> dense = dense_.forward(x);
  const Tensor<T>* parts[4] = {&dir_[0].out, &dir_[1].out, &dir_[2].out, &dense};
  Tensor<T> y = fuse_.forward(ops::concat<T>(parts));
  ops::add_inplace(y, residual_.forward(x));
  return y;
}

template <typename T>
Tensor<T> TffmBlock<T>::backward(const Tensor<T>& grad_out) {
  const int chans[4] = {width_, width_, width_, width_};
  auto parts = ops::split<T>(fuse_.backward(grad_out), chans);
  Tensor<T> gx = residual_.backward(grad_out);
  ops::add_inplace(gx, dense_.backward(parts[3]));
  for (int a = 0; a < 3; ++a) {
    auto& b = dir_[a];
    ops::add_inplace(gx, b.conv.backward(b.norm.backward(ops::relu_backward(b.out, parts[a]))));
  }
  return gx;
}

// ---- ResConvBlock -----------------------------------------------------------

template <typename T>
ResConvBlock<T>::ResConvBlock(ParamStore<T>& store, const std::string& name, int in_ch, int width, Rng& rng)
    : first_(store, name + ".conv1", in_ch, width, 3, rng),
      second_(store, name + ".conv2", width, width, 3, rng),
      residual_(store, name + ".res", in_ch, width, 1, rng) {}

template <typename T>
Tensor<T> ResConvBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> y = second_.forward(first_.forward(x));
  ops::add_inplace(y, residual_.forward(x));
  return y;
}

template <typename T>
Tensor<T> ResConvBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> gx = first_.backward(second_.backward(grad_out));
  ops::add_inplace(gx, residual_.backward(grad_out));
  return gx;
}

// ---- config -----------------------------------------------------------------

void TfeNetConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("TfeNet needs at least 2 levels");
  if (static_cast<int>(widths.size()) != levels) throw std::invalid_argument("widths length must equal levels");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("widths must be positive");
  }
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("DAConv tap count must be odd");
  if (aux_heads < 0 || aux_heads > levels - 2) throw std::invalid_argument("aux_heads must lie in [0, levels-2]");
  KernelSpec{Axis::X, k, 1, q}.validate();
}

nlohmann::json to_json(const TfeNetConfig& c) {
  return {{"levels", c.levels},
          {"widths", c.widths},
          {"k", c.k},
          {"q", c.q},
          {"in_channels", c.in_channels},
          {"encoder_head_lr_mult", c.encoder_head_lr_mult},
          {"aux_heads", c.aux_heads},
          {"straight", c.straight},
          {"init_seed", c.init_seed}};
}

TfeNetConfig tfenet_config_from_json(const nlohmann::json& j) {
  TfeNetConfig c;
  c.levels = j.value("levels", c.levels);
  c.widths = j.value("widths", c.widths);
  c.k = j.value("k", c.k);
  c.q = j.value("q", c.q);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.encoder_head_lr_mult = j.value("encoder_head_lr_mult", c.encoder_head_lr_mult);
  c.aux_heads = j.value("aux_heads", c.aux_heads);
  c.straight = j.value("straight", c.straight);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

// ---- TfeNet -----------------------------------------------------------------

template <typename T>
TfeNet<T>::TfeNet(const TfeNetConfig& config) : config_(config), store_(std::make_unique<ParamStore<T>>()) {
  config_.validate();
  Rng rng(config_.init_seed);
  const int L = config_.levels;
  const auto& w = config_.widths;
  auto& store = *store_;

  int in_ch = config_.in_channels;
  for (int i = 0; i < L; ++i) {
    auto block = std::make_unique<TffmBlock<T>>(store, "enc" + std::to_string(i), in_ch, w[i], config_.k, config_.q,
                                                config_.encoder_head_lr_mult, rng, config_.straight);
    tffm_.push_back(block.get());
    encoder_.push_back(std::move(block));
    in_ch = w[i];
  }
  decoder_.resize(L - 1);
  up_.resize(L - 1);
  for (int i = L - 2; i >= 0; --i) {
    up_[i].conv = ConvNormRelu<T>(store, "up" + std::to_string(i), w[i + 1], w[i], 3, rng);
    const std::string name = "dec" + std::to_string(i);
    if (i == 0) {
      decoder_[i] = std::make_unique<ResConvBlock<T>>(store, name, 2 * w[i], w[i], rng);
    } else {
      auto block =
          std::make_unique<TffmBlock<T>>(store, name, 2 * w[i], w[i], config_.k, config_.q, 1.0, rng, config_.straight);
      tffm_.push_back(block.get());
      decoder_[i] = std::move(block);
    }
  }
  for (int a = 0; a < config_.aux_heads; ++a) {
    const int level = a + 1;
    aux_.push_back(AuxHead{Conv3dLayer<T>(store, "aux" + std::to_string(level), w[level], 1,
                                          kernels::ConvParams::cube(1), rng),
                           level, {}, {}});
  }
  head_ = Conv3dLayer<T>(store, "head", w[0], 1, kernels::ConvParams::cube(1), rng);
}

template <typename T>
std::vector<DAConvLayer<T>*> TfeNet<T>::daconv_layers() {
  std::vector<DAConvLayer<T>*> out;
  for (auto* b : tffm_) {
    for (Axis a : {Axis::X, Axis::Y, Axis::Z}) out.push_back(&b->branch(a));
  }
  return out;
}

template <typename T>
Tensor<T> TfeNet<T>::forward(const Tensor<T>& x) {
  const int L = config_.levels;
  const Shape3 s = x.shape();
  const int m = config_.required_multiple();
  if (s.d % m || s.h % m || s.w % m) {
    throw std::invalid_argument("TfeNet input extents " + to_string(s) + " must be multiples of " + std::to_string(m));
  }
  if (x.channels() != config_.in_channels) throw std::invalid_argument("TfeNet input channel mismatch");

  level_shapes_.assign(L, {});
  pool_argmax_.assign(L - 1, {});
  std::vector<Tensor<T>> skips(L - 1);
  Tensor<T> cur = x;
  for (int i = 0; i < L - 1; ++i) {
    level_shapes_[i] = cur.shape();
    skips[i] = encoder_[i]->forward(cur);
    cur = ops::maxpool2_forward(skips[i], &pool_argmax_[i]);
  }
  level_shapes_[L - 1] = cur.shape();
  cur = encoder_[L - 1]->forward(cur);

  aux_out_.clear();
  for (int i = L - 2; i >= 0; --i) {
    up_[i].in_shape = cur.shape();
    const Tensor<T> lifted = up_[i].conv.forward(ops::upsample2_forward(cur));
    const Tensor<T>* parts[2] = {&skips[i], &lifted};
    cur = decoder_[i]->forward(ops::concat<T>(parts));
    for (auto& a : aux_) {
      if (a.level != i) continue;
      Tensor<T> t = a.conv.forward(cur);
      a.shapes.clear();
      for (int u = 0; u < a.level; ++u) {
        a.shapes.push_back(t.shape());
        t = ops::upsample2_forward(t);
      }
      a.out = ops::sigmoid_forward(t);
    }
  }
  for (auto& a : aux_) aux_out_.push_back(a.out);
  prob_ = ops::sigmoid_forward(head_.forward(cur));
  return prob_;
}

template <typename T>
void TfeNet<T>::backward(const Tensor<T>& grad_prob, const std::vector<Tensor<T>>& grad_aux) {
  const int L = config_.levels;
  if (!grad_aux.empty() && grad_aux.size() != aux_.size()) {
    throw std::invalid_argument("TfeNet::backward: one gradient per auxiliary head expected");
  }
  Tensor<T> g = head_.backward(ops::sigmoid_backward(prob_, grad_prob));
  std::vector<Tensor<T>> grad_skips(L - 1);
  for (int i = 0; i <= L - 2; ++i) {
    for (std::size_t h = 0; h < aux_.size() && !grad_aux.empty(); ++h) {
      auto& a = aux_[h];
      if (a.level != i) continue;
      Tensor<T> t = ops::sigmoid_backward(a.out, grad_aux[h]);
      for (int u = a.level - 1; u >= 0; --u) t = ops::upsample2_backward(a.shapes[u], t);
      ops::add_inplace(g, a.conv.backward(t));
    }
    const int chans[2] = {config_.widths[i], config_.widths[i]};
    auto parts = ops::split<T>(decoder_[i]->backward(g), chans);
    grad_skips[i] = std::move(parts[0]);
    g = ops::upsample2_backward(up_[i].in_shape, up_[i].conv.backward(parts[1]));
  }
  g = encoder_[L - 1]->backward(g);
  for (int i = L - 2; i >= 0; --i) {
    Tensor<T> gs = ops::maxpool2_backward(level_shapes_[i], pool_argmax_[i], g);
    ops::add_inplace(gs, grad_skips[i]);
    g = encoder_[i]->backward(gs);
  }
}

template class TffmBlock<float>;
template class TffmBlock<double>;
template class ResConvBlock<float>;
template class ResConvBlock<double>;
template class TfeNet<float>;
template class TfeNet<double>;

}  // namespace tfe
