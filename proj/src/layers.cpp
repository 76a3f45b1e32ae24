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


#include "tfe/layers.hpp"

#include <atomic>
#include <cmath>

namespace tfe {

namespace {
std::atomic<KernelBackend> g_backend{KernelBackend::Parallel};
}

void set_kernel_backend(KernelBackend b) { g_backend = b; }
KernelBackend kernel_backend() { return g_backend; }

template <typename T>
void he_init(Param<T>& p, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
  for (auto& v : p.value) v = static_cast<T>(dist(rng));
}

// ---- Conv3dLayer ------------------------------------------------------------

template <typename T>
Conv3dLayer<T>::Conv3dLayer(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch,
                            kernels::ConvParams params, Rng& rng, bool zero_init, double lr_mult)
    : in_ch_(in_ch), out_ch_(out_ch), params_(params) {
  w_ = &store.add(name + ".w", {out_ch, in_ch, params.kernel[0], params.kernel[1], params.kernel[2]}, lr_mult);
  b_ = &store.add(name + ".b", {out_ch}, lr_mult);
  if (!zero_init) he_init(*w_, in_ch * params.taps(), rng);
}

template <typename T>
Tensor<T> Conv3dLayer<T>::forward(const Tensor<T>& x) {
  input_ = x;
  const std::span<const T> w(w_->value), b(b_->value);
  if (kernel_backend() == KernelBackend::Serial) return kernels::serial::conv3d_forward(x, w, b, out_ch_, params_);
  return kernels::parallel::conv3d_forward(x, w, b, out_ch_, params_);
}

template <typename T>
Tensor<T> Conv3dLayer<T>::backward(const Tensor<T>& grad_out, bool need_input_grad) {
  Tensor<T> gin;
  const std::span<const T> w(w_->value);
  if (kernel_backend() == KernelBackend::Serial) {
    kernels::serial::conv3d_backward(input_, w, out_ch_, params_, grad_out, need_input_grad ? &gin : nullptr,
                                     std::span<T>(w_->grad), std::span<T>(b_->grad));
  } else {
    kernels::parallel::conv3d_backward(input_, w, out_ch_, params_, grad_out, need_input_grad ? &gin : nullptr,
                                       std::span<T>(w_->grad), std::span<T>(b_->grad));
  }
  return gin;
}

// ---- InstanceNormLayer ------------------------------------------------------

template <typename T>
InstanceNormLayer<T>::InstanceNormLayer(ParamStore<T>& store, const std::string& name, int channels, double lr_mult) {
  scale_ = &store.add(name + ".scale", {channels}, lr_mult, T(1));
  shift_ = &store.add(name + ".shift", {channels}, lr_mult, T(0));
}

template <typename T>
Tensor<T> InstanceNormLayer<T>::forward(const Tensor<T>& x) {
  return ops::instance_norm_forward(x, std::span<const T>(scale_->value), std::span<const T>(shift_->value), &cache_);
}

template <typename T>
Tensor<T> InstanceNormLayer<T>::backward(const Tensor<T>& grad_out) {
  return ops::instance_norm_backward(cache_, std::span<const T>(scale_->value), grad_out, std::span<T>(scale_->grad),
                                     std::span<T>(shift_->grad));
}

// ---- ConvNormRelu -----------------------------------------------------------

template <typename T>
ConvNormRelu<T>::ConvNormRelu(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int k, Rng& rng)
    : conv_(store, name + ".conv", in_ch, out_ch, kernels::ConvParams::cube(k), rng),
      norm_(store, name + ".norm", out_ch) {}

template <typename T>
Tensor<T> ConvNormRelu<T>::forward(const Tensor<T>& x) {
  out_ = ops::relu_forward(norm_.forward(conv_.forward(x)));
  return out_;
}

template <typename T>
Tensor<T> ConvNormRelu<T>::backward(const Tensor<T>& grad_out) {
  return conv_.backward(norm_.backward(ops::relu_backward(out_, grad_out)));
}

// ---- AngleHead --------------------------------------------------------------

template <typename T>
AngleHead<T>::AngleHead(ParamStore<T>& store, const std::string& name, int in_ch, double q, double lr_mult, Rng& rng)
    : q_(q),
      conv_(store, name + ".conv", in_ch, 4, kernels::ConvParams::cube(3), rng, /*zero_init=*/true, lr_mult),
      norm_(store, name + ".norm", 4, lr_mult) {}

template <typename T>
Tensor<T> AngleHead<T>::forward(const Tensor<T>& x) {
  tanh_out_ = ops::tanh_forward(norm_.forward(conv_.forward(x)));
  return ops::scale(tanh_out_, static_cast<T>(q_));
}

template <typename T>
Tensor<T> AngleHead<T>::backward(const Tensor<T>& grad_angles) {
  return conv_.backward(norm_.backward(ops::tanh_backward(tanh_out_, ops::scale(grad_angles, static_cast<T>(q_)))));
}

// ---- DAConvLayer ------------------------------------------------------------

template <typename T>
DAConvLayer<T>::DAConvLayer(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, KernelSpec spec,
                            double head_lr_mult, Rng& rng, bool straight)
    : in_ch_(in_ch), out_ch_(out_ch), spec_(spec), straight_(straight) {
  spec_.validate();
  head_ = AngleHead<T>(store, name + ".head", in_ch, spec.q, head_lr_mult, rng);
  w_ = &store.add(name + ".w", {out_ch, in_ch, spec.k});
  b_ = &store.add(name + ".b", {out_ch});
  he_init(*w_, in_ch * spec.k, rng);
}

template <typename T>
kernels::ConvParams DAConvLayer<T>::straight_params() const {
  kernels::ConvParams p{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, kernels::Padding::Replicate};
  const int a = spec_.axis == Axis::Z ? 0 : (spec_.axis == Axis::Y ? 1 : 2);
  p.kernel[a] = spec_.k;
  p.pad[a] = spec_.half();
  return p;
}

template <typename T>
Tensor<T> DAConvLayer<T>::forward(const Tensor<T>& x) {
  input_ = x;
  const std::span<const T> w(w_->value), b(b_->value);
  if (straight_) {
    if (spec_.dilation != 1) throw std::invalid_argument("straight DAConv requires dilation 1");
    return kernels::parallel::conv3d_forward(x, w, b, out_ch_, straight_params());
  }
  angles_ = head_.forward(x);
  if (kernel_backend() == KernelBackend::Serial) {
    return kernels::serial::daconv_forward(x, angles_, w, b, out_ch_, spec_);
  }
  return kernels::parallel::daconv_forward(x, angles_, w, b, out_ch_, spec_, &work_);
}

template <typename T>
Tensor<T> DAConvLayer<T>::backward(const Tensor<T>& grad_out) {
  const std::span<const T> w(w_->value);
  Tensor<T> gin;
  if (straight_) {
    kernels::parallel::conv3d_backward(input_, w, out_ch_, straight_params(), grad_out, &gin, std::span<T>(w_->grad),
                                       std::span<T>(b_->grad));
    return gin;
  }
  Tensor<T> gangles;
  if (kernel_backend() == KernelBackend::Serial) {
    kernels::serial::daconv_backward(input_, angles_, w, out_ch_, spec_, grad_out, &gin, &gangles,
                                     std::span<T>(w_->grad), std::span<T>(b_->grad));
  } else {
    kernels::parallel::daconv_backward(input_, angles_, w, out_ch_, spec_, grad_out, &gin, &gangles,
                                       std::span<T>(w_->grad), std::span<T>(b_->grad), &work_);
  }
  ops::add_inplace(gin, head_.backward(gangles));
  return gin;
}

#define TFE_INSTANTIATE_LAYERS(T)                       \
  template void he_init<T>(Param<T>&, int, Rng&);       \
  template class Conv3dLayer<T>;                        \
  template class InstanceNormLayer<T>;                  \
  template class ConvNormRelu<T>;                       \
  template class AngleHead<T>;                          \
  template class DAConvLayer<T>;

TFE_INSTANTIATE_LAYERS(float)
TFE_INSTANTIATE_LAYERS(double)

}  // namespace tfe
