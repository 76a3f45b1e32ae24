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


#include "tfe/ops.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace tfe::ops {

template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& x, std::span<const T> scale, std::span<const T> shift,
                                NormCache<T>* cache) {
  const int c = x.channels();
  if (scale.size() != static_cast<std::size_t>(c) || shift.size() != static_cast<std::size_t>(c)) {
    throw std::invalid_argument("instance_norm: affine parameter count must equal channels");
  }
  const std::size_t n = x.voxels();
  Tensor<T> y(c, x.shape());
  Tensor<T> xhat(c, x.shape());
  std::vector<T> inv(c);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const auto src = x.channel(ch);
    double mean = 0;
    for (T v : src) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    for (T v : src) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kNormEpsilon);
    inv[ch] = static_cast<T>(is);
    auto xh = xhat.channel(ch);
    auto dst = y.channel(ch);
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = static_cast<T>((src[i] - mean) * is);
      dst[i] = scale[ch] * xh[i] + shift[ch];
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <typename T>
Tensor<T> instance_norm_backward(const NormCache<T>& cache, std::span<const T> scale, const Tensor<T>& grad_out,
                                 std::span<T> grad_scale, std::span<T> grad_shift) {
  const Tensor<T>& xhat = cache.normalized;
  const int c = xhat.channels();
  const std::size_t n = xhat.voxels();
  Tensor<T> gx(c, xhat.shape());
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const auto g = grad_out.channel(ch);
    const auto xh = xhat.channel(ch);
    double sum_g = 0, sum_gx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * xh[i];
    }
    grad_shift[ch] += static_cast<T>(sum_g);
    grad_scale[ch] += static_cast<T>(sum_gx);
    const double mg = sum_g / static_cast<double>(n);
    const double mgx = sum_gx / static_cast<double>(n);
    const double k = static_cast<double>(scale[ch]) * cache.inv_std[ch];
    auto dst = gx.channel(ch);
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(k * (g[i] - mg - xh[i] * mgx));
  }
  return gx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.channels(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] <= T(0) ? T(0) : x[i];  // NaN passes through
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.channels(), y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
  Tensor<T> y(x.channels(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.channels(), y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * (T(1) - y[i] * y[i]);
  return g;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y(x.channels(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    y[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.channels(), y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * y[i] * (T(1) - y[i]);
  return g;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> y(x.channels(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * factor;
  return y;
}

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
  const Shape3 is = x.shape();
  if (is.d % 2 || is.h % 2 || is.w % 2) {
    throw std::invalid_argument("maxpool2: spatial extents must be even, got " + to_string(is));
  }
  const Shape3 os{is.d / 2, is.h / 2, is.w / 2};
  Tensor<T> y(x.channels(), os);
  if (argmax) argmax->assign(y.size(), 0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.channel(c).data();
    for (int z = 0; z < os.d; ++z)
      for (int yy = 0; yy < os.h; ++yy)
        for (int xx = 0; xx < os.w; ++xx) {
          std::size_t best = is.index(2 * z, 2 * yy, 2 * xx);
          T bv = src[best];
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = is.index(2 * z + dz, 2 * yy + dy, 2 * xx + dx);
                if (src[i] > bv) {
                  bv = src[i];
                  best = i;
                }
              }
          const std::size_t o = y.index(c, z, yy, xx);
          y[o] = bv;
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
        }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Shape3& in_shape, const std::vector<std::uint32_t>& argmax,
                            const Tensor<T>& grad_out) {
  Tensor<T> g(grad_out.channels(), in_shape);
  const std::size_t on = grad_out.voxels();
  for (int c = 0; c < grad_out.channels(); ++c) {
    T* dst = g.channel(c).data();
    for (std::size_t o = 0; o < on; ++o) dst[argmax[c * on + o]] += grad_out[c * on + o];
  }
  return g;
}

namespace {

struct Tap1 {
  int lo, hi;
  double w_hi;
};

// Source taps for each output index of a 2x half-voxel-aligned upsample.
std::vector<Tap1> upsample_taps(int n) {
  std::vector<Tap1> taps(2 * n);
  for (int i = 0; i < 2 * n; ++i) {
    double src = (i + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    if (src > n - 1) src = n - 1;
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, n - 1);
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x) {
  const Shape3 is = x.shape();
  const Shape3 os{is.d * 2, is.h * 2, is.w * 2};
  const auto tz = upsample_taps(is.d), ty = upsample_taps(is.h), tx = upsample_taps(is.w);
  Tensor<T> y(x.channels(), os);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.channel(c).data();
    for (int z = 0; z < os.d; ++z)
      for (int yy = 0; yy < os.h; ++yy)
        for (int xx = 0; xx < os.w; ++xx) {
          const int zs[2] = {tz[z].lo, tz[z].hi}, ys[2] = {ty[yy].lo, ty[yy].hi}, xs[2] = {tx[xx].lo, tx[xx].hi};
          const T wz[2] = {T(1 - tz[z].w_hi), T(tz[z].w_hi)};
          const T wy[2] = {T(1 - ty[yy].w_hi), T(ty[yy].w_hi)};
          const T wx[2] = {T(1 - tx[xx].w_hi), T(tx[xx].w_hi)};
          T acc = 0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) acc += wz[a] * wy[b] * wx[e] * src[is.index(zs[a], ys[b], xs[e])];
          y(c, z, yy, xx) = acc;
        }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Shape3& in_shape, const Tensor<T>& grad_out) {
  const Shape3 os = grad_out.shape();
  if (os.d != 2 * in_shape.d || os.h != 2 * in_shape.h || os.w != 2 * in_shape.w) {
    throw std::invalid_argument("upsample2_backward: shape mismatch");
  }
  const auto tz = upsample_taps(in_shape.d), ty = upsample_taps(in_shape.h), tx = upsample_taps(in_shape.w);
  Tensor<T> g(grad_out.channels(), in_shape);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < grad_out.channels(); ++c) {
    T* dst = g.channel(c).data();
    for (int z = 0; z < os.d; ++z)
      for (int yy = 0; yy < os.h; ++yy)
        for (int xx = 0; xx < os.w; ++xx) {
          const T go = grad_out(c, z, yy, xx);
          const int zs[2] = {tz[z].lo, tz[z].hi}, ys[2] = {ty[yy].lo, ty[yy].hi}, xs[2] = {tx[xx].lo, tx[xx].hi};
          const T wz[2] = {T(1 - tz[z].w_hi), T(tz[z].w_hi)};
          const T wy[2] = {T(1 - ty[yy].w_hi), T(ty[yy].w_hi)};
          const T wx[2] = {T(1 - tx[xx].w_hi), T(tx[xx].w_hi)};
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) dst[in_shape.index(zs[a], ys[b], xs[e])] += wz[a] * wy[b] * wx[e] * go;
        }
  }
  return g;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int channels = 0;
  for (const auto* p : parts) {
    if (p->shape() != parts[0]->shape()) throw std::invalid_argument("concat: spatial shapes differ");
    channels += p->channels();
  }
  Tensor<T> out(channels, parts[0]->shape());
  std::size_t off = 0;
  for (const auto* p : parts) {
    std::copy(p->values().begin(), p->values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += p->size();
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& grad, std::span<const int> channels) {
  std::vector<Tensor<T>> out;
  std::size_t off = 0;
  for (int c : channels) {
    Tensor<T> part(c, grad.shape());
    std::copy_n(grad.values().begin() + static_cast<std::ptrdiff_t>(off), part.size(), part.values().begin());
    off += part.size();
    out.push_back(std::move(part));
  }
  if (off != grad.size()) throw std::invalid_argument("split: channel counts do not cover the tensor");
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape() || a.channels() != b.channels()) throw std::invalid_argument("add: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

#define TFE_INSTANTIATE_OPS(T)                                                                                      \
  template Tensor<T> instance_norm_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,             \
                                              NormCache<T>*);                                                       \
  template Tensor<T> instance_norm_backward<T>(const NormCache<T>&, std::span<const T>, const Tensor<T>&,           \
                                               std::span<T>, std::span<T>);                                         \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                                             \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> tanh_forward<T>(const Tensor<T>&);                                                             \
  template Tensor<T> tanh_backward<T>(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sigmoid_forward<T>(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                                 \
  template Tensor<T> maxpool2_forward<T>(const Tensor<T>&, std::vector<std::uint32_t>*);                            \
  template Tensor<T> maxpool2_backward<T>(const Shape3&, const std::vector<std::uint32_t>&, const Tensor<T>&);      \
  template Tensor<T> upsample2_forward<T>(const Tensor<T>&);                                                        \
  template Tensor<T> upsample2_backward<T>(const Shape3&, const Tensor<T>&);                                        \
  template Tensor<T> concat<T>(std::span<const Tensor<T>* const>);                                                  \
  template std::vector<Tensor<T>> split<T>(const Tensor<T>&, std::span<const int>);                                 \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                                    \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);

TFE_INSTANTIATE_OPS(float)
TFE_INSTANTIATE_OPS(double)

}  // namespace tfe::ops
