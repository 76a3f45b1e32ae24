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


#include "tfe/kernels/conv3d.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tfe::kernels {

Shape3 conv_output_shape(const Shape3& in, const ConvParams& p) {
  auto out = [](int n, int k, int s, int pad) { return (n + 2 * pad - k) / s + 1; };
  return {out(in.d, p.kernel[0], p.stride[0], p.pad[0]), out(in.h, p.kernel[1], p.stride[1], p.pad[1]),
          out(in.w, p.kernel[2], p.stride[2], p.pad[2])};
}

void check_conv_args(int in_channels, int out_channels, std::size_t weight_size, std::size_t bias_size,
                     const Shape3& in, const ConvParams& p) {
  for (int a = 0; a < 3; ++a) {
    if (p.kernel[a] < 1 || p.stride[a] < 1 || p.pad[a] < 0) throw std::invalid_argument("conv3d: bad geometry");
  }
  const std::size_t expect = static_cast<std::size_t>(out_channels) * in_channels * p.taps();
  if (weight_size != expect) {
    throw std::invalid_argument("conv3d: channel mismatch, weights hold " + std::to_string(weight_size) +
                                " values but " + std::to_string(expect) + " are needed for " +
                                std::to_string(in_channels) + " -> " + std::to_string(out_channels) + " channels");
  }
  if (bias_size != 0 && bias_size != static_cast<std::size_t>(out_channels)) {
    throw std::invalid_argument("conv3d: bias length must equal output channels");
  }
  const Shape3 o = conv_output_shape(in, p);
  if (o.d <= 0 || o.h <= 0 || o.w <= 0) throw std::invalid_argument("conv3d: empty output for input " + to_string(in));
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Output index range [lo, hi) whose input position o*s + k - pad stays in [0, n).
inline void valid_range(int n_out, int n_in, int k, int s, int pad, int& lo, int& hi) {
  const int num_lo = pad - k;
  lo = num_lo <= 0 ? 0 : (num_lo + s - 1) / s;
  const int num_hi = n_in - 1 + pad - k;
  hi = num_hi < 0 ? 0 : std::min(n_out, num_hi / s + 1);
  if (lo > hi) lo = hi;
}

}  // namespace

namespace serial {

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int out_channels,
                         const ConvParams& p) {
  check_conv_args(in.channels(), out_channels, w.size(), b.size(), in.shape(), p);
  const Shape3 is = in.shape();
  const Shape3 os = conv_output_shape(is, p);
  const int cin = in.channels();
  const auto [kd, kh, kw] = p.kernel;
  Tensor<T> out(out_channels, os);
  for (int co = 0; co < out_channels; ++co)
    for (int oz = 0; oz < os.d; ++oz)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          T acc = b.empty() ? T(0) : b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int kz = 0; kz < kd; ++kz)
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  int iz = oz * p.stride[0] + kz - p.pad[0];
                  int iy = oy * p.stride[1] + ky - p.pad[1];
                  int ix = ox * p.stride[2] + kx - p.pad[2];
                  if (p.padding == Padding::Replicate) {
                    iz = clampi(iz, 0, is.d - 1);
                    iy = clampi(iy, 0, is.h - 1);
                    ix = clampi(ix, 0, is.w - 1);
                  } else if (!is.contains(iz, iy, ix)) {
                    continue;
                  }
                  const std::size_t wi = (((static_cast<std::size_t>(co) * cin + ci) * kd + kz) * kh + ky) * kw + kx;
                  acc += w[wi] * in(ci, iz, iy, ix);
                }
          out(co, oz, oy, ox) = acc;
        }
  return out;
}

template <typename T>
void conv3d_backward(const Tensor<T>& in, std::span<const T> w, int out_channels, const ConvParams& p,
                     const Tensor<T>& grad_out, Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b) {
  check_conv_args(in.channels(), out_channels, w.size(), grad_b.size(), in.shape(), p);
  if (grad_w.size() != w.size()) throw std::invalid_argument("conv3d_backward: grad_w size mismatch");
  const Shape3 is = in.shape();
  const Shape3 os = conv_output_shape(is, p);
  if (grad_out.shape() != os || grad_out.channels() != out_channels) {
    throw std::invalid_argument("conv3d_backward: grad_out shape mismatch");
  }
  const int cin = in.channels();
  const auto [kd, kh, kw] = p.kernel;
  if (grad_in) *grad_in = Tensor<T>(cin, is);
  for (int co = 0; co < out_channels; ++co)
    for (int oz = 0; oz < os.d; ++oz)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          const T g = grad_out(co, oz, oy, ox);
          if (!grad_b.empty()) grad_b[co] += g;
          for (int ci = 0; ci < cin; ++ci)
            for (int kz = 0; kz < kd; ++kz)
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  int iz = oz * p.stride[0] + kz - p.pad[0];
                  int iy = oy * p.stride[1] + ky - p.pad[1];
                  int ix = ox * p.stride[2] + kx - p.pad[2];
                  if (p.padding == Padding::Replicate) {
                    iz = clampi(iz, 0, is.d - 1);
                    iy = clampi(iy, 0, is.h - 1);
                    ix = clampi(ix, 0, is.w - 1);
                  } else if (!is.contains(iz, iy, ix)) {
                    continue;
                  }
                  const std::size_t wi = (((static_cast<std::size_t>(co) * cin + ci) * kd + kz) * kh + ky) * kw + kx;
                  grad_w[wi] += g * in(ci, iz, iy, ix);
                  if (grad_in) (*grad_in)(ci, iz, iy, ix) += g * w[wi];
                }
        }
}

}  // namespace serial

namespace parallel {
namespace {

template <typename T>
Tensor<T> replicate_pad(const Tensor<T>& in, const std::array<int, 3>& pad) {
  const Shape3 is = in.shape();
  const Shape3 ps{is.d + 2 * pad[0], is.h + 2 * pad[1], is.w + 2 * pad[2]};
  Tensor<T> out(in.channels(), ps);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < in.channels(); ++c)
    for (int z = 0; z < ps.d; ++z)
      for (int y = 0; y < ps.h; ++y)
        for (int x = 0; x < ps.w; ++x)
          out(c, z, y, x) =
              in(c, clampi(z - pad[0], 0, is.d - 1), clampi(y - pad[1], 0, is.h - 1), clampi(x - pad[2], 0, is.w - 1));
  return out;
}

template <typename T>
void fold_replicate(const Tensor<T>& padded_grad, const std::array<int, 3>& pad, Tensor<T>& grad_in) {
  const Shape3 is = grad_in.shape();
  const Shape3 ps = padded_grad.shape();
  grad_in.fill(T(0));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < grad_in.channels(); ++c)
    for (int z = 0; z < ps.d; ++z)
      for (int y = 0; y < ps.h; ++y)
        for (int x = 0; x < ps.w; ++x)
          grad_in(c, clampi(z - pad[0], 0, is.d - 1), clampi(y - pad[1], 0, is.h - 1), clampi(x - pad[2], 0, is.w - 1)) +=
              padded_grad(c, z, y, x);
}

struct Ranges {
  int lo[3];
  int hi[3];
};

inline Ranges ranges_for(const Shape3& is, const Shape3& os, const ConvParams& p, int kz, int ky, int kx) {
  Ranges r{};
  valid_range(os.d, is.d, kz, p.stride[0], p.pad[0], r.lo[0], r.hi[0]);
  valid_range(os.h, is.h, ky, p.stride[1], p.pad[1], r.lo[1], r.hi[1]);
  valid_range(os.w, is.w, kx, p.stride[2], p.pad[2], r.lo[2], r.hi[2]);
  return r;
}

template <typename T>
Tensor<T> forward_zero(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int out_channels,
                       const ConvParams& p) {
  const Shape3 is = in.shape();
  const Shape3 os = conv_output_shape(is, p);
  const int cin = in.channels();
  const auto [kd, kh, kw] = p.kernel;
  const int taps = p.taps();
  Tensor<T> out(out_channels, os);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_channels; ++co) {
    T* o = out.channel(co).data();
    std::fill(o, o + os.voxels(), b.empty() ? T(0) : b[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const T* src = in.channel(ci).data();
      const T* wk = w.data() + (static_cast<std::size_t>(co) * cin + ci) * taps;
      for (int kz = 0; kz < kd; ++kz)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wk[(kz * kh + ky) * kw + kx];
            const Ranges r = ranges_for(is, os, p, kz, ky, kx);
            for (int oz = r.lo[0]; oz < r.hi[0]; ++oz) {
              const int iz = oz * p.stride[0] + kz - p.pad[0];
              for (int oy = r.lo[1]; oy < r.hi[1]; ++oy) {
                const int iy = oy * p.stride[1] + ky - p.pad[1];
                const T* srow = src + (static_cast<std::size_t>(iz) * is.h + iy) * is.w;
                T* orow = o + (static_cast<std::size_t>(oz) * os.h + oy) * os.w;
                if (p.stride[2] == 1) {
                  const T* s = srow + (kx - p.pad[2]);
                  for (int ox = r.lo[2]; ox < r.hi[2]; ++ox) orow[ox] += wv * s[ox];
                } else {
                  for (int ox = r.lo[2]; ox < r.hi[2]; ++ox) orow[ox] += wv * srow[ox * p.stride[2] + kx - p.pad[2]];
                }
              }
            }
          }
    }
  }
  return out;
}

template <typename T>
void backward_zero(const Tensor<T>& in, std::span<const T> w, int out_channels, const ConvParams& p,
                   const Tensor<T>& grad_out, Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b) {
  const Shape3 is = in.shape();
  const Shape3 os = grad_out.shape();
  const int cin = in.channels();
  const auto [kd, kh, kw] = p.kernel;
  const int taps = p.taps();

  if (!grad_b.empty()) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_channels; ++co) {
      double acc = 0;
      for (T g : grad_out.channel(co)) acc += g;
      grad_b[co] += static_cast<T>(acc);
    }
  }

  // Weight gradient: each task owns one output channel's filters.
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_channels; ++co) {
    const T* go = grad_out.channel(co).data();
    for (int ci = 0; ci < cin; ++ci) {
      const T* src = in.channel(ci).data();
      T* gw = grad_w.data() + (static_cast<std::size_t>(co) * cin + ci) * taps;
      for (int kz = 0; kz < kd; ++kz)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const Ranges r = ranges_for(is, os, p, kz, ky, kx);
            double acc = 0;
            for (int oz = r.lo[0]; oz < r.hi[0]; ++oz) {
              const int iz = oz * p.stride[0] + kz - p.pad[0];
              for (int oy = r.lo[1]; oy < r.hi[1]; ++oy) {
                const int iy = oy * p.stride[1] + ky - p.pad[1];
                const T* srow = src + (static_cast<std::size_t>(iz) * is.h + iy) * is.w;
                const T* grow = go + (static_cast<std::size_t>(oz) * os.h + oy) * os.w;
                T row = 0;
                for (int ox = r.lo[2]; ox < r.hi[2]; ++ox) row += grow[ox] * srow[ox * p.stride[2] + kx - p.pad[2]];
                acc += row;
              }
            }
            gw[(kz * kh + ky) * kw + kx] += static_cast<T>(acc);
          }
    }
  }

  if (!grad_in) return;
  *grad_in = Tensor<T>(cin, is);
  // Input gradient: each task owns one input channel.
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    T* gi = grad_in->channel(ci).data();
    for (int co = 0; co < out_channels; ++co) {
      const T* go = grad_out.channel(co).data();
      const T* wk = w.data() + (static_cast<std::size_t>(co) * cin + ci) * taps;
      for (int kz = 0; kz < kd; ++kz)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wk[(kz * kh + ky) * kw + kx];
            const Ranges r = ranges_for(is, os, p, kz, ky, kx);
            for (int oz = r.lo[0]; oz < r.hi[0]; ++oz) {
              const int iz = oz * p.stride[0] + kz - p.pad[0];
              for (int oy = r.lo[1]; oy < r.hi[1]; ++oy) {
                const int iy = oy * p.stride[1] + ky - p.pad[1];
                T* girow = gi + (static_cast<std::size_t>(iz) * is.h + iy) * is.w;
                const T* grow = go + (static_cast<std::size_t>(oz) * os.h + oy) * os.w;
                if (p.stride[2] == 1) {
                  T* d = girow + (kx - p.pad[2]);
                  for (int ox = r.lo[2]; ox < r.hi[2]; ++ox) d[ox] += wv * grow[ox];
                } else {
                  for (int ox = r.lo[2]; ox < r.hi[2]; ++ox) girow[ox * p.stride[2] + kx - p.pad[2]] += wv * grow[ox];
                }
              }
            }
          }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int out_channels,
                         const ConvParams& p) {
  check_conv_args(in.channels(), out_channels, w.size(), b.size(), in.shape(), p);
  if (p.padding == Padding::Zero) return forward_zero(in, w, b, out_channels, p);
  ConvParams inner = p;
  inner.pad = {0, 0, 0};
  inner.padding = Padding::Zero;
  return forward_zero(replicate_pad(in, p.pad), w, b, out_channels, inner);
}

template <typename T>
void conv3d_backward(const Tensor<T>& in, std::span<const T> w, int out_channels, const ConvParams& p,
                     const Tensor<T>& grad_out, Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b) {
  check_conv_args(in.channels(), out_channels, w.size(), grad_b.size(), in.shape(), p);
  if (grad_w.size() != w.size()) throw std::invalid_argument("conv3d_backward: grad_w size mismatch");
  if (grad_out.shape() != conv_output_shape(in.shape(), p) || grad_out.channels() != out_channels) {
    throw std::invalid_argument("conv3d_backward: grad_out shape mismatch");
  }
  if (p.padding == Padding::Zero) {
    backward_zero(in, w, out_channels, p, grad_out, grad_in, grad_w, grad_b);
    return;
  }
  ConvParams inner = p;
  inner.pad = {0, 0, 0};
  inner.padding = Padding::Zero;
  const Tensor<T> padded = replicate_pad(in, p.pad);
  Tensor<T> padded_grad;
  backward_zero(padded, w, out_channels, inner, grad_out, grad_in ? &padded_grad : nullptr, grad_w, grad_b);
  if (grad_in) {
    *grad_in = Tensor<T>(in.channels(), in.shape());
    fold_replicate(padded_grad, p.pad, *grad_in);
  }
}

}  // namespace parallel

#define TFE_INSTANTIATE_CONV(NS, T)                                                                             \
  template Tensor<T> NS::conv3d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int,       \
                                           const ConvParams&);                                                  \
  template void NS::conv3d_backward<T>(const Tensor<T>&, std::span<const T>, int, const ConvParams&,            \
                                       const Tensor<T>&, Tensor<T>*, std::span<T>, std::span<T>);

TFE_INSTANTIATE_CONV(serial, float)
TFE_INSTANTIATE_CONV(serial, double)
TFE_INSTANTIATE_CONV(parallel, float)
TFE_INSTANTIATE_CONV(parallel, double)

}  // namespace tfe::kernels
