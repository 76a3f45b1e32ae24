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


#include "tfe/kernels/daconv.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tfe::kernels {

void check_daconv_args(const Shape3& in_shape, int in_channels, const Shape3& angle_shape, int angle_channels,
                       std::size_t weight_size, std::size_t bias_size, int out_channels, const KernelSpec& spec) {
  spec.validate();
  if (in_shape.voxels() == 0) throw std::invalid_argument("daconv: empty input");
  if (angle_shape != in_shape || angle_channels != 4) {
    throw std::invalid_argument("daconv: angle field must have 4 channels on the input grid");
  }
  const std::size_t expect = static_cast<std::size_t>(out_channels) * in_channels * spec.k;
  if (weight_size != expect) {
    throw std::invalid_argument("daconv: expected " + std::to_string(expect) + " weights, got " +
                                std::to_string(weight_size));
  }
  if (bias_size != 0 && bias_size != static_cast<std::size_t>(out_channels)) {
    throw std::invalid_argument("daconv: bias length must equal output channels");
  }
}

namespace {

// Arm angles (a, b) for tap index t; the center tap carries no rotation.
template <typename T>
inline void arm_angles(const Tensor<T>& angles, std::size_t v, int c, T& a, T& b) {
  const std::size_t n = angles.voxels();
  const int first = c < 0 ? 0 : 2;
  a = angles[first * n + v];
  b = angles[(first + 1) * n + v];
}

template <typename T>
inline Point3<T> tap_position(const KernelSpec& spec, int z, int y, int x, int c, T a, T b, Point3<T>* da = nullptr,
                              Point3<T>* db = nullptr) {
  if (c == 0) {
    if (da) *da = {};
    if (db) *db = {};
    return {T(z), T(y), T(x)};
  }
  const T s = static_cast<T>(c * spec.dilation);
  const Point3<T> off = arm_offset(spec.axis, s, a, b, da, db);
  return {T(z) + off.z, T(y) + off.y, T(x) + off.x};
}

}  // namespace

namespace serial {

template <typename T>
Tensor<T> daconv_forward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, std::span<const T> b,
                         int out_channels, const KernelSpec& spec) {
  check_daconv_args(in.shape(), in.channels(), angles.shape(), angles.channels(), w.size(), b.size(), out_channels,
                    spec);
  const Shape3 s = in.shape();
  const int cin = in.channels();
  const int k = spec.k;
  Tensor<T> out(out_channels, s);
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const std::size_t v = s.index(z, y, x);
        for (int co = 0; co < out_channels; ++co) {
          T acc = b.empty() ? T(0) : b[co];
          for (int t = 0; t < k; ++t) {
            const int c = t - spec.half();
            T a{}, bb{};
            if (c != 0) arm_angles(angles, v, c, a, bb);
            const Point3<T> pos = tap_position(spec, z, y, x, c, a, bb);
            for (int ci = 0; ci < cin; ++ci) {
              acc += w[(static_cast<std::size_t>(co) * cin + ci) * k + t] * trilinear_sample(in, pos, ci);
            }
          }
          out[static_cast<std::size_t>(co) * s.voxels() + v] = acc;
        }
      }
  return out;
}

template <typename T>
void daconv_backward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, int out_channels,
                     const KernelSpec& spec, const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_angles,
                     std::span<T> grad_w, std::span<T> grad_b) {
  check_daconv_args(in.shape(), in.channels(), angles.shape(), angles.channels(), w.size(), grad_b.size(),
                    out_channels, spec);
  if (grad_out.shape() != in.shape() || grad_out.channels() != out_channels) {
    throw std::invalid_argument("daconv_backward: grad_out shape mismatch");
  }
  const Shape3 s = in.shape();
  const std::size_t n = s.voxels();
  const int cin = in.channels();
  const int k = spec.k;
  if (grad_in) *grad_in = Tensor<T>(cin, s);
  if (grad_angles) *grad_angles = Tensor<T>(4, s);
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const std::size_t v = s.index(z, y, x);
        if (!grad_b.empty()) {
          for (int co = 0; co < out_channels; ++co) grad_b[co] += grad_out[co * n + v];
        }
        for (int t = 0; t < k; ++t) {
          const int c = t - spec.half();
          T a{}, bb{};
          if (c != 0) arm_angles(angles, v, c, a, bb);
          Point3<T> da, db;
          const Point3<T> pos = tap_position(spec, z, y, x, c, a, bb, &da, &db);
          Point3<T> dpos{};
          for (int ci = 0; ci < cin; ++ci) {
            T upstream{};
            const T sample = trilinear_sample(in, pos, ci);
            for (int co = 0; co < out_channels; ++co) {
              const std::size_t wi = (static_cast<std::size_t>(co) * cin + ci) * k + t;
              const T g = grad_out[co * n + v];
              upstream += w[wi] * g;
              grad_w[wi] += g * sample;
            }
            const auto sg = trilinear_sample_grad(in, pos, ci, upstream);
            if (grad_in) {
              for (int j = 0; j < 8; ++j) (*grad_in)[sg.index[j]] += sg.data_grad[j];
            }
            dpos.z += sg.point_grad.z;
            dpos.y += sg.point_grad.y;
            dpos.x += sg.point_grad.x;
          }
          if (grad_angles && c != 0) {
            const int first = c < 0 ? 0 : 2;
            (*grad_angles)[first * n + v] += dpos.z * da.z + dpos.y * da.y + dpos.x * da.x;
            (*grad_angles)[(first + 1) * n + v] += dpos.z * db.z + dpos.y * db.y + dpos.x * db.x;
          }
        }
      }
}

}  // namespace serial

namespace parallel {
namespace {

template <typename T>
void prepare(const Tensor<T>& in, const Tensor<T>& angles, const KernelSpec& spec, DaconvWorkspace<T>& ws) {
  const Shape3 s = in.shape();
  const std::size_t n = s.voxels();
  const int cin = in.channels();
  const int k = spec.k;
  ws.shape = s;
  ws.in_channels = cin;
  ws.taps = k;
  ws.stencils.resize(static_cast<std::size_t>(k) * n);
  ws.samples.resize(static_cast<std::size_t>(k) * cin * n);
#pragma omp parallel for schedule(static)
  for (int z = 0; z < s.d; ++z) {
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const std::size_t v = s.index(z, y, x);
        for (int t = 0; t < k; ++t) {
          const int c = t - spec.half();
          T a{}, b{};
          if (c != 0) arm_angles(angles, v, c, a, b);
          const TrilinearStencil<T> st(s, tap_position(spec, z, y, x, c, a, b));
          ws.stencils[static_cast<std::size_t>(t) * n + v] = st;
          T* row = ws.samples.data() + static_cast<std::size_t>(t) * cin * n;
          for (int ci = 0; ci < cin; ++ci) row[ci * n + v] = st.sample(in.channel(ci).data());
        }
      }
  }
}

}  // namespace

template <typename T>
Tensor<T> daconv_forward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, std::span<const T> b,
                         int out_channels, const KernelSpec& spec, DaconvWorkspace<T>* ws) {
  check_daconv_args(in.shape(), in.channels(), angles.shape(), angles.channels(), w.size(), b.size(), out_channels,
                    spec);
  DaconvWorkspace<T> local;
  DaconvWorkspace<T>& work = ws ? *ws : local;
  prepare(in, angles, spec, work);

  const std::size_t n = in.voxels();
  const int cin = in.channels();
  const int k = spec.k;
  Tensor<T> out(out_channels, in.shape());
  // Contraction order is tap-major, then input channel.
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_channels; ++co) {
    T* o = out.channel(co).data();
    std::fill(o, o + n, b.empty() ? T(0) : b[co]);
    for (int t = 0; t < k; ++t)
      for (int ci = 0; ci < cin; ++ci) {
        const T wv = w[(static_cast<std::size_t>(co) * cin + ci) * k + t];
        const T* src = work.samples.data() + (static_cast<std::size_t>(t) * cin + ci) * n;
        for (std::size_t v = 0; v < n; ++v) o[v] += wv * src[v];
      }
  }
  return out;
}

template <typename T>
void daconv_backward(const Tensor<T>& in, const Tensor<T>& angles, std::span<const T> w, int out_channels,
                     const KernelSpec& spec, const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_angles,
                     std::span<T> grad_w, std::span<T> grad_b, DaconvWorkspace<T>* ws) {
  check_daconv_args(in.shape(), in.channels(), angles.shape(), angles.channels(), w.size(), grad_b.size(),
                    out_channels, spec);
  if (grad_out.shape() != in.shape() || grad_out.channels() != out_channels) {
    throw std::invalid_argument("daconv_backward: grad_out shape mismatch");
  }
  const Shape3 s = in.shape();
  const std::size_t n = s.voxels();
  const int cin = in.channels();
  const int k = spec.k;

  DaconvWorkspace<T> local;
  DaconvWorkspace<T>* work = ws;
  if (!work || !work->matches(s, cin, k)) {
    prepare(in, angles, spec, local);
    work = &local;
  }

  if (!grad_b.empty()) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_channels; ++co) {
      double acc = 0;
      for (T g : grad_out.channel(co)) acc += g;
      grad_b[co] += static_cast<T>(acc);
    }
  }

#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_channels; ++co) {
    const T* go = grad_out.channel(co).data();
    for (int t = 0; t < k; ++t)
      for (int ci = 0; ci < cin; ++ci) {
        const T* src = work->samples.data() + (static_cast<std::size_t>(t) * cin + ci) * n;
        double acc = 0;
        for (std::size_t v0 = 0; v0 < n; v0 += 1024) {
          const std::size_t v1 = std::min(n, v0 + 1024);
          T part = 0;
          for (std::size_t v = v0; v < v1; ++v) part += go[v] * src[v];
          acc += part;
        }
        grad_w[(static_cast<std::size_t>(co) * cin + ci) * k + t] += static_cast<T>(acc);
      }
  }

  if (!grad_in && !grad_angles) return;

  // Gradient with respect to every gathered sample, [tap][in][voxel].
  std::vector<T> grad_samples(static_cast<std::size_t>(k) * cin * n);
  const int rows = k * cin;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int t = r / cin, ci = r % cin;
    T* g = grad_samples.data() + static_cast<std::size_t>(r) * n;
    for (int co = 0; co < out_channels; ++co) {
      const T wv = w[(static_cast<std::size_t>(co) * cin + ci) * k + t];
      const T* go = grad_out.channel(co).data();
      for (std::size_t v = 0; v < n; ++v) g[v] += wv * go[v];
    }
  }

  if (grad_in) {
    *grad_in = Tensor<T>(cin, s);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
      T* gi = grad_in->channel(ci).data();
      for (int t = 0; t < k; ++t) {
        const TrilinearStencil<T>* st = work->stencils.data() + static_cast<std::size_t>(t) * n;
        const T* g = grad_samples.data() + (static_cast<std::size_t>(t) * cin + ci) * n;
        for (std::size_t v = 0; v < n; ++v) {
          const T gv = g[v];
          for (int j = 0; j < 8; ++j) gi[st[v].offset[j]] += st[v].weight[j] * gv;
        }
      }
    }
  }

  if (grad_angles) {
    *grad_angles = Tensor<T>(4, s);
#pragma omp parallel for schedule(static)
    for (int z = 0; z < s.d; ++z)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const std::size_t v = s.index(z, y, x);
          T acc[4] = {};
          for (int t = 0; t < k; ++t) {
            const int c = t - spec.half();
            if (c == 0) continue;
            const TrilinearStencil<T>& st = work->stencils[static_cast<std::size_t>(t) * n + v];
            Point3<T> dpos{};
            for (int ci = 0; ci < cin; ++ci) {
              const T g = grad_samples[(static_cast<std::size_t>(t) * cin + ci) * n + v];
              const Point3<T> cg = st.coord_grad(in.channel(ci).data());
              dpos.z += g * cg.z;
              dpos.y += g * cg.y;
              dpos.x += g * cg.x;
            }
            T a{}, b{};
            arm_angles(angles, v, c, a, b);
            Point3<T> da, db;
            tap_position(spec, z, y, x, c, a, b, &da, &db);
            const int first = c < 0 ? 0 : 2;
            acc[first] += dpos.z * da.z + dpos.y * da.y + dpos.x * da.x;
            acc[first + 1] += dpos.z * db.z + dpos.y * db.y + dpos.x * db.x;
          }
          for (int j = 0; j < 4; ++j) (*grad_angles)[j * n + v] = acc[j];
        }
  }
}

}  // namespace parallel

#define TFE_INSTANTIATE_DACONV(T)                                                                                  \
  template Tensor<T> serial::daconv_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,             \
                                               std::span<const T>, int, const KernelSpec&);                        \
  template void serial::daconv_backward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int,            \
                                           const KernelSpec&, const Tensor<T>&, Tensor<T>*, Tensor<T>*,            \
                                           std::span<T>, std::span<T>);                                            \
  template Tensor<T> parallel::daconv_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,           \
                                                 std::span<const T>, int, const KernelSpec&, DaconvWorkspace<T>*); \
  template void parallel::daconv_backward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int,          \
                                             const KernelSpec&, const Tensor<T>&, Tensor<T>*, Tensor<T>*,          \
                                             std::span<T>, std::span<T>, DaconvWorkspace<T>*);

TFE_INSTANTIATE_DACONV(float)
TFE_INSTANTIATE_DACONV(double)

}  // namespace tfe::kernels
