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


#include <doctest.h>

#include <omp.h>

#include "helpers.hpp"
#include "tfe/layers.hpp"

using namespace tfe;
using tfe::testing::max_abs_diff;
using tfe::testing::random_tensor;

namespace {

struct BackendGuard {
  KernelBackend saved = kernel_backend();
  explicit BackendGuard(KernelBackend b) { set_kernel_backend(b); }
  ~BackendGuard() { set_kernel_backend(saved); }
};

// Output of a rotated linear kernel computed tap by tap.
Tensor<double> daconv_oracle(const Tensor<double>& in, const Tensor<double>& angles, const std::vector<double>& w,
                             const std::vector<double>& b, int out_ch, const KernelSpec& spec) {
  const Shape3 s = in.shape();
  Tensor<double> out(out_ch, s);
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const Angles a{angles(0, z, y, x), angles(1, z, y, x), angles(2, z, y, x), angles(3, z, y, x)};
        const auto pos = sampling_positions({double(z), double(y), double(x)}, spec, a);
        for (int o = 0; o < out_ch; ++o) {
          double acc = b[o];
          for (int i = 0; i < in.channels(); ++i)
            for (int t = 0; t < spec.k; ++t)
              acc += w[(o * in.channels() + i) * spec.k + t] *
                     tfe::testing::lerp_sample(in, i, pos[t].z, pos[t].y, pos[t].x);
          out(o, z, y, x) = acc;
        }
      }
  return out;
}

}  // namespace

TEST_CASE("conv3d: identity and box responses") {
  std::mt19937_64 rng(21);
  auto x = random_tensor<double>(2, {4, 5, 6}, rng);
  const auto p1 = kernels::ConvParams::cube(1);
  const std::vector<double> id{1, 0, 0, 1}, zero(2, 0.0);
  CHECK(max_abs_diff(kernels::serial::conv3d_forward<double>(x, id, zero, 2, p1), x) == 0.0);

  Tensor<double> impulse(1, {7, 7, 7});
  impulse(0, 3, 3, 3) = 1;
  const std::vector<double> ones(27, 1.0), b0{0.0};
  const auto r = kernels::serial::conv3d_forward<double>(impulse, ones, b0, 1, kernels::ConvParams::cube(3));
  for (int z = 0; z < 7; ++z)
    for (int y = 0; y < 7; ++y)
      for (int xx = 0; xx < 7; ++xx) {
        const bool inside = std::abs(z - 3) <= 1 && std::abs(y - 3) <= 1 && std::abs(xx - 3) <= 1;
        CHECK(r(0, z, y, xx) == (inside ? 1.0 : 0.0));
      }
  CHECK_THROWS_AS(kernels::serial::conv3d_forward<double>(x, ones, b0, 1, kernels::ConvParams::cube(3)),
                  std::invalid_argument);
}

TEST_CASE("conv3d and daconv kernels: parallel matches serial") {
  std::mt19937_64 rng(22);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  auto x = random_tensor<double>(3, {6, 5, 7}, rng);
  const auto p = kernels::ConvParams::cube(3);
  auto w = random_tensor<double>(1, {2 * 3 * 27, 1, 1}, rng).values();
  auto b = random_tensor<double>(1, {2, 1, 1}, rng).values();
  const auto ys = kernels::serial::conv3d_forward<double>(x, w, b, 2, p);
  const auto yp = kernels::parallel::conv3d_forward<double>(x, w, b, 2, p);
  CHECK(max_abs_diff(ys, yp) < 1e-13);
  auto g = random_tensor<double>(2, ys.shape(), rng);
  Tensor<double> gis, gip;
  std::vector<double> gws(w.size()), gwp(w.size()), gbs(2), gbp(2);
  kernels::serial::conv3d_backward<double>(x, w, 2, p, g, &gis, gws, gbs);
  kernels::parallel::conv3d_backward<double>(x, w, 2, p, g, &gip, gwp, gbp);
  CHECK(max_abs_diff(gis, gip) < 1e-12);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(gws[i] - gwp[i]) < 1e-11);

  const KernelSpec spec{Axis::Y, 5, 1};
  auto angles = random_tensor<double>(4, x.shape(), rng, -spec.q, spec.q);
  auto dw = random_tensor<double>(1, {2 * 3 * 5, 1, 1}, rng).values();
  const auto ds = kernels::serial::daconv_forward<double>(x, angles, dw, b, 2, spec);
  const auto dp = kernels::parallel::daconv_forward<double>(x, angles, dw, b, 2, spec);
  CHECK(max_abs_diff(ds, dp) < 1e-13);
  Tensor<double> ias, iap, aas, aap;
  std::vector<double> dws(dw.size()), dwp(dw.size()), dbs(2), dbp(2);
  kernels::serial::daconv_backward<double>(x, angles, dw, 2, spec, g, &ias, &aas, dws, dbs);
  kernels::parallel::daconv_backward<double>(x, angles, dw, 2, spec, g, &iap, &aap, dwp, dbp);
  CHECK(max_abs_diff(ias, iap) < 1e-12);
  CHECK(max_abs_diff(aas, aap) < 1e-12);
  for (std::size_t i = 0; i < dw.size(); ++i) CHECK(std::abs(dws[i] - dwp[i]) < 1e-11);
  omp_set_num_threads(saved);
}

TEST_CASE("daconv forward matches a tap-by-tap oracle") {
  std::mt19937_64 rng(23);
  for (Axis ax : {Axis::X, Axis::Y, Axis::Z}) {
    const KernelSpec spec{ax, 5, 1};
    auto x = random_tensor<double>(2, {5, 6, 4}, rng);
    auto angles = random_tensor<double>(4, x.shape(), rng, -spec.q, spec.q);
    auto w = random_tensor<double>(1, {3 * 2 * 5, 1, 1}, rng).values();
    auto b = random_tensor<double>(1, {3, 1, 1}, rng).values();
    const auto y = kernels::parallel::daconv_forward<double>(x, angles, w, b, 3, spec);
    CHECK(max_abs_diff(y, daconv_oracle(x, angles, w, b, 3, spec)) < 1e-12);
  }
}

TEST_CASE("daconv with zero angles equals a dense axis-aligned linear convolution") {
  std::mt19937_64 rng(24);
  for (Axis ax : {Axis::X, Axis::Y, Axis::Z}) {
    const KernelSpec spec{ax, 7, 1};
    auto x = random_tensor<double>(2, {6, 5, 7}, rng);
    auto w = random_tensor<double>(1, {2 * 2 * 7, 1, 1}, rng).values();
    auto b = random_tensor<double>(1, {2, 1, 1}, rng).values();
    const Tensor<double> zero(4, x.shape());
    const auto y = kernels::parallel::daconv_forward<double>(x, zero, w, b, 2, spec);
    // Straight k-tap correlation with edge replication, written directly.
    const Shape3 s = x.shape();
    double worst = 0;
    for (int o = 0; o < 2; ++o)
      for (int z = 0; z < s.d; ++z)
        for (int yy = 0; yy < s.h; ++yy)
          for (int xx = 0; xx < s.w; ++xx) {
            double acc = b[o];
            for (int i = 0; i < 2; ++i)
              for (int t = 0; t < 7; ++t) {
                int c[3] = {z, yy, xx};
                const int a = ax == Axis::Z ? 0 : (ax == Axis::Y ? 1 : 2);
                const int n[3] = {s.d, s.h, s.w};
                c[a] = std::clamp(c[a] + t - 3, 0, n[a] - 1);
                acc += w[(o * 2 + i) * 7 + t] * x(i, c[0], c[1], c[2]);
              }
            worst = std::max(worst, std::abs(acc - y(o, z, yy, xx)));
          }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("daconv with a single tap is a pointwise convolution") {
  std::mt19937_64 rng(25);
  const KernelSpec spec{Axis::X, 1, 1};
  auto x = random_tensor<double>(2, {3, 4, 5}, rng);
  auto angles = random_tensor<double>(4, x.shape(), rng, -spec.q, spec.q);
  auto w = random_tensor<double>(1, {3 * 2, 1, 1}, rng).values();
  auto b = random_tensor<double>(1, {3, 1, 1}, rng).values();
  const auto y = kernels::serial::daconv_forward<double>(x, angles, w, b, 3, spec);
  const auto ref = kernels::serial::conv3d_forward<double>(x, w, b, 3, kernels::ConvParams::cube(1));
  CHECK(max_abs_diff(y, ref) < 1e-14);
}

TEST_CASE("angle head starts at zero and stays bounded") {
  std::mt19937_64 rng(26);
  ParamStore<double> store;
  Rng init(1);
  AngleHead<double> head(store, "h", 3, std::numbers::pi / 4, 0.1, init);
  auto x = random_tensor<double>(3, {5, 5, 5}, rng, -10, 10);
  const auto a0 = head.forward(x);
  for (double a : a0.values()) CHECK(a == 0.0);
  CHECK(store.get("h.conv.w").lr_mult == 0.1);

  for (std::size_t i = 0; i < store.size(); ++i)
    for (auto& v : store[i].value) v = std::uniform_real_distribution<double>(-50, 50)(rng);
  const auto a = head.forward(x);
  for (double v : a.values()) CHECK(std::abs(v) <= std::numbers::pi / 4);
  CHECK(a.channels() == 4);
}

TEST_CASE("instance norm") {
  std::mt19937_64 rng(27);
  const std::vector<double> scale{2.0, 0.5}, shift{-1.0, 3.0};
  Tensor<double> c(2, {3, 3, 3}, 7.0);
  const auto yc = ops::instance_norm_forward<double>(c, scale, shift);
  for (double v : yc.channel(1)) CHECK(v == 3.0);

  auto x = random_tensor<double>(2, {4, 4, 4}, rng, -5, 5);
  const auto y = ops::instance_norm_forward<double>(x, scale, shift);
  for (int ch = 0; ch < 2; ++ch) {
    double m = 0, v = 0;
    for (double e : y.channel(ch)) m += e / 64;
    for (double e : y.channel(ch)) v += (e - m) * (e - m) / 64;
    CHECK(m == doctest::Approx(shift[ch]).epsilon(1e-12));
    CHECK(v == doctest::Approx(scale[ch] * scale[ch]).epsilon(1e-4));
  }
  Tensor<double> single(1, {1, 1, 1}, 4.0);
  const std::vector<double> s1{1.0}, b1{0.0};
  CHECK(ops::instance_norm_forward<double>(single, s1, b1)[0] == 0.0);
}

TEST_CASE("relu, pooling and upsampling") {
  Tensor<double> x(1, {2, 2, 2});
  x[0] = -3, x[1] = 2;
  const auto r = ops::relu_forward(x);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);

  Tensor<double> c(2, {4, 6, 2}, 1.5);
  const auto u = ops::upsample2_forward(c);
  CHECK(u.shape() == Shape3{8, 12, 4});
  CHECK(max_abs_diff(ops::maxpool2_forward(u), c) == 0.0);

  CHECK_THROWS_AS(ops::maxpool2_forward(Tensor<double>(1, {3, 2, 2})), std::invalid_argument);

  Tensor<double> tie(1, {2, 2, 2}, 1.0);
  std::vector<std::uint32_t> arg;
  ops::maxpool2_forward(tie, &arg);
  CHECK(arg[0] == 0u);
  Tensor<double> g(1, {1, 1, 1}, 1.0);
  const auto gin = ops::maxpool2_backward({2, 2, 2}, arg, g);
  CHECK(gin[0] == 1.0);
  for (int i = 1; i < 8; ++i) CHECK(gin[i] == 0.0);
}

TEST_CASE("sgd with momentum") {
  ParamStore<double> s;
  auto& p = s.add("p", {3}, 0.5);
  p.value = {1, 2, 3};
  sgd_step(s, 0.1, 0.9);
  CHECK(p.value == std::vector<double>{1, 2, 3});

  p.grad = {1, -2, 4};
  sgd_step(s, 0.1, 0.9);
  CHECK(p.value[0] == doctest::Approx(1 - 0.1 * 0.5 * 1));
  CHECK(p.value[1] == doctest::Approx(2 + 0.1 * 0.5 * 2));
  for (double gr : p.grad) CHECK(gr == 0.0);

  ParamStore<double> t;
  auto& q = t.add("q", {1}, 2.0);
  q.value = {0};
  for (int i = 0; i < 2; ++i) {
    q.grad = {3.0};
    sgd_step(t, 0.01, 0.9);
  }
  CHECK(q.value[0] == doctest::Approx(-0.01 * 2.0 * 3.0 * (2 + 0.9)).epsilon(1e-14));

  CHECK_THROWS_AS(t.add("bad", {1}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(t.add("q", {1}), std::invalid_argument);
}

TEST_CASE("checkpoints round trip values, multipliers and metadata") {
  const auto dir = tfe::testing::scratch_dir("ckpt");
  ParamStore<float> a;
  a.add("w", {2, 3}, 0.1).value = {1, 2, 3, 4, 5, 6};
  a.add("b", {2}).value = {-1.5f, 0.25f};
  save_checkpoint(a, dir / "m.json", {{"note", "x"}});
  ParamStore<float> b;
  b.add("w", {2, 3});
  b.add("b", {2});
  const auto meta = load_checkpoint(b, dir / "m.json");
  CHECK(b.get("w").value == a.get("w").value);
  CHECK(b.get("b").value == a.get("b").value);
  CHECK(b.get("w").lr_mult == doctest::Approx(0.1));
  CHECK(meta.at("note") == "x");
  CHECK(read_checkpoint_metadata(dir / "m.json").at("note") == "x");

  ParamStore<float> c;
  c.add("w", {2, 3});
  c.add("missing", {1});
  CHECK_THROWS(load_checkpoint(c, dir / "m.json"));
}

TEST_CASE("layers give identical results on both kernel backends") {
  std::mt19937_64 rng(28);
  auto x = random_tensor<float>(2, {6, 6, 6}, rng);
  auto run = [&](KernelBackend be) {
    BackendGuard guard(be);
    ParamStore<float> store;
    Rng init(5);
    DAConvLayer<float> layer(store, "d", 2, 3, KernelSpec{Axis::Z, 5, 1}, 0.1, init);
    for (auto& v : store.get("d.head.conv.w").value) v = 0.05f;
    auto y = layer.forward(x);
    Tensor<float> g(3, y.shape(), 1.0f);
    auto gi = layer.backward(g);
    return std::make_pair(y, gi);
  };
  const auto [ys, gs] = run(KernelBackend::Serial);
  const auto [yp, gp] = run(KernelBackend::Parallel);
  CHECK(max_abs_diff(ys, yp) < 1e-5);
  CHECK(max_abs_diff(gs, gp) < 1e-4);
}
