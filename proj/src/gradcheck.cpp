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


#include "tfe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tfe/layers.hpp"
#include "tfe/losses.hpp"
#include "tfe/model.hpp"
#include "tfe/ops.hpp"

namespace tfe {

double gradient_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient_rel_error: size mismatch");
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(std::max(na, nn)), kGradientNormFloor});
  return std::sqrt(diff) / scale;
}

std::vector<double> numeric_gradient(std::vector<double>& values, const std::function<double()>& loss, double h) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = loss();
    values[i] = keep - h;
    const double down = loss();
    values[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

namespace {

using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

struct Suite {
  const GradCheckOptions& opts;
  Rng rng;
  std::vector<GradCheckEntry> out;

  Tensor<double> random(int c, Shape3 s, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(c, s);
    for (auto& v : t.values()) v = u(rng);
    return t;
  }

  void record(const std::string& op, const std::string& wrt, std::span<const double> analytic,
              std::span<const double> numeric) {
    GradCheckEntry e;
    e.op = op;
    e.wrt = wrt;
    e.rel_error = gradient_rel_error(analytic, numeric);
    e.tolerance = opts.tolerance;
    e.elements = analytic.size();
    e.pass = std::isfinite(e.rel_error) && e.rel_error < opts.tolerance;
    out.push_back(e);
  }

  // Checks L = sum(r * f(x)) with respect to x and every entry of `store`.
  void check(const std::string& op, Tensor<double> x, const Fn& forward, const Fn& backward,
             ParamStore<double>* store = nullptr) {
    const Tensor<double> y0 = forward(x);
    const Tensor<double> r = random(y0.channels(), y0.shape());
    auto loss = [&] {
      const Tensor<double> y = forward(x);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
      return s;
    };
    if (store) store->zero_grad();
    forward(x);
    const Tensor<double> gx = backward(r);
    std::vector<std::vector<double>> param_grads;
    if (store) {
      for (std::size_t i = 0; i < store->size(); ++i) param_grads.push_back((*store)[i].grad);
    }
    record(op, "input", gx.values(), numeric_gradient(x.values(), loss, opts.step));
    if (!store) return;
    for (std::size_t i = 0; i < store->size(); ++i) {
      auto& p = (*store)[i];
      record(op, p.name, param_grads[i], numeric_gradient(p.value, loss, opts.step));
    }
  }

  void randomize(ParamStore<double>& store, double sigma) {
    std::normal_distribution<double> n(0, sigma);
    for (std::size_t i = 0; i < store.size(); ++i) {
      for (auto& v : store[i].value) v += n(rng);
    }
  }
};

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckOptions& opts) {
  Suite s{opts, Rng(opts.seed), {}};

  {
    ParamStore<double> store;
    Conv3dLayer<double> conv(store, "conv", 2, 3, kernels::ConvParams::cube(3), s.rng);
    s.randomize(store, 0.1);
    s.check("conv3d", s.random(2, {6, 6, 6}), [&](const Tensor<double>& x) { return conv.forward(x); },
            [&](const Tensor<double>& g) { return conv.backward(g); }, &store);
  }
  {
    ParamStore<double> store;
    InstanceNormLayer<double> norm(store, "norm", 2);
    s.randomize(store, 0.5);
    s.check("instance_norm", s.random(2, {4, 4, 4}), [&](const Tensor<double>& x) { return norm.forward(x); },
            [&](const Tensor<double>& g) { return norm.backward(g); }, &store);
  }
  {
    Tensor<double> cache;
    s.check("relu", s.random(2, {3, 3, 3}),
            [&](const Tensor<double>& x) { return cache = ops::relu_forward(x); },
            [&](const Tensor<double>& g) { return ops::relu_backward(cache, g); });
    s.check("tanh", s.random(2, {3, 3, 3}), [&](const Tensor<double>& x) { return cache = ops::tanh_forward(x); },
            [&](const Tensor<double>& g) { return ops::tanh_backward(cache, g); });
    s.check("sigmoid", s.random(2, {3, 3, 3}),
            [&](const Tensor<double>& x) { return cache = ops::sigmoid_forward(x); },
            [&](const Tensor<double>& g) { return ops::sigmoid_backward(cache, g); });
  }
  {
    std::vector<std::uint32_t> argmax;
    const Shape3 in{4, 4, 6};
    s.check("maxpool2", s.random(2, in), [&](const Tensor<double>& x) { return ops::maxpool2_forward(x, &argmax); },
            [&](const Tensor<double>& g) { return ops::maxpool2_backward(in, argmax, g); });
    const Shape3 small{3, 2, 3};
    s.check("upsample2", s.random(2, small), [&](const Tensor<double>& x) { return ops::upsample2_forward(x); },
            [&](const Tensor<double>& g) { return ops::upsample2_backward(small, g); });
  }
  {
    ParamStore<double> store;
    AngleHead<double> head(store, "head", 2, std::numbers::pi / 4, 1.0, s.rng);
    s.randomize(store, 0.3);
    s.check("angle_head", s.random(2, {5, 5, 5}), [&](const Tensor<double>& x) { return head.forward(x); },
            [&](const Tensor<double>& g) { return head.backward(g); }, &store);
  }
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
    ParamStore<double> store;
    DAConvLayer<double> da(store, "daconv", 2, 2, KernelSpec{axis, 5, 1, std::numbers::pi / 4}, 1.0, s.rng);
    s.randomize(store, 0.3);
    s.check(std::string("daconv_") + axis_name(axis), s.random(2, {5, 5, 5}),
            [&](const Tensor<double>& x) { return da.forward(x); },
            [&](const Tensor<double>& g) { return da.backward(g); }, &store);
  }
  {
    ParamStore<double> store;
    TffmBlock<double> block(store, "tffm", 2, 2, 5, std::numbers::pi / 4, 1.0, s.rng);
    s.randomize(store, 0.3);
    s.check("tffm", s.random(2, {6, 6, 6}), [&](const Tensor<double>& x) { return block.forward(x); },
            [&](const Tensor<double>& g) { return block.backward(g); }, &store);
  }
  {
    ParamStore<double> store;
    ResConvBlock<double> block(store, "resconv", 2, 2, s.rng);
    s.randomize(store, 0.3);
    s.check("resconv", s.random(2, {4, 4, 4}), [&](const Tensor<double>& x) { return block.forward(x); },
            [&](const Tensor<double>& g) { return block.backward(g); }, &store);
  }
  {
    const Shape3 sh{4, 4, 4};
    Tensor<double> gt(1, sh), w = s.random(1, sh, 0.05, 1.0);
    std::bernoulli_distribution coin(0.4);
    for (auto& v : gt.values()) v = coin(s.rng) ? 1.0 : 0.0;
    const GulParams gp{0.3, 0.7};
    const TverskyParams tp{0.3, 0.7};
    for (int which = 0; which < 2; ++which) {
      Tensor<double> pred = s.random(1, sh, 0.05, 0.95);
      auto value = [&] {
        return which == 0 ? gul_loss(pred, gt, w, gp).value : tversky_loss(pred, gt, tp).value;
      };
      const auto res = which == 0 ? gul_loss(pred, gt, w, gp) : tversky_loss(pred, gt, tp);
      s.record(which == 0 ? "gul" : "tversky", "pred", res.grad.values(),
               numeric_gradient(pred.values(), value, opts.step));
    }
  }
  {
    TfeNetConfig cfg;
    cfg.levels = 3;
    cfg.widths = {2, 2, 3};
    cfg.k = 3;
    cfg.aux_heads = 1;
    cfg.init_seed = opts.seed;
    TfeNet<double> net(cfg);
    auto& store = net.params();
    s.randomize(store, 0.2);
    const Tensor<double> x = s.random(1, {4, 4, 4});
    const Tensor<double> prob0 = net.forward(x);
    const Tensor<double> r = s.random(1, prob0.shape());
    std::vector<Tensor<double>> raux;
    for (const auto& a : net.aux_outputs()) raux.push_back(s.random(a.channels(), a.shape()));
    auto loss = [&] {
      const Tensor<double> y = net.forward(x);
      double v = 0;
      for (std::size_t i = 0; i < y.size(); ++i) v += r[i] * y[i];
      for (std::size_t a = 0; a < raux.size(); ++a) {
        for (std::size_t i = 0; i < raux[a].size(); ++i) v += raux[a][i] * net.aux_outputs()[a][i];
      }
      return v;
    };
    store.zero_grad();
    net.forward(x);
    net.backward(r, raux);
    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store[i];
      analytic.insert(analytic.end(), p.grad.begin(), p.grad.end());
      const auto n = numeric_gradient(p.value, loss, opts.step);
      numeric.insert(numeric.end(), n.begin(), n.end());
    }
    s.record("tfenet", "parameters", analytic, numeric);
  }
  return std::move(s.out);
}

}  // namespace tfe
