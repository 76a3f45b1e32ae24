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


#include "tfe/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tfe {

namespace {
// The root term's derivative is evaluated at no less than this prediction;
// p^(root-1) diverges at 0.
constexpr double kRootFloor = 1e-7;

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape() || a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
}  // namespace

void GulParams::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("GUL alpha must lie in (0, 1)");
  if (!(root > 0 && root <= 1)) throw std::invalid_argument("GUL root must lie in (0, 1]");
}

void LibParams::validate() const {
  if (!(lambda >= 0 && lambda <= 1)) throw std::invalid_argument("LIB lambda must lie in [0, 1]");
  if (!(r >= 2 && r <= 3)) throw std::invalid_argument("LIB exponent must lie in [2, 3]");
  if (window < 1) throw std::invalid_argument("LIB window must be >= 1");
}

void TverskyParams::validate() const {
  if (!(alpha >= 0 && beta >= 0) || std::abs(alpha + beta - 1.0) > 1e-12) {
    throw std::invalid_argument("Tversky alpha and beta must be non-negative and sum to 1");
  }
}

Tensor<double> foreground_ratio(const Mask& mask, int window) {
  if (window < 1) throw std::invalid_argument("foreground_ratio: window must be >= 1");
  const Shape3 s = mask.shape;
  // Summed-volume table with a zero guard plane on each low face.
  const int D = s.d + 1, H = s.h + 1, W = s.w + 1;
  std::vector<double> sat(static_cast<std::size_t>(D) * H * W, 0.0);
  auto at = [&](int z, int y, int x) -> double& { return sat[(static_cast<std::size_t>(z) * H + y) * W + x]; };
  for (int z = 1; z < D; ++z)
    for (int y = 1; y < H; ++y)
      for (int x = 1; x < W; ++x) {
        at(z, y, x) = (mask.at(z - 1, y - 1, x - 1) ? 1.0 : 0.0) + at(z - 1, y, x) + at(z, y - 1, x) + at(z, y, x - 1) -
                      at(z - 1, y - 1, x) - at(z - 1, y, x - 1) - at(z, y - 1, x - 1) + at(z - 1, y - 1, x - 1);
      }
  const int before = window / 2;
  const int after = window - 1 - before;
  Tensor<double> fr(1, s);
  for (int z = 0; z < s.d; ++z) {
    const int z0 = std::max(0, z - before), z1 = std::min(s.d - 1, z + after) + 1;
    for (int y = 0; y < s.h; ++y) {
      const int y0 = std::max(0, y - before), y1 = std::min(s.h - 1, y + after) + 1;
      for (int x = 0; x < s.w; ++x) {
        const int x0 = std::max(0, x - before), x1 = std::min(s.w - 1, x + after) + 1;
        const double sum = at(z1, y1, x1) - at(z0, y1, x1) - at(z1, y0, x1) - at(z1, y1, x0) + at(z0, y0, x1) +
                           at(z0, y1, x0) + at(z1, y0, x0) - at(z0, y0, x0);
        const double n = static_cast<double>(z1 - z0) * (y1 - y0) * (x1 - x0);
        fr(0, z, y, x) = sum / n;
      }
    }
  }
  return fr;
}

double lib_weight(double fr, const LibParams& p) {
  const double term = fr < 1e-10 ? 1.0 : std::min(-std::log10(fr), 1.0);
  return (1.0 - p.lambda) * std::pow(std::max(term, 0.0), p.r) + p.lambda;
}

Tensor<double> lib_weights(const Tensor<double>& fr, const LibParams& p) {
  p.validate();
  Tensor<double> w(fr.channels(), fr.shape());
  for (std::size_t i = 0; i < fr.size(); ++i) w[i] = lib_weight(fr[i], p);
  return w;
}

template <typename T>
LossResult<T> gul_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& weights, const GulParams& p) {
  p.validate();
  check_same(pred, gt, "gul_loss");
  check_same(pred, weights, "gul_loss");
  const double alpha = p.alpha, beta = 1.0 - p.alpha, r = p.root;
  const std::size_t n = pred.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = pred[i], gi = gt[i], wi = weights[i];
    num += wi * std::pow(std::max(pi, 0.0), r) * gi;
    den += wi * (alpha * pi + beta * gi);
  }
  LossResult<T> out;
  out.grad = Tensor<T>(pred.channels(), pred.shape());
  if (den <= 0) return out;
  out.value = 1.0 - num / den;
  const double inv_d2 = 1.0 / (den * den);
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = pred[i], gi = gt[i], wi = weights[i];
    const double dnum = wi * r * std::pow(std::max(pi, kRootFloor), r - 1.0) * gi;
    const double dden = wi * alpha;
    out.grad[i] = static_cast<T>(-(dnum * den - num * dden) * inv_d2);
  }
  return out;
}

template <typename T>
LossResult<T> tversky_loss(const Tensor<T>& pred, const Tensor<T>& gt, const TverskyParams& p) {
  p.validate();
  check_same(pred, gt, "tversky_loss");
  const std::size_t n = pred.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += static_cast<double>(pred[i]) * gt[i];
    den += p.alpha * pred[i] + p.beta * gt[i];
  }
  LossResult<T> out;
  out.grad = Tensor<T>(pred.channels(), pred.shape());
  if (den <= 0) return out;
  out.value = 1.0 - num / den;
  const double inv_d2 = 1.0 / (den * den);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad[i] = static_cast<T>(-(static_cast<double>(gt[i]) * den - num * p.alpha) * inv_d2);
  }
  return out;
}

template LossResult<float> gul_loss<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                           const GulParams&);
template LossResult<double> gul_loss<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const GulParams&);
template LossResult<float> tversky_loss<float>(const Tensor<float>&, const Tensor<float>&, const TverskyParams&);
template LossResult<double> tversky_loss<double>(const Tensor<double>&, const Tensor<double>&, const TverskyParams&);

}  // namespace tfe
