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


#include "tfe/inference.hpp"

#include <stdexcept>

#include "tfe/components.hpp"
#include "tfe/trainer.hpp"

namespace tfe {

std::string to_string(FusionMode m) { return m == FusionMode::Union ? "union" : "mean"; }

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "union") return FusionMode::Union;
  if (s == "mean") return FusionMode::Mean;
  throw std::invalid_argument("unknown fusion mode '" + s + "' (expected union or mean)");
}

void InferenceConfig::validate(int multiple) const {
  const int p[3] = {patch.d, patch.h, patch.w};
  const int s[3] = {stride.d, stride.h, stride.w};
  for (int a = 0; a < 3; ++a) {
    if (p[a] <= 0 || p[a] % multiple) {
      throw std::invalid_argument("inference patch " + to_string(patch) + " must be a positive multiple of " +
                                  std::to_string(multiple));
    }
    if (s[a] <= 0 || s[a] > p[a]) throw std::invalid_argument("inference stride must lie in (0, patch]");
  }
  if (!(threshold >= 0 && threshold <= 1)) throw std::invalid_argument("threshold must lie in [0, 1]");
}

nlohmann::json to_json(const InferenceConfig& c) {
  return {{"patch", {c.patch.d, c.patch.h, c.patch.w}},
          {"stride", {c.stride.d, c.stride.h, c.stride.w}},
          {"threshold", c.threshold},
          {"fusion", to_string(c.fusion)},
          {"keep_largest", c.keep_largest},
          {"fill_holes", c.fill_holes}};
}

InferenceConfig inference_config_from_json(const nlohmann::json& j, InferenceConfig c) {
  auto shape = [](const nlohmann::json& v) { return Shape3{v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<int>()}; };
  if (j.contains("patch")) c.patch = shape(j.at("patch"));
  if (j.contains("stride")) c.stride = shape(j.at("stride"));
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("fusion")) c.fusion = fusion_mode_from_string(j.at("fusion").get<std::string>());
  c.keep_largest = j.value("keep_largest", c.keep_largest);
  c.fill_holes = j.value("fill_holes", c.fill_holes);
  return c;
}

std::vector<int> window_starts(int n, int patch, int stride) {
  std::vector<int> out;
  if (n <= patch) return {0};
  for (int s = 0; s + patch < n; s += stride) out.push_back(s);
  out.push_back(n - patch);
  return out;
}

namespace {

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor<float> reflect_pad(const Tensor<float>& t, const Shape3& min_shape) {
  const Shape3 s = t.shape();
  const Shape3 o{std::max(s.d, min_shape.d), std::max(s.h, min_shape.h), std::max(s.w, min_shape.w)};
  if (o == s) return t;
  Tensor<float> out(t.channels(), o);
  for (int c = 0; c < t.channels(); ++c)
    for (int z = 0; z < o.d; ++z)
      for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x) out(c, z, y, x) = t(c, mirror(z, s.d), mirror(y, s.h), mirror(x, s.w));
  return out;
}

Tensor<float> sliding_window(const Tensor<float>& image, const InferenceConfig& cfg, const PatchPredictor& predict) {
  cfg.validate();
  if (image.channels() != 1) throw std::invalid_argument("sliding_window: expected a single-channel image");
  const Shape3 orig = image.shape();
  if (orig.voxels() == 0) throw std::invalid_argument("sliding_window: empty image");
  const Tensor<float> padded = reflect_pad(image, cfg.patch);
  const Shape3 s = padded.shape();
  const Shape3 p = cfg.patch;

  Tensor<double> sum(1, s);
  std::vector<std::uint32_t> cover(s.voxels(), 0);
  Tensor<float> in(1, p);
  for (int z0 : window_starts(s.d, p.d, cfg.stride.d))
    for (int y0 : window_starts(s.h, p.h, cfg.stride.h))
      for (int x0 : window_starts(s.w, p.w, cfg.stride.w)) {
        for (int z = 0; z < p.d; ++z)
          for (int y = 0; y < p.h; ++y)
            for (int x = 0; x < p.w; ++x) in(0, z, y, x) = padded(0, z0 + z, y0 + y, x0 + x);
        const Tensor<float> out = predict(in);
        if (!(out.shape() == p) || out.channels() < 1) {
          throw std::runtime_error("sliding_window: predictor returned shape " + to_string(out.shape()));
        }
        for (int z = 0; z < p.d; ++z)
          for (int y = 0; y < p.h; ++y)
            for (int x = 0; x < p.w; ++x) {
              const std::size_t i = s.index(z0 + z, y0 + y, x0 + x);
              sum[i] += out(0, z, y, x);
              ++cover[i];
            }
      }

  Tensor<float> prob(1, orig);
  for (int z = 0; z < orig.d; ++z)
    for (int y = 0; y < orig.h; ++y)
      for (int x = 0; x < orig.w; ++x) {
        const std::size_t i = s.index(z, y, x);
        prob(0, z, y, x) = static_cast<float>(sum[i] / cover[i]);
      }
  return prob;
}

Volume sliding_window_predict(const Volume& raw, TfeNet<float>& model, const InferenceConfig& cfg) {
  cfg.validate(model.config().required_multiple());
  if (raw.channels() != 1) throw std::invalid_argument("sliding_window_predict: expected a single-channel volume");
  Tensor<float> image(1, raw.shape());
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = normalize_hu(raw.values[i]);
  Volume out;
  out.spacing = raw.spacing;
  out.values = sliding_window(image, cfg, [&](const Tensor<float>& patch) { return model.forward(patch); });
  return out;
}

Mask fuse_two_stage(const Tensor<float>& prob1, const Tensor<float>& prob2, FusionMode mode, float t) {
  if (!(prob1.shape() == prob2.shape())) {
    throw std::invalid_argument("fuse_two_stage: shapes " + to_string(prob1.shape()) + " and " +
                                to_string(prob2.shape()) + " differ");
  }
  Mask out(prob1.shape());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const bool on = mode == FusionMode::Union ? (prob1[i] > t || prob2[i] > t) : (0.5f * (prob1[i] + prob2[i]) > t);
    out.data[i] = on ? 1 : 0;
  }
  return out;
}

Postprocessed postprocess(const Mask& mask, bool keep_largest, bool fill) {
  Postprocessed r;
  r.mask = keep_largest ? largest_component(mask) : mask;
  if (fill) r.mask = fill_holes(r.mask);
  r.mask.spacing = mask.spacing;
  r.empty = r.mask.count() == 0;
  return r;
}

}  // namespace tfe
