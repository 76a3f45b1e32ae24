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

#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "tfe/model.hpp"
#include "tfe/volume.hpp"

namespace tfe {

enum class FusionMode { Union, Mean };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

struct InferenceConfig {
  Shape3 patch{32, 32, 32};
  Shape3 stride{16, 16, 16};
  float threshold = 0.5f;
  FusionMode fusion = FusionMode::Union;
  bool keep_largest = true;
  bool fill_holes = true;

  /// Throws invalid_argument unless 0 < stride <= patch on every axis and the
  /// patch is a multiple of `multiple`.
  void validate(int multiple = 1) const;
};

nlohmann::json to_json(const InferenceConfig& c);
InferenceConfig inference_config_from_json(const nlohmann::json& j, InferenceConfig base = {});

/// Maps one single-channel patch to a probability patch of the same shape.
using PatchPredictor = std::function<Tensor<float>(const Tensor<float>&)>;

/// Window corners along one axis of extent n: 0, stride, 2*stride, ... and a
/// final window flush with the far border.
std::vector<int> window_starts(int n, int patch, int stride);

/// Mirror-pads (without repeating the edge voxel) up to at least `min_shape`.
Tensor<float> reflect_pad(const Tensor<float>& t, const Shape3& min_shape);

/// Uniform average of overlapping window predictions over an already
/// normalized image. Axes shorter than the patch are reflect-padded and the
/// result cropped back.
Tensor<float> sliding_window(const Tensor<float>& image, const InferenceConfig& cfg, const PatchPredictor& predict);

/// Normalizes a raw HU volume and runs the network over it.
Volume sliding_window_predict(const Volume& raw, TfeNet<float>& model, const InferenceConfig& cfg);

Mask fuse_two_stage(const Tensor<float>& prob1, const Tensor<float>& prob2, FusionMode mode, float threshold);

struct Postprocessed {
  Mask mask;
  bool empty = false;  ///< set when there was nothing to keep
};

/// Largest 26-connected component, then hole filling.
Postprocessed postprocess(const Mask& mask, bool keep_largest = true, bool fill = true);

}  // namespace tfe
