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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfe/losses.hpp"
#include "tfe/model.hpp"
#include "tfe/volume.hpp"

namespace tfe {

inline constexpr float kHuMin = -1000.0f;
inline constexpr float kHuMax = 600.0f;

/// Half-open voxel box [lo, hi) in (z, y, x).
struct Roi {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};

  Shape3 shape() const { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
  bool empty() const { return hi[0] <= lo[0] || hi[1] <= lo[1] || hi[2] <= lo[2]; }
};

struct TrainCase {
  std::string id;
  Tensor<float> image;  // normalized to [0, 1]
  Mask label;
  std::vector<std::uint32_t> foreground;  // flat indices of label voxels
};

/// Clips to [kHuMin, kHuMax] and maps linearly onto [0, 1].
float normalize_hu(float hu);

/// Crops to `roi` (whole volume when absent), clips and normalizes.
TrainCase preprocess_case(const Volume& raw, const Mask& label, const std::optional<Roi>& roi = std::nullopt,
                          const std::string& id = {});

struct PatchOptions {
  Shape3 size{32, 32, 32};
  /// Probability that a draw is centred on a random foreground voxel.
  double foreground_bias = 0.5;
  LibParams lib{};
  double lib_r_min = 2.0;
  double lib_r_max = 3.0;
};

struct Patch {
  Tensor<float> image;
  Mask label;
  Tensor<float> weight;  // local-imbalance weights of the label patch
  std::array<int, 3> corner{};
  double lib_r = 0;
};

Patch sample_patch(const TrainCase& c, const PatchOptions& opts, std::mt19937_64& rng);

/// Quarter turns in the plane of two axes (0 = z, 1 = y, 2 = x), turning
/// axis `a` towards axis `b`.
Tensor<float> rot90(const Tensor<float>& t, int a, int b, int k);
Mask rot90(const Mask& m, int a, int b, int k);

struct Rotation {
  bool applied = false;
  int a = 0;
  int b = 1;
  int k = 0;
};

/// With probability 1 - threshold turns image, label and weight by the same
/// random multiple of 90 degrees in a random axis plane.
Rotation rotate_augment(Patch& p, double threshold, std::mt19937_64& rng);

enum class LossKind { Gul, Tversky };

struct StageConfig {
  std::string name = "output1";
  LossKind loss = LossKind::Gul;
  GulParams gul{0.05, 0.7};
  TverskyParams tversky{0.5, 0.5};
  double rotation_threshold = 0.7;
  int epochs = 12;
  double lr = 0.01;
  double momentum = 0.9;
  std::vector<int> decay_epochs{4, 8};
  double decay_factor = 0.1;
  int patches_per_case = 4;
  PatchOptions patch{};
  /// Loss weight of each auxiliary head relative to the main output.
  double aux_weight = 0.0;

  void validate(const TfeNetConfig& model) const;
  double lr_at(int epoch) const;
};

StageConfig stage1_defaults();
StageConfig stage2_defaults();

nlohmann::json to_json(const StageConfig& s);
StageConfig stage_config_from_json(const nlohmann::json& j, StageConfig base);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0;
  double lr = 0;
};

struct StageResult {
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(const StageConfig&, const EpochLog&)>;

/// Runs epochs x cases x patches_per_case SGD steps. Throws TrainingError on a
/// non-finite loss.
StageResult train_stage(const std::vector<TrainCase>& cases, TfeNet<float>& model, const StageConfig& stage,
                        std::mt19937_64& rng, const EpochCallback& on_epoch = {});

void write_loss_csv(const StageResult& r, const std::filesystem::path& path);

struct TwoStageConfig {
  TfeNetConfig model{};
  StageConfig stage1 = stage1_defaults();
  StageConfig stage2 = stage2_defaults();
  bool run_stage2 = true;
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const TwoStageConfig& c);
TwoStageConfig two_stage_config_from_json(const nlohmann::json& j, TwoStageConfig base = {});

struct TwoStageResult {
  std::filesystem::path checkpoint1;
  std::filesystem::path checkpoint2;  // empty when stage 2 is disabled
  StageResult stage1;
  StageResult stage2;
};

/// Trains stage 1 from scratch, then fine-tunes its weights with the stage-2
/// config. Writes output1.json/.bin, output2.json/.bin and per-stage loss
/// CSVs into `out_dir`.
TwoStageResult run_two_stage(const std::vector<TrainCase>& cases, const TwoStageConfig& cfg,
                             const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

/// Rebuilds a model from a checkpoint written by run_two_stage.
TfeNet<float> load_model(const std::filesystem::path& checkpoint);

}  // namespace tfe
