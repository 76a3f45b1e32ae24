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
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include "tfe/metrics.hpp"
#include "tfe/volume.hpp"

namespace tfe {

struct IntensityModel {
  float lumen = -950.0f;
  float wall = -200.0f;
  float background = 30.0f;
  float wall_thickness = 1.5f;
  float noise_sigma = 25.0f;
};

struct TreeSpec {
  int depth = 2;
  double root_radius = 4.0;
  double radius_decay = 0.8;
  double root_length = 18.0;
  /// Child length is uniform in [min, max] scaled by length_decay^(generation-1).
  double length_min = 12.0;
  double length_max = 16.0;
  double length_decay = 0.85;
  /// Half-angle between a child and its parent's direction, degrees.
  double angle_min = 25.0;
  double angle_max = 40.0;
  Shape3 shape{64, 64, 64};
  IntensityModel intensity{};
  int max_attempts = 200;

  void validate() const;
  double radius_at(int generation) const;
};

/// One straight tube of the generated tree; points in (z, y, x) voxels.
struct TreeSegment {
  std::array<double, 3> start{};
  std::array<double, 3> end{};
  double radius = 0;
  int generation = 0;
  int parent = -1;

  double length() const;
};

struct Phantom {
  Volume image;
  Mask label;
  std::vector<TreeSegment> segments;
  SkeletonGraph truth;
  std::size_t branch_count = 0;
  double tree_length = 0;
};

/// Rasterizes a random bifurcating tree of capsules. Throws invalid_argument
/// when no valid tree is found within spec.max_attempts draws.
Phantom generate_tree(const TreeSpec& spec, std::mt19937_64& rng);

/// Builds the phantom for a fixed list of segments (no randomness besides the
/// intensity noise drawn from `rng`).
Phantom rasterize_tree(const TreeSpec& spec, const std::vector<TreeSegment>& segments, std::mt19937_64& rng);

double capsule_volume(double radius, double length);

struct CorpusSpec {
  TreeSpec tree{};
  int depth_min = 2;
  int depth_max = 3;
  double root_radius_min = 3.5;
  double root_radius_max = 4.5;
};

struct CorpusCase {
  std::string id;
  std::string split;  // train | val | test
  std::filesystem::path image;
  std::filesystem::path label;
  std::filesystem::path truth;
  std::uint64_t seed = 0;
  int depth = 0;
  /// Optional crop box {z0, y0, x0, z1, y1, x1}, upper bounds exclusive.
  std::vector<int> roi;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::vector<CorpusCase> cases;

  std::vector<CorpusCase> split(const std::string& name) const;
};

/// Train/val/test counts for `n` cases (60/20/20, remainder to test).
std::array<int, 3> split_sizes(int n);

std::uint64_t case_seed(std::uint64_t corpus_seed, int index);

CorpusManifest generate_corpus(int n_cases, const CorpusSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

void write_manifest(const CorpusManifest& m, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

nlohmann::json truth_to_json(const Phantom& p);
nlohmann::json tree_spec_to_json(const TreeSpec& s);
TreeSpec tree_spec_from_json(const nlohmann::json& j, TreeSpec base = {});

}  // namespace tfe
