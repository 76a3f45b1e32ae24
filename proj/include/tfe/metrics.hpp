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
#include <string>
#include <vector>

#include <json.hpp>

#include "tfe/volume.hpp"

namespace tfe {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

// Ratios follow the degenerate rule: a zero denominator yields 1 when both
// masks are empty and 0 otherwise.
double precision(const ConfusionCounts& c);
double dsc(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
/// 1 - TP/(TP+FP+FN); compatibility only, not an overlap score.
double iou_as_printed(const ConfusionCounts& c);
/// 1 - FP/(TP+FN), floored at 0.
double leakage(const ConfusionCounts& c);

using Voxel = std::array<int, 3>;  // (z, y, x)

struct SkeletonNode {
  enum class Kind { Endpoint, Junction, Isolated };
  Kind kind = Kind::Endpoint;
  std::vector<Voxel> voxels;
  int degree = 0;  // incident branches
};

struct SkeletonBranch {
  int node_a = -1;  // -1 for a closed loop without nodes
  int node_b = -1;
  /// Interior voxels plus any endpoint-node voxel it ends in, ordered from
  /// node_a to node_b. Junction voxels are never part of a branch.
  std::vector<Voxel> voxels;
  /// Smoothed centerline length, measured up to the centroid of each
  /// junction it meets.
  double length = 0;

  std::size_t voxel_count() const { return voxels.size(); }
};

struct SkeletonGraph {
  Shape3 shape{};
  std::vector<Voxel> centerline;
  std::vector<SkeletonNode> nodes;
  std::vector<SkeletonBranch> branches;

  std::size_t endpoint_count() const;
  std::size_t bifurcation_count() const;
  double total_length() const;
  bool empty() const { return centerline.empty(); }
};

struct SkeletonOptions {
  /// Terminal branches shorter than this (voxels) are pruned.
  double min_spur_length = 4.0;
  /// skeletonize() also prunes terminal branches shorter than this multiple
  /// of the tube radius at their junction.
  double spur_radius_factor = 1.5;
  /// skeletonize() walks endpoints back out to the end of the tube's medial
  /// plateau.
  bool extend_endpoints = true;
};

/// Euler characteristic of the foreground as a union of closed unit cubes
/// (26-connectivity): components - tunnels + cavities.
long euler_characteristic(const Mask& mask);

/// Squared Euclidean distance of every voxel to the nearest background voxel
/// (the outside of the grid counts as background); 0 on background.
std::vector<double> distance_transform_sq(const Mask& mask);

/// Topology-preserving thinning: simple, non-endpoint border voxels are
/// removed in order of increasing distance to the background, ties in scan
/// order.
Mask thin(const Mask& mask);

/// Builds the branch graph of an already thin centerline mask, pruning
/// spurs shorter than opts.min_spur_length.
SkeletonGraph skeleton_graph(const Mask& centerline, const SkeletonOptions& opts = {});

/// Thinning, spur pruning, endpoint re-extension and graph decomposition.
SkeletonGraph skeletonize(const Mask& mask, const SkeletonOptions& opts = {});

/// True iff removing the centre of the 3x3x3 neighbourhood preserves
/// 26-connectivity of the foreground and 6-connectivity of the background.
/// `nb` is indexed (dz+1)*9 + (dy+1)*3 + (dx+1).
bool is_simple_point(const std::array<std::uint8_t, 27>& nb);

double tree_length_detected(const Mask& pred, const SkeletonGraph& gt_skel);
double branch_detected(const Mask& pred, const SkeletonGraph& gt_skel);
/// A branch counts as detected iff strictly more than 80% of its voxels are
/// inside `pred`.
bool branch_is_detected(const Mask& pred, const SkeletonBranch& branch, const SkeletonGraph& graph);

double mean_score(double precision, double dsc, double td, double bd);
double overall_score(double iou, double precision, double td, double bd, double leakage);

struct MetricsReport {
  ConfusionCounts counts;
  double precision = 0;
  double dsc = 0;
  double td = 0;
  double bd = 0;
  double mean_score = 0;
  double iou = 0;
  double leakage = 0;
  double overall_score = 0;
  std::size_t gt_branches = 0;
  std::size_t detected_branches = 0;
};

struct EvalOptions {
  bool iou_as_printed = false;
  SkeletonOptions skeleton{};
};

MetricsReport evaluate(const Mask& pred, const Mask& gt, const EvalOptions& opts = {});
MetricsReport evaluate(const Mask& pred, const Mask& gt, const SkeletonGraph& gt_skel, const EvalOptions& opts = {});

std::string report_csv_header();
std::string report_csv_row(const std::string& case_id, const MetricsReport& r);
/// Two footer rows ("mean", "std") over the ratio columns; population std.
std::string report_csv_footer(const std::vector<MetricsReport>& rs);

nlohmann::json to_json(const MetricsReport& r);

}  // namespace tfe
