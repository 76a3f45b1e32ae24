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

#include <set>

#include "helpers.hpp"
#include "tfe/components.hpp"
#include "tfe/metrics.hpp"
#include "tfe/phantom.hpp"

using namespace tfe;
using tfe::testing::random_mask;

namespace {

// A one-voxel-thick Y: a 10-voxel parent along z, a junction voxel, and two
// diagonal 8-voxel children.
struct YPhantom {
  Mask mask{{24, 20, 24}};
  std::vector<Voxel> parent, left, right;
  Voxel junction{12, 10, 10};
  YPhantom() {
    for (int z = 2; z < 12; ++z) parent.push_back({z, 10, 10});
    for (int j = 1; j <= 8; ++j) {
      left.push_back({12 + j, 10, 10 - j});
      right.push_back({12 + j, 10, 10 + j});
    }
    for (auto* s : {&parent, &left, &right})
      for (const auto& v : *s) mask.at(v[0], v[1], v[2]) = 1;
    mask.at(junction[0], junction[1], junction[2]) = 1;
  }
  static Mask cover(Shape3 s, std::initializer_list<const std::vector<Voxel>*> parts) {
    Mask m(s);
    for (auto* p : parts)
      for (const auto& v : *p) m.at(v[0], v[1], v[2]) = 1;
    return m;
  }
};

bool has_2x2x2_block(const Mask& m) {
  const Shape3 s = m.shape;
  for (int z = 0; z + 1 < s.d; ++z)
    for (int y = 0; y + 1 < s.h; ++y)
      for (int x = 0; x + 1 < s.w; ++x) {
        int n = 0;
        for (int i = 0; i < 8; ++i) n += m.at(z + (i >> 2 & 1), y + (i >> 1 & 1), x + (i & 1));
        if (n == 8) return true;
      }
  return false;
}

Mask centerline_mask(const SkeletonGraph& g) {
  Mask m(g.shape);
  for (const auto& v : g.centerline) m.at(v[0], v[1], v[2]) = 1;
  return m;
}

Mask ball(Shape3 s, double cz, double cy, double cx, double r) {
  Mask m(s);
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if ((z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(z, y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("confusion counts") {
  std::mt19937_64 rng(51);
  const Mask a = random_mask({4, 4, 4}, rng);
  const auto same = confusion(a, a);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  Mask inv = a;
  for (auto& v : inv.data) v = 1 - v;
  const auto opp = confusion(inv, a);
  CHECK(opp.tp == 0);
  CHECK(opp.tn == 0);
  CHECK_THROWS_AS(confusion(a, Mask({4, 4, 5})), std::invalid_argument);
}

TEST_CASE("overlap ratios on random pairs match enumeration") {
  std::mt19937_64 rng(52);
  for (int t = 0; t < 200; ++t) {
    const Mask p = random_mask({4, 4, 4}, rng, 0.4), g = random_mask({4, 4, 4}, rng, 0.4);
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < 64; ++i) {
      tp += p.data[i] && g.data[i];
      fp += p.data[i] && !g.data[i];
      fn += !p.data[i] && g.data[i];
      tn += !p.data[i] && !g.data[i];
    }
    const auto c = confusion(p, g);
    CHECK(c == ConfusionCounts{std::uint64_t(tp), std::uint64_t(fp), std::uint64_t(fn), std::uint64_t(tn)});
    CHECK(c.total() == 64);
    CHECK(std::abs(precision(c) - tp / (tp + fp)) < 1e-15);
    CHECK(std::abs(dsc(c) - 2 * tp / (fp + 2 * tp + fn)) < 1e-15);
    CHECK(std::abs(iou(c) - tp / (tp + fp + fn)) < 1e-15);
    CHECK(std::abs(leakage(c) - std::max(0.0, 1 - fp / (tp + fn))) < 1e-15);
    CHECK(std::abs(dsc(c) - 2 * iou(c) / (1 + iou(c))) < 1e-12);
  }
}

TEST_CASE("overlap ratios: worked example and degenerate cases") {
  const ConfusionCounts c{8, 2, 0, 90};
  CHECK(precision(c) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(dsc(c) == doctest::Approx(8.0 / 9).epsilon(1e-15));
  CHECK(iou(c) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(leakage(c) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(iou_as_printed(c) == doctest::Approx(0.2).epsilon(1e-14));

  const ConfusionCounts identical{5, 0, 0, 59};
  CHECK(precision(identical) == 1.0);
  CHECK(dsc(identical) == 1.0);
  CHECK(iou(identical) == 1.0);
  CHECK(leakage(identical) == 1.0);

  const ConfusionCounts both_empty{0, 0, 0, 64};
  CHECK(precision(both_empty) == 1.0);
  CHECK(dsc(both_empty) == 1.0);
  CHECK(iou(both_empty) == 1.0);
  CHECK(leakage(both_empty) == 1.0);

  const ConfusionCounts pred_empty{0, 0, 6, 58};
  CHECK(precision(pred_empty) == 0.0);
  CHECK(dsc(pred_empty) == 0.0);
  CHECK(iou(pred_empty) == 0.0);

  const ConfusionCounts heavy_leak{2, 10, 1, 51};
  CHECK(leakage(heavy_leak) == 0.0);
}

TEST_CASE("composite scores") {
  CHECK(mean_score(1, 1, 1, 1) == 1.0);
  CHECK(overall_score(1, 1, 1, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mean_score(0.9, 0.9, 0.9, 0.9) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(mean_score(0.2, 0.4, 0.6, 0.8) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(overall_score(0.8, 0.6, 0.4, 0.2, 0.5) == doctest::Approx(0.7 * 0.25 * 2.0 + 0.3 * 0.5).epsilon(1e-15));
}

TEST_CASE("simple points and Euler characteristic") {
  std::array<std::uint8_t, 27> nb{};
  nb[13] = 1;
  CHECK_FALSE(is_simple_point(nb));  // isolated voxel
  nb[12] = 1;
  CHECK(is_simple_point(nb));  // end of a line
  nb[14] = 1;
  CHECK_FALSE(is_simple_point(nb));  // middle of a line

  Mask one({3, 3, 3});
  one.at(1, 1, 1) = 1;
  CHECK(euler_characteristic(one) == 1);
  Mask ring({3, 5, 5});
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x)
      if (y != 2 || x != 2) ring.at(1, y, x) = 1;
  CHECK(euler_characteristic(ring) == 0);
  Mask shell({5, 5, 5});
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x)
        if (z != 2 || y != 2 || x != 2) shell.at(z, y, x) = 1;
  CHECK(euler_characteristic(shell) == 2);
}

TEST_CASE("exact distance transform") {
  Mask m = tfe::testing::box({7, 7, 7}, {1, 1, 1}, {6, 6, 6});
  const auto dt = distance_transform_sq(m);
  CHECK(dt[m.shape.index(3, 3, 3)] == 9.0);
  CHECK(dt[m.shape.index(1, 3, 3)] == 1.0);
  CHECK(dt[m.shape.index(0, 3, 3)] == 0.0);
  const Mask edge = tfe::testing::box({3, 3, 3}, {0, 0, 0}, {3, 3, 3});
  CHECK(distance_transform_sq(edge)[edge.shape.index(1, 1, 1)] == 4.0);
}

TEST_CASE("skeletonize: simple shapes") {
  SUBCASE("empty mask") { CHECK(skeletonize(Mask({5, 5, 5})).empty()); }
  SUBCASE("straight unit-width tube") {
    Mask m({5, 5, 30});
    for (int x = 5; x < 25; ++x) m.at(2, 2, x) = 1;
    const auto g = skeletonize(m);
    CHECK(g.branches.size() == 1);
    CHECK(g.endpoint_count() == 2);
    CHECK(g.bifurcation_count() == 0);
    CHECK(g.centerline.size() == 20);
  }
  SUBCASE("Y phantom") {
    YPhantom y;
    const auto g = skeletonize(y.mask);
    CHECK(g.branches.size() == 3);
    CHECK(g.bifurcation_count() == 1);
    CHECK(g.endpoint_count() == 3);
  }
  SUBCASE("solid sphere") {
    const auto g = skeletonize(ball({15, 15, 15}, 7, 7, 7, 6));
    CHECK(g.centerline.size() <= 3);
    CHECK(g.bifurcation_count() == 0);
  }
}

TEST_CASE("skeleton invariants on generated phantoms") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    std::mt19937_64 rng(seed);
    TreeSpec spec;
    spec.depth = static_cast<int>(seed % 4);
    const Phantom p = generate_tree(spec, rng);
    const auto g = skeletonize(p.label);
    const Mask c = centerline_mask(g);
    CHECK_FALSE(has_2x2x2_block(c));
    CHECK(connected_components(c, 26).count() == 1);
    CHECK(euler_characteristic(c) == euler_characteristic(p.label));

    // Every centerline voxel is in exactly one branch or one node.
    std::map<Voxel, int> owners;
    for (const auto& b : g.branches)
      for (const auto& v : b.voxels) ++owners[v];
    for (const auto& n : g.nodes)
      for (const auto& v : n.voxels)
        if (n.kind == SkeletonNode::Kind::Junction) ++owners[v];
    for (const auto& v : g.centerline) CHECK(owners[v] == 1);
    for (const auto& b : g.branches)
      for (const auto& v : b.voxels) CHECK(c.at(v[0], v[1], v[2]) == 1);
  }
}

TEST_CASE("skeleton keeps a loop") {
  Mask torus({9, 21, 21});
  for (int z = 0; z < 9; ++z)
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 21; ++x) {
        const double r = std::hypot(y - 10.0, x - 10.0) - 7.0;
        if (r * r + (z - 4.0) * (z - 4.0) <= 2.2 * 2.2) torus.at(z, y, x) = 1;
      }
  REQUIRE(euler_characteristic(torus) == 0);
  const auto g = skeletonize(torus);
  const Mask c = centerline_mask(g);
  CHECK(euler_characteristic(c) == 0);
  CHECK(connected_components(c, 26).count() == 1);
  CHECK_FALSE(has_2x2x2_block(c));
}

TEST_CASE("tree length and branch detection") {
  YPhantom y;
  const auto g = skeleton_graph(y.mask);
  REQUIRE(g.branches.size() == 3);
  const double total = static_cast<double>(g.centerline.size());
  CHECK(total == 27);

  CHECK(tree_length_detected(y.mask, g) == 1.0);
  CHECK(branch_detected(y.mask, g) == 1.0);
  CHECK(tree_length_detected(Mask(y.mask.shape), g) == 0.0);
  CHECK(branch_detected(Mask(y.mask.shape), g) == 0.0);

  const Mask parent = YPhantom::cover(y.mask.shape, {&y.parent});
  CHECK(tree_length_detected(parent, g) == doctest::Approx(10.0 / 27).epsilon(1e-15));
  const Mask children = YPhantom::cover(y.mask.shape, {&y.left, &y.right});
  CHECK(branch_detected(children, g) == doctest::Approx(2.0 / 3).epsilon(1e-15));

  SkeletonGraph none;
  none.shape = y.mask.shape;
  CHECK_THROWS_AS(tree_length_detected(y.mask, none), std::domain_error);
  CHECK_THROWS_AS(branch_detected(y.mask, none), std::domain_error);
  CHECK_THROWS_AS(branch_detected(Mask({3, 3, 3}), g), std::invalid_argument);
}

TEST_CASE("a branch needs strictly more than 80 percent coverage") {
  Mask line({3, 3, 14});
  for (int x = 2; x < 12; ++x) line.at(1, 1, x) = 1;
  const auto g = skeleton_graph(line);
  REQUIRE(g.branches.size() == 1);
  REQUIRE(g.branches[0].voxel_count() == 10);
  Mask eight({3, 3, 14});
  for (int x = 2; x < 10; ++x) eight.at(1, 1, x) = 1;
  CHECK_FALSE(branch_is_detected(eight, g.branches[0], g));
  CHECK(branch_detected(eight, g) == 0.0);
  eight.at(1, 1, 10) = 1;
  CHECK(branch_is_detected(eight, g.branches[0], g));
}

TEST_CASE("detected length and branches never drop for a superset prediction") {
  std::mt19937_64 rng(53);
  TreeSpec spec;
  const Phantom p = generate_tree(spec, rng);
  const auto g = skeletonize(p.label);
  for (int t = 0; t < 20; ++t) {
    const Mask a = random_mask(p.label.shape, rng, 0.7);
    Mask small = p.label, big = p.label;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      small.data[i] &= a.data[i];
      big.data[i] = small.data[i] | (a.data[i] & (i % 3 == 0));
    }
    Mask superset = small;
    for (std::size_t i = 0; i < a.data.size(); ++i) superset.data[i] |= big.data[i] | p.label.data[i] * (t % 2);
    CHECK(tree_length_detected(superset, g) >= tree_length_detected(small, g));
    CHECK(branch_detected(superset, g) >= branch_detected(small, g));
  }
}

TEST_CASE("evaluate: identical masks score one everywhere") {
  std::mt19937_64 rng(54);
  const Phantom p = generate_tree(TreeSpec{}, rng);
  const auto r = evaluate(p.label, p.label);
  for (double v : {r.precision, r.dsc, r.td, r.bd, r.mean_score, r.iou, r.leakage, r.overall_score}) CHECK(v == 1.0);
  CHECK(r.gt_branches == r.detected_branches);
  CHECK(r.gt_branches == p.branch_count);

  EvalOptions compat;
  compat.iou_as_printed = true;
  CHECK(evaluate(p.label, p.label, compat).iou == 0.0);

  const auto e = evaluate(Mask(p.label.shape), Mask(p.label.shape));
  CHECK(e.td == 1.0);
  CHECK(e.dsc == 1.0);

  const auto csv = report_csv_row("c", r);
  CHECK(csv.rfind("c,1,1,1,1,1,1,1,1,", 0) == 0);
  const auto footer = report_csv_footer({r, r});
  CHECK(footer.rfind("mean,1,1,1,1,1,1,1,1", 0) == 0);
  CHECK(footer.find("std,0,0,0,0,0,0,0,0") != std::string::npos);
  CHECK(to_json(r).at("td") == 1.0);
}
