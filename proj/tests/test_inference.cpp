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

#include "helpers.hpp"
#include "tfe/components.hpp"
#include "tfe/inference.hpp"
#include "tfe/metrics.hpp"
#include "tfe/phantom.hpp"
#include "tfe/trainer.hpp"

using namespace tfe;

namespace {

TfeNetConfig small_model() {
  TfeNetConfig m;
  m.levels = 3;
  m.widths = {2, 4, 4};
  m.k = 3;
  return m;
}

InferenceConfig cfg_of(Shape3 patch, Shape3 stride) {
  InferenceConfig c;
  c.patch = patch;
  c.stride = stride;
  return c;
}

}  // namespace

TEST_CASE("window starts") {
  CHECK(window_starts(64, 32, 16) == std::vector<int>{0, 16, 32});
  CHECK(window_starts(70, 32, 16) == std::vector<int>{0, 16, 32, 38});
  CHECK(window_starts(64, 32, 32) == std::vector<int>{0, 32});
  CHECK(window_starts(32, 32, 16) == std::vector<int>{0});
  CHECK(window_starts(20, 32, 16) == std::vector<int>{0});
  for (int n : {33, 47, 96, 101})
    for (int stride : {1, 5, 16}) {
      const auto s = window_starts(n, 16, stride);
      CHECK(s.front() == 0);
      CHECK(s.back() == n - 16);
      for (std::size_t i = 1; i < s.size(); ++i) CHECK((s[i] > s[i - 1] && s[i] - s[i - 1] <= stride));
    }
}

TEST_CASE("inference config validation") {
  CHECK_NOTHROW(cfg_of({32, 32, 32}, {16, 16, 16}).validate(8));
  CHECK_THROWS_AS(cfg_of({32, 32, 32}, {33, 16, 16}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg_of({32, 32, 32}, {16, 0, 16}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg_of({32, 32, 20}, {16, 16, 16}).validate(8), std::invalid_argument);
  InferenceConfig c = cfg_of({16, 24, 32}, {8, 8, 8});
  c.fusion = FusionMode::Mean;
  c.threshold = 0.3f;
  c.fill_holes = false;
  CHECK(to_json(inference_config_from_json(to_json(c))) == to_json(c));
  CHECK(fusion_mode_from_string("mean") == FusionMode::Mean);
  CHECK(fusion_mode_from_string(to_string(FusionMode::Union)) == FusionMode::Union);
  CHECK_THROWS_AS(fusion_mode_from_string("max"), std::invalid_argument);
}

TEST_CASE("a single window equals one forward pass") {
  std::mt19937_64 rng(1);
  TfeNet<float> model(small_model());
  const auto img = tfe::testing::random_tensor<float>(1, {16, 16, 16}, rng, 0.0, 1.0);
  const auto direct = model.forward(img);
  const auto slid = sliding_window(img, cfg_of({16, 16, 16}, {16, 16, 16}), [&](const Tensor<float>& p) {
    return model.forward(p);
  });
  CHECK(slid.values() == direct.values());
}

TEST_CASE("a constant predictor gives a constant map") {
  std::mt19937_64 rng(2);
  const auto img = tfe::testing::random_tensor<float>(1, {20, 37, 29}, rng);
  const auto out = sliding_window(img, cfg_of({8, 8, 8}, {3, 5, 8}), [](const Tensor<float>& p) {
    return Tensor<float>(1, p.shape(), 0.37f);
  });
  CHECK(out.shape() == img.shape());
  for (float v : out.values()) CHECK(v == doctest::Approx(0.37f));
}

TEST_CASE("overlaps are averaged uniformly") {
  // Each window paints its local x coordinate, so the average depends on how
  // many windows cover a voxel and where.
  const Shape3 s{4, 4, 40};
  Tensor<float> img(1, s);
  const auto out = sliding_window(img, cfg_of({4, 4, 16}, {4, 4, 12}), [](const Tensor<float>& p) {
    Tensor<float> o(1, p.shape());
    for (int z = 0; z < p.shape().d; ++z)
      for (int y = 0; y < p.shape().h; ++y)
        for (int x = 0; x < p.shape().w; ++x) o(0, z, y, x) = float(x);
    return o;
  });
  const int starts[] = {0, 12, 24};
  for (int x = 0; x < s.w; ++x) {
    double sum = 0;
    int n = 0;
    for (int s0 : starts)
      if (x >= s0 && x < s0 + 16) sum += x - s0, ++n;
    REQUIRE(n > 0);
    for (int z = 0; z < s.d; ++z)
      for (int y = 0; y < s.h; ++y) CHECK(out(0, z, y, x) == doctest::Approx(sum / n));
  }
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
  Tensor<float> t(1, {1, 1, 3});
  t(0, 0, 0, 0) = 10, t(0, 0, 0, 1) = 11, t(0, 0, 0, 2) = 12;
  const auto p = reflect_pad(t, {1, 1, 9});
  const float expect[] = {10, 11, 12, 11, 10, 11, 12, 11, 10};
  for (int x = 0; x < 9; ++x) CHECK(p(0, 0, 0, x) == expect[x]);
  CHECK(reflect_pad(t, {1, 1, 2}).values() == t.values());

  Tensor<float> one(1, {1, 2, 2}, 4.0f);
  const auto padded = reflect_pad(one, {3, 3, 3});
  CHECK(padded.shape() == Shape3{3, 3, 3});
  for (float v : padded.values()) CHECK(v == 4.0f);
}

TEST_CASE("volumes smaller than the patch are padded and cropped back") {
  std::mt19937_64 rng(3);
  const auto img = tfe::testing::random_tensor<float>(1, {5, 11, 17}, rng);
  const auto out = sliding_window(img, cfg_of({8, 16, 16}, {8, 8, 8}), [](const Tensor<float>& p) { return p; });
  CHECK(out.shape() == img.shape());
  CHECK(tfe::testing::max_abs_diff(out, img) < 1e-6);
}

TEST_CASE("network inference over a raw volume") {
  std::mt19937_64 rng(4);
  TfeNet<float> model(small_model());
  Volume raw{tfe::testing::random_tensor<float>(1, {20, 18, 24}, rng, -1000, 600), {0.5, 0.7, 0.9}};
  const Volume prob = sliding_window_predict(raw, model, cfg_of({8, 8, 8}, {4, 4, 4}));
  CHECK(prob.shape() == raw.shape());
  CHECK(prob.spacing == raw.spacing);
  for (float v : prob.values.values()) CHECK((v > 0 && v < 1));
  CHECK_THROWS_AS(sliding_window_predict(raw, model, cfg_of({8, 8, 6}, {4, 4, 4})), std::invalid_argument);
}

TEST_CASE("two-stage fusion") {
  std::mt19937_64 rng(5);
  const Shape3 s{6, 7, 8};
  const auto a = tfe::testing::random_tensor<float>(1, s, rng, 0, 1);
  const auto b = tfe::testing::random_tensor<float>(1, s, rng, 0, 1);
  CHECK(fuse_two_stage(a, a, FusionMode::Union, 0.5f) == threshold(a, 0.5f));
  CHECK(fuse_two_stage(a, a, FusionMode::Mean, 0.5f) == threshold(a, 0.5f));
  const Mask u = fuse_two_stage(a, b, FusionMode::Union, 0.5f);
  const Mask m = fuse_two_stage(a, b, FusionMode::Mean, 0.5f);
  for (std::size_t i = 0; i < u.data.size(); ++i) {
    CHECK(u.data[i] == ((a[i] > 0.5f) || (b[i] > 0.5f)));
    CHECK(m.data[i] == ((a[i] + b[i]) / 2 > 0.5f));
    CHECK(m.data[i] <= u.data[i]);
  }
  CHECK_THROWS_AS(fuse_two_stage(a, Tensor<float>(1, {6, 7, 9}), FusionMode::Union, 0.5f), std::invalid_argument);
}

TEST_CASE("union fusion never lowers tree-length detection") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    std::mt19937_64 rng(seed);
    TreeSpec spec;
    spec.depth = 2;
    const Phantom ph = generate_tree(spec, rng);
    const SkeletonGraph g = skeletonize(ph.label);
    // Two imperfect predictions that each miss different voxels.
    Tensor<float> p1(1, ph.label.shape), p2(1, ph.label.shape);
    std::uniform_real_distribution<float> u(0, 1);
    for (std::size_t i = 0; i < p1.size(); ++i) {
      const float base = ph.label.data[i] ? 0.8f : 0.1f;
      p1[i] = u(rng) < 0.3f ? 0.2f : base;
      p2[i] = u(rng) < 0.3f ? 0.2f : base;
    }
    const Mask m1 = threshold(p1, 0.5f), m2 = threshold(p2, 0.5f);
    const Mask fu = fuse_two_stage(p1, p2, FusionMode::Union, 0.5f);
    const double td_u = tree_length_detected(fu, g);
    CHECK(td_u >= tree_length_detected(m1, g));
    CHECK(td_u >= tree_length_detected(m2, g));
  }
}

TEST_CASE("postprocessing") {
  const Shape3 s{20, 20, 20};
  Mask m = tfe::testing::box(s, {1, 1, 1}, {6, 6, 5});  // 100 voxels
  for (int x = 10; x < 15; ++x) m.at(15, 15, x) = 1;    // 5 voxels
  const auto kept = postprocess(m);
  CHECK_FALSE(kept.empty);
  CHECK(kept.mask.count() == 100);
  CHECK(kept.mask.at(15, 15, 12) == 0);
  CHECK(postprocess(m, false, false).mask == m);

  // Closed hollow tube: the lumen is enclosed and gets filled.
  Mask tube(s);
  for (int z = 2; z < 18; ++z)
    for (int y = 5; y < 15; ++y)
      for (int x = 5; x < 15; ++x) {
        const bool wall = y == 5 || y == 14 || x == 5 || x == 14 || z == 2 || z == 17;
        tube.at(z, y, x) = wall;
      }
  const auto filled = postprocess(tube);
  CHECK(filled.mask == tfe::testing::box(s, {2, 5, 5}, {18, 15, 15}));
  CHECK(postprocess(filled.mask).mask == filled.mask);
  CHECK(postprocess(kept.mask).mask == kept.mask);

  const auto none = postprocess(Mask(s));
  CHECK(none.empty);
  CHECK(none.mask.count() == 0);
  CHECK(none.mask.shape == s);
}
