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

#include <fstream>
#include <functional>

#include "helpers.hpp"
#include "tfe/components.hpp"
#include "tfe/interp.hpp"
#include "tfe/volume_io.hpp"

using namespace tfe;
using tfe::testing::random_mask;
using tfe::testing::random_tensor;

namespace {

// Eight-corner weighted sum written out directly.
double trilinear_oracle(const Tensor<double>& v, double z, double y, double x) {
  const Shape3 s = v.shape();
  auto clampc = [](double c, int n) { return std::min(std::max(c, 0.0), double(n - 1)); };
  z = clampc(z, s.d), y = clampc(y, s.h), x = clampc(x, s.w);
  double acc = 0;
  for (int cz = 0; cz < s.d; ++cz)
    for (int cy = 0; cy < s.h; ++cy)
      for (int cx = 0; cx < s.w; ++cx) {
        const double wz = std::max(0.0, 1 - std::abs(z - cz));
        const double wy = std::max(0.0, 1 - std::abs(y - cy));
        const double wx = std::max(0.0, 1 - std::abs(x - cx));
        acc += wz * wy * wx * v(0, cz, cy, cx);
      }
  return acc;
}

int flood_count(const Mask& m, int conn) {
  const Shape3 s = m.shape;
  std::vector<int> seen(s.voxels(), 0);
  int count = 0;
  std::function<void(int, int, int)> visit = [&](int z, int y, int x) {
    if (!s.contains(z, y, x) || seen[s.index(z, y, x)] || !m.at(z, y, x)) return;
    seen[s.index(z, y, x)] = 1;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int n = std::abs(dz) + std::abs(dy) + std::abs(dx);
          if (n == 0 || (conn == 6 && n > 1)) continue;
          visit(z + dz, y + dy, x + dx);
        }
  };
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if (m.at(z, y, x) && !seen[s.index(z, y, x)]) {
          ++count;
          visit(z, y, x);
        }
  return count;
}

Mask border_flood_fill(const Mask& m) {
  const Shape3 s = m.shape;
  std::vector<int> outside(s.voxels(), 0);
  std::vector<std::array<int, 3>> stack;
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const bool border = z == 0 || y == 0 || x == 0 || z == s.d - 1 || y == s.h - 1 || x == s.w - 1;
        if (border && !m.at(z, y, x)) {
          outside[s.index(z, y, x)] = 1;
          stack.push_back({z, y, x});
        }
      }
  const int d6[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!stack.empty()) {
    auto [z, y, x] = stack.back();
    stack.pop_back();
    for (auto& d : d6) {
      const int a = z + d[0], b = y + d[1], c = x + d[2];
      if (s.contains(a, b, c) && !m.at(a, b, c) && !outside[s.index(a, b, c)]) {
        outside[s.index(a, b, c)] = 1;
        stack.push_back({a, b, c});
      }
    }
  }
  Mask out(s);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = outside[i] ? 0 : 1;
  return out;
}

}  // namespace

TEST_CASE("trilinear sampling is exact at lattice points") {
  std::mt19937_64 rng(1);
  auto v = random_tensor<double>(2, {4, 5, 6}, rng);
  CHECK(trilinear_sample(v, Point3<double>{2, 3, 4}, 1) == v(1, 2, 3, 4));
  CHECK(trilinear_sample(v, Point3<double>{0, 0, 0}, 0) == v(0, 0, 0, 0));
}

TEST_CASE("trilinear midpoint between 0 and 1 is one half") {
  Tensor<double> v(1, {2, 2, 2});
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y) v(0, z, y, 1) = 1.0;
  CHECK(trilinear_sample(v, Point3<double>{0.3, 0.8, 0.5}, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("trilinear sampling matches the eight-corner oracle") {
  std::mt19937_64 rng(2);
  auto v = random_tensor<double>(1, {4, 4, 4}, rng);
  std::uniform_real_distribution<double> u(-0.5, 3.5);
  for (int i = 0; i < 200; ++i) {
    const double z = u(rng), y = u(rng), x = u(rng);
    CHECK(std::abs(trilinear_sample(v, Point3<double>{z, y, x}, 0) - trilinear_oracle(v, z, y, x)) < 1e-12);
  }
}

TEST_CASE("trilinear weights sum to one and invalid channels throw") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 4);
  for (int i = 0; i < 50; ++i) {
    TrilinearStencil<double> st({5, 5, 5}, {u(rng), u(rng), u(rng)});
    double sum = 0;
    for (double w : st.weight) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  Tensor<double> v(1, {2, 2, 2});
  CHECK_THROWS_AS(trilinear_sample(v, Point3<double>{0, 0, 0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(trilinear_sample_grad(v, Point3<double>{0, 0, 0}, -1, 1.0), std::invalid_argument);
}

TEST_CASE("trilinear coordinate gradient agrees with finite differences") {
  std::mt19937_64 rng(4);
  auto v = random_tensor<double>(1, {5, 5, 5}, rng);
  std::uniform_real_distribution<double> u(0.1, 3.9);
  const double h = 1e-4;
  for (int i = 0; i < 50; ++i) {
    Point3<double> p{u(rng), u(rng), u(rng)};
    if (std::abs(p.z - std::round(p.z)) < 2 * h || std::abs(p.y - std::round(p.y)) < 2 * h ||
        std::abs(p.x - std::round(p.x)) < 2 * h)
      continue;
    const auto g = trilinear_sample_grad(v, p, 0, 1.0);
    auto f = [&](Point3<double> q) { return trilinear_sample(v, q, 0); };
    const double nz = (f({p.z + h, p.y, p.x}) - f({p.z - h, p.y, p.x})) / (2 * h);
    const double ny = (f({p.z, p.y + h, p.x}) - f({p.z, p.y - h, p.x})) / (2 * h);
    const double nx = (f({p.z, p.y, p.x + h}) - f({p.z, p.y, p.x - h})) / (2 * h);
    const double num = std::hypot(g.point_grad.z - nz, g.point_grad.y - ny, g.point_grad.x - nx);
    const double den = std::max(std::hypot(nz, ny, nx), 1e-12);
    CHECK(num / den < 1e-6);
  }
}

TEST_CASE("trilinear gradient at a lattice point and at a clamped border") {
  std::mt19937_64 rng(5);
  auto v = random_tensor<double>(1, {4, 4, 4}, rng);
  const auto g = trilinear_sample_grad(v, Point3<double>{1, 2, 1}, 0, 1.0);
  double total = 0;
  for (int j = 0; j < 8; ++j) {
    if (g.index[j] == v.index(0, 1, 2, 1)) total += g.data_grad[j];
    else CHECK(g.data_grad[j] == 0.0);
  }
  CHECK(total == 1.0);
  CHECK(g.point_grad.z == doctest::Approx(v(0, 2, 2, 1) - v(0, 1, 2, 1)));
  CHECK(g.point_grad.x == doctest::Approx(v(0, 1, 2, 2) - v(0, 1, 2, 1)));

  const auto c = trilinear_sample_grad(v, Point3<double>{-0.7, 1.5, 5.2}, 0, 1.0);
  CHECK(c.point_grad.z == 0.0);
  CHECK(c.point_grad.x == 0.0);
  CHECK(c.point_grad.y != 0.0);
}

TEST_CASE("connected components") {
  SUBCASE("empty mask") { CHECK(connected_components(Mask({4, 4, 4})).count() == 0); }
  SUBCASE("diagonal voxels join under 26 and split under 6") {
    Mask m({3, 3, 3});
    m.at(0, 0, 0) = m.at(1, 1, 1) = 1;
    CHECK(connected_components(m, 26).count() == 1);
    CHECK(connected_components(m, 6).count() == 2);
  }
  SUBCASE("random masks match a flood-fill oracle") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
      const Mask m = random_mask({8, 8, 8}, rng, 0.3);
      for (int conn : {6, 26}) {
        const auto cc = connected_components(m, conn);
        CHECK(static_cast<int>(cc.count()) == flood_count(m, conn));
        std::size_t total = 0;
        for (auto s : cc.sizes) total += s;
        CHECK(total == m.count());
        const auto sorted = cc.sorted_sizes();
        CHECK(std::is_sorted(sorted.rbegin(), sorted.rend()));
      }
    }
  }
}

TEST_CASE("fill holes") {
  SUBCASE("hollow cube shell becomes solid") {
    Mask m({7, 7, 7});
    for (int z = 1; z < 6; ++z)
      for (int y = 1; y < 6; ++y)
        for (int x = 1; x < 6; ++x) {
          const bool shell = z == 1 || z == 5 || y == 1 || y == 5 || x == 1 || x == 5;
          m.at(z, y, x) = shell ? 1 : 0;
        }
    const Mask f = fill_holes(m);
    CHECK(f.count() == 125);
  }
  SUBCASE("a mask touching the border everywhere is unchanged") {
    Mask m({4, 4, 4});
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) m.at(0, y, x) = m.at(2, y, x) = 1;
    CHECK(fill_holes(m) == m);
  }
  SUBCASE("random masks match the border flood-fill oracle and are idempotent") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
      const Mask m = random_mask({7, 7, 7}, rng, 0.6);
      const Mask f = fill_holes(m);
      CHECK(f == border_flood_fill(m));
      CHECK(fill_holes(f) == f);
    }
  }
}

TEST_CASE("volume files round trip") {
  const auto dir = tfe::testing::scratch_dir("io");
  std::mt19937_64 rng(8);
  Volume v;
  v.values = random_tensor<float>(2, {3, 4, 5}, rng, -1000, 1000);
  v.spacing = {0.5, 0.6, 0.7};
  write_volume(v, dir / "v.tvol");
  const Volume r = read_volume(dir / "v.tvol");
  CHECK(r.values.values() == v.values.values());
  CHECK(r.channels() == 2);
  CHECK(r.spacing == v.spacing);

  Mask m = random_mask({3, 3, 3}, rng);
  m.spacing = {1.5, 1.0, 0.25};
  write_mask(m, dir / "m.tvol");
  const Mask rm = read_mask(dir / "m.tvol");
  CHECK(rm == m);
  CHECK(rm.spacing == m.spacing);
}

TEST_CASE("volume reader reports malformed input") {
  const auto dir = tfe::testing::scratch_dir("io_bad");
  std::ofstream(dir / "a.tvol") << R"({"shape":[2,2,2],"spacing":[1,1,1],"channels":1,"dtype":"f32","byte_order":"little"})";
  {
    std::ofstream raw(dir / "a.raw", std::ios::binary);
    std::vector<float> seven(7, 1.0f);
    raw.write(reinterpret_cast<const char*>(seven.data()), 7 * sizeof(float));
  }
  CHECK_THROWS_AS(read_volume(dir / "a.tvol"), IoError);

  std::ofstream(dir / "b.tvol") << R"({"shape":[2,2,2],"spacing":[1,1,1],"dtype":"f64"})";
  CHECK_THROWS_AS(read_volume(dir / "b.tvol"), IoError);

  std::ofstream(dir / "c.tvol") << R"({"shape":[2,2,)";
  try {
    read_volume(dir / "c.tvol");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(e.offset() > 0);
  }
}
