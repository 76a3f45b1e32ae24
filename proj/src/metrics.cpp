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


#include "tfe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tfe {

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  if (!(pred.shape == gt.shape)) {
    throw std::invalid_argument("confusion: shape mismatch " + to_string(pred.shape) + " vs " + to_string(gt.shape));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

bool both_empty(const ConfusionCounts& c) { return c.tp + c.fp + c.fn == 0; }

double ratio(double num, double den, const ConfusionCounts& c) {
  if (den <= 0) return both_empty(c) ? 1.0 : 0.0;
  return num / den;
}

}  // namespace

double precision(const ConfusionCounts& c) {
  return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp), c);
}

double dsc(const ConfusionCounts& c) {
  return ratio(2.0 * static_cast<double>(c.tp), static_cast<double>(c.fp + 2 * c.tp + c.fn), c);
}

double iou(const ConfusionCounts& c) {
  return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn), c);
}

double iou_as_printed(const ConfusionCounts& c) {
  if (both_empty(c)) return 0.0;
  return 1.0 - static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
}

double leakage(const ConfusionCounts& c) {
  const double den = static_cast<double>(c.tp + c.fn);
  if (den <= 0) return c.fp == 0 ? 1.0 : 0.0;
  return std::max(0.0, 1.0 - static_cast<double>(c.fp) / den);
}

// ---------------------------------------------------------------------------
// Simple points

namespace {

struct NeighbourTables {
  std::array<std::vector<int>, 27> adj26;
  std::array<std::vector<int>, 27> adj6;
  std::array<bool, 27> in18{};
  std::array<bool, 27> face{};

  NeighbourTables() {
    auto coords = [](int i) { return std::array<int, 3>{i / 9 - 1, (i / 3) % 3 - 1, i % 3 - 1}; };
    for (int i = 0; i < 27; ++i) {
      const auto a = coords(i);
      const int l1 = std::abs(a[0]) + std::abs(a[1]) + std::abs(a[2]);
      in18[i] = l1 >= 1 && l1 <= 2;
      face[i] = l1 == 1;
      for (int j = 0; j < 27; ++j) {
        if (i == j || j == 13) continue;
        const auto b = coords(j);
        const int dz = std::abs(a[0] - b[0]), dy = std::abs(a[1] - b[1]), dx = std::abs(a[2] - b[2]);
        if (std::max({dz, dy, dx}) == 1) adj26[i].push_back(j);
        if (dz + dy + dx == 1) adj6[i].push_back(j);
      }
    }
  }
};

const NeighbourTables& tables() {
  static const NeighbourTables t;
  return t;
}

int count26(const std::array<std::uint8_t, 27>& nb) {
  int n = 0;
  for (int i = 0; i < 27; ++i) n += (i != 13 && nb[i]) ? 1 : 0;
  return n;
}

}  // namespace

bool is_simple_point(const std::array<std::uint8_t, 27>& nb) {
  const auto& t = tables();
  std::array<std::uint8_t, 27> seen{};
  int stack[27];

  int fg_components = 0;
  for (int i = 0; i < 27; ++i) {
    if (i == 13 || !nb[i] || seen[i]) continue;
    if (++fg_components > 1) return false;
    int top = 0;
    stack[top++] = i;
    seen[i] = 1;
    while (top) {
      const int v = stack[--top];
      for (int w : t.adj26[v]) {
        if (nb[w] && !seen[w]) {
          seen[w] = 1;
          stack[top++] = w;
        }
      }
    }
  }
  if (fg_components != 1) return false;

  seen.fill(0);
  int bg_components = 0;
  for (int i = 0; i < 27; ++i) {
    if (!t.face[i] || nb[i] || seen[i]) continue;
    if (++bg_components > 1) return false;
    int top = 0;
    stack[top++] = i;
    seen[i] = 1;
    while (top) {
      const int v = stack[--top];
      for (int w : t.adj6[v]) {
        if (t.in18[w] && !nb[w] && !seen[w]) {
          seen[w] = 1;
          stack[top++] = w;
        }
      }
    }
  }
  return bg_components == 1;
}

// ---------------------------------------------------------------------------
// Thinning

long euler_characteristic(const Mask& mask) {
  const Shape3 s = mask.shape;
  auto fg = [&](int z, int y, int x) { return s.contains(z, y, x) && mask.data[s.index(z, y, x)] != 0; };
  // Cell (z, y, x) of the doubled grid is a vertex, edge, face or cube of the
  // complex according to how many of its coordinates are odd; it is present
  // iff some voxel whose closed cube contains it is foreground.
  long chi = 0;
  for (int z = 0; z <= 2 * s.d; ++z)
    for (int y = 0; y <= 2 * s.h; ++y)
      for (int x = 0; x <= 2 * s.w; ++x) {
        const int odd = (z & 1) + (y & 1) + (x & 1);
        bool present = false;
        const int z1 = z / 2, z0 = (z & 1) ? z1 : z1 - 1;
        const int y1 = y / 2, y0 = (y & 1) ? y1 : y1 - 1;
        const int x1 = x / 2, x0 = (x & 1) ? x1 : x1 - 1;
        for (int vz = z0; vz <= z1 && !present; ++vz)
          for (int vy = y0; vy <= y1 && !present; ++vy)
            for (int vx = x0; vx <= x1 && !present; ++vx) present = fg(vz, vy, vx);
        if (present) chi += (odd % 2 == 0) ? 1 : -1;
      }
  return chi;
}

std::vector<double> distance_transform_sq(const Mask& mask) {
  const Shape3 s = mask.shape;
  const double inf = 1e20;
  std::vector<double> f(s.voxels());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = mask.data[i] ? inf : 0.0;

  // One-dimensional lower envelope of parabolas along a strided line; the
  // volume border counts as background.
  std::vector<double> line, out, zk;
  std::vector<int> vk;
  auto pass = [&](std::size_t base, std::size_t stride, int n) {
    line.assign(n + 2, 0.0);
    for (int i = 0; i < n; ++i) line[i + 1] = f[base + stride * i];
    const int m = n + 2;
    vk.assign(m, 0);
    zk.assign(m + 1, 0.0);
    out.assign(m, 0.0);
    int k = 0;
    vk[0] = 0;
    zk[0] = -inf;
    zk[1] = inf;
    for (int q = 1; q < m; ++q) {
      double sp;
      for (;;) {
        const int v = vk[k];
        sp = ((line[q] + double(q) * q) - (line[v] + double(v) * v)) / (2.0 * q - 2.0 * v);
        if (sp <= zk[k] && k > 0) --k;
        else break;
      }
      ++k;
      vk[k] = q;
      zk[k] = sp;
      zk[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < m; ++q) {
      while (zk[k + 1] < q) ++k;
      const double d = q - vk[k];
      out[q] = d * d + line[vk[k]];
    }
    for (int i = 0; i < n; ++i) f[base + stride * i] = out[i + 1];
  };
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y) pass(s.index(z, y, 0), 1, s.w);
  for (int z = 0; z < s.d; ++z)
    for (int x = 0; x < s.w; ++x) pass(s.index(z, 0, x), s.w, s.h);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) pass(s.index(0, y, x), static_cast<std::size_t>(s.h) * s.w, s.d);
  return f;
}

namespace {

constexpr double kEndpointSlope = 0.25;

Mask thin_with(const Mask& mask, const std::vector<double>& dist) {
  Mask m = mask;
  const Shape3 s = m.shape;
  for (auto& v : m.data) v = v ? 1 : 0;

  auto get = [&](int z, int y, int x) -> std::uint8_t { return s.contains(z, y, x) ? m.data[s.index(z, y, x)] : 0; };
  auto neighbourhood = [&](int z, int y, int x) {
    std::array<std::uint8_t, 27> nb{};
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) nb[(dz + 1) * 9 + (dy + 1) * 3 + dx + 1] = get(z + dz, y + dy, x + dx);
    return nb;
  };
  // An endpoint is kept only while it is not running down a slope of the
  // distance map; tails that thinning grows towards the tip of an end cap
  // retract this way.
  auto removable = [&](const Voxel& v) {
    const auto nb = neighbourhood(v[0], v[1], v[2]);
    const int n = count26(nb);
    if (n == 1) {
      int k = 0;
      while (k == 13 || !nb[k]) ++k;
      const std::size_t j = s.index(v[0] + k / 9 - 1, v[1] + (k / 3) % 3 - 1, v[2] + k % 3 - 1);
      if (std::sqrt(dist[s.index(v[0], v[1], v[2])]) >= std::sqrt(dist[j]) - kEndpointSlope) return false;
    }
    return n >= 1 && is_simple_point(nb);
  };

  // Voxels become eligible in order of increasing distance to the
  // background; within one distance level, directional sub-iterations peel
  // one face orientation at a time so that plateaus of equal distance thin
  // symmetrically.
  std::vector<std::pair<double, Voxel>> order;
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if (m.data[s.index(z, y, x)]) order.push_back({dist[s.index(z, y, x)], Voxel{z, y, x}});
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  static constexpr int kDirs[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  std::vector<Voxel> active;
  std::vector<std::size_t> candidates;
  std::vector<std::uint32_t> stamp(s.voxels(), 0);
  std::uint32_t sweep = 1;
  std::size_t next = 0;
  while (next < order.size()) {
    const double level = order[next].first;
    while (next < order.size() && order[next].first == level) active.push_back(order[next++].second);
    std::sort(active.begin(), active.end());
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& d : kDirs) {
        candidates.clear();
        for (std::size_t i = 0; i < active.size(); ++i) {
          const Voxel& v = active[i];
          if (!get(v[0] + d[0], v[1] + d[1], v[2] + d[2]) && removable(v)) candidates.push_back(i);
        }
        // A voxel next to one already deleted in this sub-iteration waits for
        // the next one; otherwise a one-voxel-thick ribbon unravels from its
        // end in a single sweep.
        bool removed = false;
        for (std::size_t i : candidates) {
          const Voxel& v = active[i];
          bool touched = false;
          for (int dz = -1; dz <= 1 && !touched; ++dz)
            for (int dy = -1; dy <= 1 && !touched; ++dy)
              for (int dx = -1; dx <= 1 && !touched; ++dx) {
                const int z = v[0] + dz, y = v[1] + dy, x = v[2] + dx;
                touched = s.contains(z, y, x) && stamp[s.index(z, y, x)] == sweep;
              }
          if (!touched && removable(v)) {
            m.data[s.index(v[0], v[1], v[2])] = 0;
            stamp[s.index(v[0], v[1], v[2])] = sweep;
            removed = true;
          }
        }
        ++sweep;
        if (removed) {
          changed = true;
          std::erase_if(active, [&](const Voxel& v) { return m.data[s.index(v[0], v[1], v[2])] == 0; });
        }
      }
    }
  }
  return m;
}

}  // namespace

Mask thin(const Mask& mask) { return thin_with(mask, distance_transform_sq(mask)); }

// ---------------------------------------------------------------------------
// Branch graph

std::size_t SkeletonGraph::endpoint_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const SkeletonNode& n) { return n.kind == SkeletonNode::Kind::Endpoint; }));
}

std::size_t SkeletonGraph::bifurcation_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const SkeletonNode& n) { return n.kind == SkeletonNode::Kind::Junction; }));
}

double SkeletonGraph::total_length() const {
  double t = 0;
  for (const auto& b : branches) t += b.length;
  return t;
}

namespace {

// Length of a voxel path after a symmetric moving average of half-width 3,
// which removes most of the zig-zag excess of oblique digital lines. The two
// end points stay fixed.
double path_length(const std::vector<std::array<double, 3>>& p) {
  const int n = static_cast<int>(p.size());
  if (n < 2) return 0.0;
  std::vector<std::array<double, 3>> q(n);
  for (int i = 0; i < n; ++i) {
    const int h = std::min({3, i, n - 1 - i});
    std::array<double, 3> acc{};
    for (int j = i - h; j <= i + h; ++j)
      for (int a = 0; a < 3; ++a) acc[a] += p[j][a];
    for (int a = 0; a < 3; ++a) q[i][a] = acc[a] / (2 * h + 1);
  }
  double l = 0;
  for (int i = 1; i < n; ++i) {
    const double dz = q[i][0] - q[i - 1][0], dy = q[i][1] - q[i - 1][1], dx = q[i][2] - q[i - 1][2];
    l += std::sqrt(dz * dz + dy * dy + dx * dx);
  }
  return l;
}

// Branch under construction: `path` runs from the attachment voxel in node a
// to the attachment voxel in node b, both included when the node exists.
struct RawBranch {
  int a = -1;
  int b = -1;
  std::vector<Voxel> path;
  std::vector<Voxel> extra;  // dissolved junction voxels off the path
};

struct Builder {
  const Mask& m;
  Shape3 s;
  std::vector<int> id;  // voxel -> index into `vox`, -1 for background
  std::vector<Voxel> vox;
  std::vector<std::vector<int>> nbrs;

  explicit Builder(const Mask& mask) : m(mask), s(mask.shape), id(mask.shape.voxels(), -1) {
    for (int z = 0; z < s.d; ++z)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          if (m.data[s.index(z, y, x)]) {
            id[s.index(z, y, x)] = static_cast<int>(vox.size());
            vox.push_back({z, y, x});
          }
    nbrs.resize(vox.size());
    for (std::size_t i = 0; i < vox.size(); ++i) {
      const Voxel& v = vox[i];
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dz && !dy && !dx) continue;
            const int z = v[0] + dz, y = v[1] + dy, x = v[2] + dx;
            if (!s.contains(z, y, x)) continue;
            const int j = id[s.index(z, y, x)];
            if (j >= 0) nbrs[i].push_back(j);
          }
    }
  }

  SkeletonGraph build() const {
    const int n = static_cast<int>(vox.size());
    std::vector<int> node_of(n, -1);
    std::vector<SkeletonNode> nodes;

    for (int i = 0; i < n; ++i) {
      if (node_of[i] >= 0 || nbrs[i].size() == 2) continue;
      SkeletonNode node;
      const int nid = static_cast<int>(nodes.size());
      if (nbrs[i].size() < 2) {
        node.kind = nbrs[i].empty() ? SkeletonNode::Kind::Isolated : SkeletonNode::Kind::Endpoint;
        node.voxels.push_back(vox[i]);
        node_of[i] = nid;
      } else {
        node.kind = SkeletonNode::Kind::Junction;
        std::vector<int> stack{i};
        node_of[i] = nid;
        while (!stack.empty()) {
          const int v = stack.back();
          stack.pop_back();
          node.voxels.push_back(vox[v]);
          for (int w : nbrs[v]) {
            if (node_of[w] < 0 && nbrs[w].size() > 2) {
              node_of[w] = nid;
              stack.push_back(w);
            }
          }
        }
        std::sort(node.voxels.begin(), node.voxels.end());
      }
      nodes.push_back(std::move(node));
    }

    std::vector<RawBranch> raw;
    std::vector<std::uint8_t> visited(n, 0);
    std::set<std::pair<int, int>> direct;
    auto trace = [&](int start_node, int from, int first) {
      RawBranch b;
      b.a = start_node;
      if (from >= 0) b.path.push_back(vox[from]);
      int prev = from, cur = first;
      for (;;) {
        visited[cur] = 1;
        b.path.push_back(vox[cur]);
        int next = -1;
        for (int w : nbrs[cur]) {
          if (w != prev) {
            next = w;
            break;
          }
        }
        if (next < 0) break;
        if (node_of[next] >= 0) {
          b.b = node_of[next];
          b.path.push_back(vox[next]);
          break;
        }
        if (visited[next]) {
          if (from < 0) b.path.push_back(vox[next]);
          break;
        }
        prev = cur;
        cur = next;
      }
      raw.push_back(std::move(b));
    };

    for (int i = 0; i < n; ++i) {
      const int a = node_of[i];
      if (a < 0) continue;
      for (int w : nbrs[i]) {
        const int b = node_of[w];
        if (b == a) continue;
        if (b >= 0) {
          if (a < b && direct.insert({a, b}).second) raw.push_back(RawBranch{a, b, {vox[i], vox[w]}, {}});
          continue;
        }
        if (!visited[w]) trace(a, i, w);
      }
    }
    for (int i = 0; i < n; ++i) {
      if (node_of[i] < 0 && !visited[i]) trace(-1, -1, i);
    }

    return finish(std::move(nodes), std::move(raw));
  }

  // Dissolves junction clusters that turned out to join fewer than three
  // branches, then converts raw branches to their public form.
  SkeletonGraph finish(std::vector<SkeletonNode> nodes, std::vector<RawBranch> raw) const {
    std::vector<int> degree(nodes.size(), 0);
    auto recount = [&] {
      std::fill(degree.begin(), degree.end(), 0);
      for (const auto& b : raw) {
        if (b.a >= 0) ++degree[b.a];
        if (b.b >= 0) ++degree[b.b];
      }
    };
    recount();
    std::vector<std::uint8_t> dropped(nodes.size(), 0);
    std::vector<std::uint8_t> gone(raw.size(), 0);

    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k].kind != SkeletonNode::Kind::Junction || degree[k] != 2) continue;
      const int nk = static_cast<int>(k);
      std::vector<std::size_t> inc;
      for (std::size_t j = 0; j < raw.size(); ++j) {
        if (gone[j]) continue;
        if (raw[j].a == nk) inc.push_back(j);
        if (raw[j].b == nk) inc.push_back(j);
      }
      dropped[k] = 1;
      if (inc.size() != 2) continue;
      if (inc[0] == inc[1]) {
        RawBranch& b = raw[inc[0]];
        for (const auto& v : nodes[k].voxels)
          if (v != b.path.front() && v != b.path.back()) b.extra.push_back(v);
        b.a = b.b = -1;
        continue;
      }
      RawBranch b1 = raw[inc[0]], b2 = raw[inc[1]];
      if (b1.b != nk) {
        std::reverse(b1.path.begin(), b1.path.end());
        std::swap(b1.a, b1.b);
      }
      if (b2.a != nk) {
        std::reverse(b2.path.begin(), b2.path.end());
        std::swap(b2.a, b2.b);
      }
      RawBranch merged{b1.a, b2.b, b1.path, b1.extra};
      const bool shared = b1.path.back() == b2.path.front();
      merged.path.insert(merged.path.end(), b2.path.begin() + (shared ? 1 : 0), b2.path.end());
      merged.extra.insert(merged.extra.end(), b2.extra.begin(), b2.extra.end());
      for (const auto& v : nodes[k].voxels)
        if (v != b1.path.back() && v != b2.path.front()) merged.extra.push_back(v);
      raw[inc[0]] = std::move(merged);
      gone[inc[1]] = 1;
    }

    // Junction clusters with a single incident branch become endpoints.
    recount();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (dropped[k] || nodes[k].kind != SkeletonNode::Kind::Junction) continue;
      if (degree[k] == 1) nodes[k].kind = SkeletonNode::Kind::Endpoint;
      if (degree[k] == 0) nodes[k].kind = SkeletonNode::Kind::Isolated;
    }

    SkeletonGraph g;
    g.shape = s;
    g.centerline = vox;
    std::vector<int> remap(nodes.size(), -1);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (dropped[k]) continue;
      remap[k] = static_cast<int>(g.nodes.size());
      nodes[k].degree = 0;
      g.nodes.push_back(nodes[k]);
    }
    for (std::size_t j = 0; j < raw.size(); ++j) {
      if (gone[j]) continue;
      const RawBranch& r = raw[j];
      SkeletonBranch b;
      b.node_a = r.a >= 0 ? remap[r.a] : -1;
      b.node_b = r.b >= 0 ? remap[r.b] : -1;
      std::vector<std::array<double, 3>> pts;
      auto centroid = [&](int node) {
        std::array<double, 3> c{};
        for (const auto& v : g.nodes[node].voxels)
          for (int a = 0; a < 3; ++a) c[a] += v[a];
        for (int a = 0; a < 3; ++a) c[a] /= static_cast<double>(g.nodes[node].voxels.size());
        return c;
      };
      if (b.node_a >= 0 && g.nodes[b.node_a].kind == SkeletonNode::Kind::Junction) pts.push_back(centroid(b.node_a));
      for (const auto& v : r.path) pts.push_back({double(v[0]), double(v[1]), double(v[2])});
      if (b.node_b >= 0 && g.nodes[b.node_b].kind == SkeletonNode::Kind::Junction) pts.push_back(centroid(b.node_b));
      b.length = path_length(pts);
      auto is_endpoint = [&](int node) { return node >= 0 && g.nodes[node].kind == SkeletonNode::Kind::Endpoint; };
      const std::size_t lo = (b.node_a >= 0 && !is_endpoint(b.node_a)) ? 1 : 0;
      const std::size_t hi = (b.node_b >= 0 && !is_endpoint(b.node_b)) ? r.path.size() - 1 : r.path.size();
      if (is_endpoint(b.node_a) && g.nodes[b.node_a].voxels.size() > 1) {
        // A dissolved junction cluster: every voxel of it belongs here.
        for (const auto& v : g.nodes[b.node_a].voxels)
          if (v != r.path.front()) b.voxels.push_back(v);
      }
      for (std::size_t i = lo; i < hi && i < r.path.size(); ++i) b.voxels.push_back(r.path[i]);
      b.voxels.insert(b.voxels.end(), r.extra.begin(), r.extra.end());
      if (is_endpoint(b.node_b) && g.nodes[b.node_b].voxels.size() > 1) {
        for (const auto& v : g.nodes[b.node_b].voxels)
          if (v != r.path.back()) b.voxels.push_back(v);
      }
      if (b.node_a >= 0) ++g.nodes[b.node_a].degree;
      if (b.node_b >= 0) ++g.nodes[b.node_b].degree;
      g.branches.push_back(std::move(b));
    }
    return g;
  }
};

}  // namespace

namespace {

// Repeatedly removes, per junction, its shortest terminal branch below the
// spur threshold, so that a pair of genuine short leaves is not removed
// together. With a distance map the threshold grows with the local radius.
SkeletonGraph prune(Mask& m, const SkeletonOptions& opts, const std::vector<double>* dt) {
  for (;;) {
    SkeletonGraph g = Builder(m).build();
    std::map<int, std::size_t> shortest;
    for (std::size_t j = 0; j < g.branches.size(); ++j) {
      const auto& b = g.branches[j];
      if (b.node_a < 0 || b.node_b < 0) continue;
      const auto ka = g.nodes[b.node_a].kind, kb = g.nodes[b.node_b].kind;
      int junction = -1;
      if (ka == SkeletonNode::Kind::Junction && kb == SkeletonNode::Kind::Endpoint) junction = b.node_a;
      if (kb == SkeletonNode::Kind::Junction && ka == SkeletonNode::Kind::Endpoint) junction = b.node_b;
      if (junction < 0) continue;
      double limit = opts.min_spur_length;
      if (dt) {
        double radius = 0;
        for (const auto& v : g.nodes[junction].voxels)
          radius = std::max(radius, std::sqrt((*dt)[m.shape.index(v[0], v[1], v[2])]));
        limit = std::max(limit, opts.spur_radius_factor * radius);
      }
      if (b.length >= limit) continue;
      auto it = shortest.find(junction);
      if (it == shortest.end() || b.length < g.branches[it->second].length) shortest[junction] = j;
    }
    if (shortest.empty()) return g;
    for (const auto& [junction, j] : shortest) {
      for (const auto& v : g.branches[j].voxels) m.at(v[0], v[1], v[2]) = 0;
    }
  }
}

// Thinning stops up to a couple of voxels short of where the medial plateau
// of a tube ends. Each endpoint is walked outward along its local tangent
// while the distance to the background stays within half a voxel of the
// mean along the last few centerline voxels.
void extend_endpoints(Mask& cl, const Mask& mask, const std::vector<double>& dt) {
  const Shape3 s = cl.shape;
  auto on = [&](const Voxel& v) { return s.contains(v[0], v[1], v[2]) && cl.at(v[0], v[1], v[2]) != 0; };
  auto neighbours = [&](const Voxel& v) {
    std::vector<Voxel> out;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dz && !dy && !dx) continue;
          const Voxel w{v[0] + dz, v[1] + dy, v[2] + dx};
          if (on(w)) out.push_back(w);
        }
    return out;
  };
  std::vector<Voxel> tips;
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if (cl.at(z, y, x) && neighbours({z, y, x}).size() == 1) tips.push_back({z, y, x});

  constexpr int kTangentSpan = 5;
  for (const Voxel& tip : tips) {
    std::vector<Voxel> chain{tip};
    Voxel prev = tip, cur = neighbours(tip)[0];
    while (static_cast<int>(chain.size()) < kTangentSpan) {
      const auto nb = neighbours(cur);
      if (nb.size() != 2) break;
      chain.push_back(cur);
      const Voxel next = nb[0] == prev ? nb[1] : nb[0];
      prev = cur;
      cur = next;
    }
    if (chain.size() < 3) continue;
    double ref = 0;
    for (const auto& v : chain) ref += std::sqrt(dt[s.index(v[0], v[1], v[2])]);
    ref /= static_cast<double>(chain.size());
    const Voxel& back = chain.back();
    std::array<double, 3> dir{double(tip[0] - back[0]), double(tip[1] - back[1]), double(tip[2] - back[2])};
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    for (auto& c : dir) c /= len;

    Voxel last = tip;
    std::array<double, 3> p{double(tip[0]), double(tip[1]), double(tip[2])};
    const int max_steps = static_cast<int>(std::ceil(4 * ref)) + 4;
    for (int k = 0; k < max_steps; ++k) {
      for (int a = 0; a < 3; ++a) p[a] += 0.5 * dir[a];
      const Voxel v{static_cast<int>(std::lround(p[0])), static_cast<int>(std::lround(p[1])),
                    static_cast<int>(std::lround(p[2]))};
      if (v == last) continue;
      if (!s.contains(v[0], v[1], v[2]) || !mask.at(v[0], v[1], v[2])) break;
      if (std::sqrt(dt[s.index(v[0], v[1], v[2])]) < ref - 0.5) break;
      const auto nb = neighbours(v);
      if (nb.size() != 1 || nb[0] != last) break;
      cl.at(v[0], v[1], v[2]) = 1;
      last = v;
    }
  }
}

}  // namespace

SkeletonGraph skeleton_graph(const Mask& centerline, const SkeletonOptions& opts) {
  Mask m = centerline;
  return prune(m, opts, nullptr);
}

SkeletonGraph skeletonize(const Mask& mask, const SkeletonOptions& opts) {
  const std::vector<double> dt = distance_transform_sq(mask);
  Mask m = thin_with(mask, dt);
  SkeletonGraph g = prune(m, opts, &dt);
  if (!opts.extend_endpoints) return g;
  extend_endpoints(m, mask, dt);
  return Builder(m).build();
}

// ---------------------------------------------------------------------------
// Tree metrics

namespace {

void check_skeleton(const Mask& pred, const SkeletonGraph& g, const char* what) {
  if (!(pred.shape == g.shape)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(pred.shape) + " vs " +
                                to_string(g.shape));
  }
  if (g.empty()) throw std::domain_error(std::string(what) + ": reference skeleton is empty");
}

}  // namespace

double tree_length_detected(const Mask& pred, const SkeletonGraph& gt_skel) {
  check_skeleton(pred, gt_skel, "tree_length_detected");
  std::size_t hit = 0;
  for (const auto& v : gt_skel.centerline) hit += pred.at(v[0], v[1], v[2]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(gt_skel.centerline.size());
}

bool branch_is_detected(const Mask& pred, const SkeletonBranch& branch, const SkeletonGraph& graph) {
  std::vector<Voxel> vs = branch.voxels;
  if (vs.empty()) {
    for (int node : {branch.node_a, branch.node_b})
      if (node >= 0) vs.insert(vs.end(), graph.nodes[node].voxels.begin(), graph.nodes[node].voxels.end());
  }
  if (vs.empty()) return false;
  std::size_t hit = 0;
  for (const auto& v : vs) hit += pred.at(v[0], v[1], v[2]) ? 1 : 0;
  // hit / n > 0.8 in exact integer arithmetic
  return 5 * hit > 4 * vs.size();
}

double branch_detected(const Mask& pred, const SkeletonGraph& gt_skel) {
  check_skeleton(pred, gt_skel, "branch_detected");
  if (gt_skel.branches.empty()) return tree_length_detected(pred, gt_skel) > 0.8 ? 1.0 : 0.0;
  std::size_t detected = 0;
  for (const auto& b : gt_skel.branches) detected += branch_is_detected(pred, b, gt_skel) ? 1 : 0;
  return static_cast<double>(detected) / static_cast<double>(gt_skel.branches.size());
}

double mean_score(double precision, double dsc, double td, double bd) { return 0.25 * (precision + dsc + td + bd); }

double overall_score(double iou, double precision, double td, double bd, double leakage) {
  return 0.7 * 0.25 * (iou + precision + td + bd) + 0.3 * leakage;
}

MetricsReport evaluate(const Mask& pred, const Mask& gt, const EvalOptions& opts) {
  return evaluate(pred, gt, skeletonize(gt, opts.skeleton), opts);
}

MetricsReport evaluate(const Mask& pred, const Mask& gt, const SkeletonGraph& gt_skel, const EvalOptions& opts) {
  MetricsReport r;
  r.counts = confusion(pred, gt);
  r.precision = precision(r.counts);
  r.dsc = dsc(r.counts);
  r.iou = opts.iou_as_printed ? iou_as_printed(r.counts) : iou(r.counts);
  r.leakage = leakage(r.counts);
  if (gt_skel.empty()) {
    const double v = both_empty(r.counts) ? 1.0 : 0.0;
    r.td = r.bd = v;
  } else {
    r.td = tree_length_detected(pred, gt_skel);
    r.bd = branch_detected(pred, gt_skel);
    r.gt_branches = gt_skel.branches.size();
    for (const auto& b : gt_skel.branches) r.detected_branches += branch_is_detected(pred, b, gt_skel) ? 1 : 0;
  }
  r.mean_score = mean_score(r.precision, r.dsc, r.td, r.bd);
  r.overall_score = overall_score(r.iou, r.precision, r.td, r.bd, r.leakage);
  return r;
}

std::string report_csv_header() {
  return "case,precision,dsc,td,bd,mean_score,iou,leakage,overall_score,tp,fp,fn,tn,gt_branches,detected_branches";
}

std::string report_csv_row(const std::string& case_id, const MetricsReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << case_id << ',' << r.precision << ',' << r.dsc << ',' << r.td << ',' << r.bd << ',' << r.mean_score << ','
     << r.iou << ',' << r.leakage << ',' << r.overall_score << ',' << r.counts.tp << ',' << r.counts.fp << ','
     << r.counts.fn << ',' << r.counts.tn << ',' << r.gt_branches << ',' << r.detected_branches;
  return os.str();
}

std::string report_csv_footer(const std::vector<MetricsReport>& rs) {
  auto fields = [](const MetricsReport& r) {
    return std::array<double, 8>{r.precision, r.dsc, r.td, r.bd, r.mean_score, r.iou, r.leakage, r.overall_score};
  };
  std::array<double, 8> mean{}, var{};
  const double n = static_cast<double>(rs.size());
  for (const auto& r : rs) {
    const auto f = fields(r);
    for (int i = 0; i < 8; ++i) mean[i] += f[i] / n;
  }
  for (const auto& r : rs) {
    const auto f = fields(r);
    for (int i = 0; i < 8; ++i) var[i] += (f[i] - mean[i]) * (f[i] - mean[i]) / n;
  }
  std::ostringstream os;
  os.precision(10);
  os << "mean";
  for (double v : mean) os << ',' << (rs.empty() ? 0.0 : v);
  os << ",,,,,,\nstd";
  for (double v : var) os << ',' << (rs.empty() ? 0.0 : std::sqrt(v));
  os << ",,,,,,";
  return os.str();
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"precision", r.precision},
          {"dsc", r.dsc},
          {"td", r.td},
          {"bd", r.bd},
          {"mean_score", r.mean_score},
          {"iou", r.iou},
          {"leakage", r.leakage},
          {"overall_score", r.overall_score},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"fn", r.counts.fn},
          {"tn", r.counts.tn},
          {"gt_branches", r.gt_branches},
          {"detected_branches", r.detected_branches}};
}

}  // namespace tfe
