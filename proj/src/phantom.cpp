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


#include "tfe/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "tfe/components.hpp"
#include "tfe/volume_io.hpp"

namespace tfe {

namespace {

using Vec = std::array<double, 3>;

Vec add(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec sub(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec mul(const Vec& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
Vec unit(const Vec& a) { return mul(a, 1.0 / norm(a)); }

double point_segment_distance(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = sub(b, a);
  const double len2 = dot(ab, ab);
  double t = len2 > 0 ? dot(sub(p, a), ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(sub(p, add(a, mul(ab, t))));
}

double segment_distance(const TreeSegment& s, const TreeSegment& t) {
  const double len = s.length();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
  double best = 1e300;
  for (int i = 0; i <= steps; ++i) {
    const Vec p = add(s.start, mul(sub(s.end, s.start), static_cast<double>(i) / steps));
    best = std::min(best, point_segment_distance(p, t.start, t.end));
  }
  return best;
}

Vec random_perpendicular(const Vec& d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec v{n(rng), n(rng), n(rng)};
    v = sub(v, mul(d, dot(v, d)));
    if (norm(v) > 1e-6) return unit(v);
  }
}

bool inside(const Shape3& s, const Vec& p, double margin) {
  return p[0] >= margin && p[1] >= margin && p[2] >= margin && p[0] <= s.d - 1 - margin &&
         p[1] <= s.h - 1 - margin && p[2] <= s.w - 1 - margin;
}

bool related(const std::vector<TreeSegment>& segs, int i, int j) {
  if (segs[i].parent == j || segs[j].parent == i) return true;
  return segs[i].parent >= 0 && segs[i].parent == segs[j].parent;
}

bool valid_tree(const TreeSpec& spec, const std::vector<TreeSegment>& segs) {
  for (const auto& s : segs) {
    const double margin = s.radius + spec.intensity.wall_thickness + 1.0;
    if (!inside(spec.shape, s.start, margin) || !inside(spec.shape, s.end, margin)) return false;
  }
  for (int i = 0; i < static_cast<int>(segs.size()); ++i) {
    for (int j = i + 1; j < static_cast<int>(segs.size()); ++j) {
      if (related(segs, i, j)) continue;
      const double gap = segs[i].radius + segs[j].radius + 2.0 * spec.intensity.wall_thickness + 1.0;
      if (segment_distance(segs[i], segs[j]) < gap) return false;
    }
  }
  return true;
}

std::vector<TreeSegment> draw_tree(const TreeSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double pi = std::numbers::pi;
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  std::vector<TreeSegment> segs;
  TreeSegment root;
  const double margin = spec.root_radius + spec.intensity.wall_thickness + 1.0;
  root.start = {margin, 0.5 * (spec.shape.h - 1) + uniform(-2, 2), 0.5 * (spec.shape.w - 1) + uniform(-2, 2)};
  const double tilt = uniform(0, 10) * pi / 180;
  const Vec axis{1, 0, 0};
  const Vec dir = unit(add(mul(axis, std::cos(tilt)), mul(random_perpendicular(axis, rng), std::sin(tilt))));
  root.end = add(root.start, mul(dir, spec.root_length));
  root.radius = spec.radius_at(0);
  segs.push_back(root);

  std::size_t frontier_begin = 0;
  for (int g = 1; g <= spec.depth; ++g) {
    const std::size_t frontier_end = segs.size();
    for (std::size_t p = frontier_begin; p < frontier_end; ++p) {
      const Vec d = unit(sub(segs[p].end, segs[p].start));
      const Vec perp = random_perpendicular(d, rng);
      for (int side : {1, -1}) {
        const double theta = uniform(spec.angle_min, spec.angle_max) * pi / 180;
        const Vec cd = add(mul(d, std::cos(theta)), mul(perp, side * std::sin(theta)));
        const double len = uniform(spec.length_min, spec.length_max) * std::pow(spec.length_decay, g - 1);
        TreeSegment c;
        c.start = segs[p].end;
        c.end = add(c.start, mul(cd, len));
        c.radius = spec.radius_at(g);
        c.generation = g;
        c.parent = static_cast<int>(p);
        segs.push_back(c);
      }
    }
    frontier_begin = frontier_end;
  }
  return segs;
}

Voxel round_voxel(const Vec& p) {
  return {static_cast<int>(std::lround(p[0])), static_cast<int>(std::lround(p[1])), static_cast<int>(std::lround(p[2]))};
}

SkeletonGraph truth_graph(const Shape3& shape, const std::vector<TreeSegment>& segs) {
  SkeletonGraph g;
  g.shape = shape;
  const int n = static_cast<int>(segs.size());
  std::vector<int> children(n, 0);
  for (const auto& s : segs)
    if (s.parent >= 0) ++children[s.parent];

  // Node 0 is the root inlet; node i+1 sits at the end of segment i.
  g.nodes.resize(n + 1);
  g.nodes[0].kind = SkeletonNode::Kind::Endpoint;
  g.nodes[0].voxels = {round_voxel(segs[0].start)};
  for (int i = 0; i < n; ++i) {
    g.nodes[i + 1].kind = children[i] ? SkeletonNode::Kind::Junction : SkeletonNode::Kind::Endpoint;
    g.nodes[i + 1].voxels = {round_voxel(segs[i].end)};
  }

  std::vector<std::uint8_t> taken(shape.voxels(), 0);
  for (int i = 0; i < n; ++i) {
    const auto& nv = g.nodes[i + 1].voxels[0];
    if (children[i]) taken[shape.index(nv[0], nv[1], nv[2])] = 1;
  }
  for (int i = 0; i < n; ++i) {
    SkeletonBranch b;
    b.node_a = segs[i].parent >= 0 ? segs[i].parent + 1 : 0;
    b.node_b = i + 1;
    b.length = segs[i].length();
    const int steps = std::max(1, static_cast<int>(std::ceil(b.length / 0.25)));
    for (int k = 0; k <= steps; ++k) {
      const Vec p = add(segs[i].start, mul(sub(segs[i].end, segs[i].start), static_cast<double>(k) / steps));
      const Voxel v = round_voxel(p);
      auto& t = taken[shape.index(v[0], v[1], v[2])];
      if (t) continue;
      t = 1;
      b.voxels.push_back(v);
    }
    ++g.nodes[b.node_a].degree;
    ++g.nodes[b.node_b].degree;
    g.branches.push_back(std::move(b));
  }
  for (int z = 0; z < shape.d; ++z)
    for (int y = 0; y < shape.h; ++y)
      for (int x = 0; x < shape.w; ++x)
        if (taken[shape.index(z, y, x)]) g.centerline.push_back({z, y, x});
  return g;
}

}  // namespace

void TreeSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TreeSpec: " + m); };
  if (depth < 0 || depth > 8) fail("depth must lie in [0, 8]");
  if (!(root_radius > 0) || !(radius_decay > 0) || radius_decay > 1) fail("radius must be positive, decay in (0, 1]");
  if (radius_at(depth) < 1.0) fail("radius at max depth below one voxel");
  if (!(root_length > 0) || !(length_min > 0) || length_max < length_min) fail("invalid branch length range");
  if (!(length_decay > 0)) fail("length_decay must be positive");
  if (angle_min < 0 || angle_max < angle_min || angle_max >= 90) fail("invalid branching angle range");
  if (shape.d < 8 || shape.h < 8 || shape.w < 8) fail("volume too small");
  if (max_attempts < 1) fail("max_attempts must be positive");
}

double TreeSpec::radius_at(int generation) const { return root_radius * std::pow(radius_decay, generation); }

double TreeSegment::length() const {
  const double dz = end[0] - start[0], dy = end[1] - start[1], dx = end[2] - start[2];
  return std::sqrt(dz * dz + dy * dy + dx * dx);
}

double capsule_volume(double radius, double length) {
  return std::numbers::pi * radius * radius * length + 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
}

Phantom rasterize_tree(const TreeSpec& spec, const std::vector<TreeSegment>& segments, std::mt19937_64& rng) {
  const Shape3 s = spec.shape;
  const auto& im = spec.intensity;
  Phantom out;
  out.segments = segments;
  out.label = Mask(s);
  std::vector<std::uint8_t> wall(s.voxels(), 0);
  for (const auto& seg : segments) {
    const double outer = seg.radius + im.wall_thickness;
    int lo[3], hi[3];
    const int dims[3] = {s.d, s.h, s.w};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor(std::min(seg.start[a], seg.end[a]) - outer)));
      hi[a] = std::min(dims[a] - 1, static_cast<int>(std::ceil(std::max(seg.start[a], seg.end[a]) + outer)));
    }
    for (int z = lo[0]; z <= hi[0]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[2]; x <= hi[2]; ++x) {
          const double d = point_segment_distance({double(z), double(y), double(x)}, seg.start, seg.end);
          const std::size_t i = s.index(z, y, x);
          if (d <= seg.radius) out.label.data[i] = 1;
          else if (d <= outer) wall[i] = 1;
        }
  }

  std::normal_distribution<float> noise(0.0f, im.noise_sigma);
  out.image.values = Tensor<float>(1, s);
  for (std::size_t i = 0; i < s.voxels(); ++i) {
    const float base = out.label.data[i] ? im.lumen : (wall[i] ? im.wall : im.background);
    out.image.values[i] = base + (im.noise_sigma > 0 ? noise(rng) : 0.0f);
  }
  out.truth = truth_graph(s, segments);
  out.branch_count = segments.size();
  for (const auto& seg : segments) out.tree_length += seg.length();
  return out;
}

Phantom generate_tree(const TreeSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    auto segs = draw_tree(spec, rng);
    if (!valid_tree(spec, segs)) continue;
    Phantom p = rasterize_tree(spec, segs, rng);
    // Discrete unions of nearby tubes can enclose a tunnel or cavity; the
    // label must stay a single solid tree.
    if (connected_components(p.label, 26).count() != 1 || euler_characteristic(p.label) != 1) continue;
    if (fill_holes(p.label).count() != p.label.count()) continue;
    return p;
  }
  throw std::invalid_argument("generate_tree: no valid tree of depth " + std::to_string(spec.depth) + " fits in " +
                              to_string(spec.shape) + " after " + std::to_string(spec.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Corpus

std::array<int, 3> split_sizes(int n) {
  const int train = static_cast<int>(std::lround(0.6 * n));
  const int val = static_cast<int>(std::lround(0.2 * n));
  return {train, val, n - train - val};
}

std::uint64_t case_seed(std::uint64_t corpus_seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(corpus_seed), static_cast<std::uint32_t>(corpus_seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<CorpusCase> CorpusManifest::split(const std::string& name) const {
  std::vector<CorpusCase> out;
  for (const auto& c : cases)
    if (c.split == name) out.push_back(c);
  return out;
}

nlohmann::json truth_to_json(const Phantom& p) {
  nlohmann::json branches = nlohmann::json::array();
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    const auto& s = p.segments[i];
    branches.push_back({{"start", s.start},
                        {"end", s.end},
                        {"radius", s.radius},
                        {"generation", s.generation},
                        {"parent", s.parent},
                        {"length", s.length()}});
  }
  return {{"branch_count", p.branch_count},
          {"bifurcation_count", p.truth.bifurcation_count()},
          {"tree_length", p.tree_length},
          {"branches", branches}};
}

nlohmann::json tree_spec_to_json(const TreeSpec& s) {
  return {{"depth", s.depth},
          {"root_radius", s.root_radius},
          {"radius_decay", s.radius_decay},
          {"root_length", s.root_length},
          {"length_min", s.length_min},
          {"length_max", s.length_max},
          {"length_decay", s.length_decay},
          {"angle_min", s.angle_min},
          {"angle_max", s.angle_max},
          {"shape", {s.shape.d, s.shape.h, s.shape.w}},
          {"intensity",
           {{"lumen", s.intensity.lumen},
            {"wall", s.intensity.wall},
            {"background", s.intensity.background},
            {"wall_thickness", s.intensity.wall_thickness},
            {"noise_sigma", s.intensity.noise_sigma}}},
          {"max_attempts", s.max_attempts}};
}

TreeSpec tree_spec_from_json(const nlohmann::json& j, TreeSpec s) {
  s.depth = j.value("depth", s.depth);
  s.root_radius = j.value("root_radius", s.root_radius);
  s.radius_decay = j.value("radius_decay", s.radius_decay);
  s.root_length = j.value("root_length", s.root_length);
  s.length_min = j.value("length_min", s.length_min);
  s.length_max = j.value("length_max", s.length_max);
  s.length_decay = j.value("length_decay", s.length_decay);
  s.angle_min = j.value("angle_min", s.angle_min);
  s.angle_max = j.value("angle_max", s.angle_max);
  if (j.contains("shape")) {
    const auto& sh = j.at("shape");
    s.shape = {sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>()};
  }
  if (j.contains("intensity")) {
    const auto& im = j.at("intensity");
    s.intensity.lumen = im.value("lumen", s.intensity.lumen);
    s.intensity.wall = im.value("wall", s.intensity.wall);
    s.intensity.background = im.value("background", s.intensity.background);
    s.intensity.wall_thickness = im.value("wall_thickness", s.intensity.wall_thickness);
    s.intensity.noise_sigma = im.value("noise_sigma", s.intensity.noise_sigma);
  }
  s.max_attempts = j.value("max_attempts", s.max_attempts);
  return s;
}

CorpusManifest generate_corpus(int n_cases, const CorpusSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  if (n_cases < 1) throw std::invalid_argument("generate_corpus: n_cases must be positive");
  if (spec.depth_min < 0 || spec.depth_max < spec.depth_min) throw std::invalid_argument("generate_corpus: bad depth range");
  std::filesystem::create_directories(out_dir);
  const auto sizes = split_sizes(n_cases);
  CorpusManifest m;
  m.seed = seed;
  for (int i = 0; i < n_cases; ++i) {
    CorpusCase c;
    char id[32];
    std::snprintf(id, sizeof id, "case_%03d", i);
    c.id = id;
    c.split = i < sizes[0] ? "train" : (i < sizes[0] + sizes[1] ? "val" : "test");
    c.seed = case_seed(seed, i);
    std::mt19937_64 rng(c.seed);
    TreeSpec ts = spec.tree;
    c.depth = std::uniform_int_distribution<int>(spec.depth_min, spec.depth_max)(rng);
    ts.depth = c.depth;
    ts.root_radius = std::uniform_real_distribution<double>(spec.root_radius_min, spec.root_radius_max)(rng);
    const Phantom p = generate_tree(ts, rng);
    c.image = c.id + "_image.tvol";
    c.label = c.id + "_label.tvol";
    c.truth = c.id + "_truth.json";
    write_volume(p.image, out_dir / c.image);
    write_mask(p.label, out_dir / c.label);
    std::ofstream(out_dir / c.truth) << truth_to_json(p).dump(2) << '\n';
    c.image = out_dir / c.image;
    c.label = out_dir / c.label;
    c.truth = out_dir / c.truth;
    m.cases.push_back(std::move(c));
  }
  return m;
}

void write_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  const auto base = std::filesystem::absolute(path).parent_path().lexically_normal();
  auto rel = [&](const std::filesystem::path& p) {
    if (p.empty()) return std::string();
    const auto r = std::filesystem::absolute(p).lexically_normal().lexically_relative(base);
    return r.empty() ? p.string() : r.generic_string();
  };
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : m.cases) {
    nlohmann::json e{{"id", c.id},          {"split", c.split}, {"image", rel(c.image)}, {"label", rel(c.label)},
                     {"truth", rel(c.truth)}, {"seed", c.seed},   {"depth", c.depth}};
    if (!c.roi.empty()) e["roi"] = c.roi;
    cases.push_back(std::move(e));
  }
  std::ofstream(path) << nlohmann::json{{"seed", m.seed}, {"cases", cases}}.dump(2) << '\n';
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const auto j = nlohmann::json::parse(in);
  CorpusManifest m;
  m.seed = j.value("seed", std::uint64_t{0});
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  for (const auto& e : j.at("cases")) {
    CorpusCase c;
    c.id = e.at("id").get<std::string>();
    c.split = e.value("split", std::string("train"));
    c.image = resolve(e.at("image").get<std::string>());
    c.label = resolve(e.at("label").get<std::string>());
    if (e.contains("truth")) c.truth = resolve(e.at("truth").get<std::string>());
    c.seed = e.value("seed", std::uint64_t{0});
    c.depth = e.value("depth", 0);
    if (e.contains("roi")) {
      c.roi = e.at("roi").get<std::vector<int>>();
      if (c.roi.size() != 6) throw std::invalid_argument(path.string() + ": case '" + c.id + "' roi needs 6 integers");
    }
    m.cases.push_back(std::move(c));
  }
  return m;
}

}  // namespace tfe
