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


#include "tfe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tfe/params.hpp"

namespace tfe {

float normalize_hu(float hu) {
  const float c = std::clamp(hu, kHuMin, kHuMax);
  return (c - kHuMin) / (kHuMax - kHuMin);
}

TrainCase preprocess_case(const Volume& raw, const Mask& label, const std::optional<Roi>& roi, const std::string& id) {
  const Shape3 s = raw.shape();
  if (!(label.shape == s)) {
    throw std::invalid_argument("preprocess_case: image " + to_string(s) + " and label " + to_string(label.shape) +
                                " differ in shape");
  }
  Roi box{{0, 0, 0}, {s.d, s.h, s.w}};
  if (roi) box = *roi;
  if (box.empty()) throw std::invalid_argument("preprocess_case: empty region of interest");
  const int dims[3] = {s.d, s.h, s.w};
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] < 0 || box.hi[a] > dims[a]) throw std::invalid_argument("preprocess_case: roi outside the volume");
  }
  TrainCase c;
  c.id = id;
  const Shape3 cs = box.shape();
  c.image = Tensor<float>(1, cs);
  c.label = Mask(cs, label.spacing);
  for (int z = 0; z < cs.d; ++z)
    for (int y = 0; y < cs.h; ++y)
      for (int x = 0; x < cs.w; ++x) {
        const int sz = z + box.lo[0], sy = y + box.lo[1], sx = x + box.lo[2];
        c.image(0, z, y, x) = normalize_hu(raw.values(0, sz, sy, sx));
        const bool fg = label.at(sz, sy, sx) != 0;
        c.label.at(z, y, x) = fg ? 1 : 0;
        if (fg) c.foreground.push_back(static_cast<std::uint32_t>(cs.index(z, y, x)));
      }
  return c;
}

Patch sample_patch(const TrainCase& c, const PatchOptions& opts, std::mt19937_64& rng) {
  const Shape3 s = c.image.shape();
  const Shape3 p = opts.size;
  if (p.d > s.d || p.h > s.h || p.w > s.w) {
    throw std::invalid_argument("sample_patch: case " + to_string(s) + " is smaller than patch " + to_string(p));
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int limit[3] = {s.d - p.d, s.h - p.h, s.w - p.w};
  const int size[3] = {p.d, p.h, p.w};

  Patch out;
  const bool biased = u01(rng) < opts.foreground_bias && !c.foreground.empty();
  if (biased) {
    const std::uint32_t flat = c.foreground[std::uniform_int_distribution<std::size_t>(0, c.foreground.size() - 1)(rng)];
    const int v[3] = {static_cast<int>(flat / (static_cast<std::size_t>(s.h) * s.w)),
                      static_cast<int>((flat / s.w) % s.h), static_cast<int>(flat % s.w)};
    for (int a = 0; a < 3; ++a) out.corner[a] = uniform_int(std::max(0, v[a] - size[a] + 1), std::min(limit[a], v[a]));
  } else {
    for (int a = 0; a < 3; ++a) out.corner[a] = uniform_int(0, limit[a]);
  }
  out.lib_r = opts.lib_r_min + (opts.lib_r_max - opts.lib_r_min) * u01(rng);

  out.image = Tensor<float>(1, p);
  out.label = Mask(p, c.label.spacing);
  for (int z = 0; z < p.d; ++z)
    for (int y = 0; y < p.h; ++y)
      for (int x = 0; x < p.w; ++x) {
        const int sz = z + out.corner[0], sy = y + out.corner[1], sx = x + out.corner[2];
        out.image(0, z, y, x) = c.image(0, sz, sy, sx);
        out.label.at(z, y, x) = c.label.at(sz, sy, sx);
      }
  LibParams lib = opts.lib;
  lib.r = out.lib_r;
  out.weight = lib_weights(foreground_ratio(out.label, lib.window), lib).cast<float>();
  return out;
}

namespace {

// One quarter turn of a single-channel grid: out[.., u_a, .., u_b, ..] =
// in[.., n_a - 1 - u_b, .., u_a, ..].
template <typename V>
std::vector<V> quarter_turn(const std::vector<V>& in, Shape3& shape, int a, int b) {
  const int n[3] = {shape.d, shape.h, shape.w};
  int m[3] = {n[0], n[1], n[2]};
  std::swap(m[a], m[b]);
  const Shape3 os{m[0], m[1], m[2]};
  std::vector<V> out(in.size());
  int u[3];
  for (u[0] = 0; u[0] < m[0]; ++u[0])
    for (u[1] = 0; u[1] < m[1]; ++u[1])
      for (u[2] = 0; u[2] < m[2]; ++u[2]) {
        int i[3] = {u[0], u[1], u[2]};
        i[a] = n[a] - 1 - u[b];
        i[b] = u[a];
        out[os.index(u[0], u[1], u[2])] = in[shape.index(i[0], i[1], i[2])];
      }
  shape = os;
  return out;
}

void check_plane(int a, int b) {
  if (a < 0 || a > 2 || b < 0 || b > 2 || a == b) throw std::invalid_argument("rot90: invalid axis plane");
}

}  // namespace

Tensor<float> rot90(const Tensor<float>& t, int a, int b, int k) {
  check_plane(a, b);
  k = ((k % 4) + 4) % 4;
  Shape3 shape = t.shape();
  std::vector<std::vector<float>> chans;
  for (int c = 0; c < t.channels(); ++c) chans.emplace_back(t.channel(c).begin(), t.channel(c).end());
  for (int r = 0; r < k; ++r) {
    Shape3 s = shape;
    for (auto& ch : chans) {
      s = shape;
      ch = quarter_turn(ch, s, a, b);
    }
    shape = s;
  }
  Tensor<float> out(t.channels(), shape);
  for (int c = 0; c < t.channels(); ++c) std::copy(chans[c].begin(), chans[c].end(), out.channel(c).begin());
  return out;
}

Mask rot90(const Mask& m, int a, int b, int k) {
  check_plane(a, b);
  k = ((k % 4) + 4) % 4;
  Shape3 shape = m.shape;
  std::vector<std::uint8_t> data = m.data;
  for (int r = 0; r < k; ++r) data = quarter_turn(data, shape, a, b);
  Mask out(shape, m.spacing);
  out.data = std::move(data);
  return out;
}

Rotation rotate_augment(Patch& p, double threshold, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Rotation r;
  if (!(u01(rng) < 1.0 - threshold)) return r;
  static constexpr int kPlanes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  const int plane = std::uniform_int_distribution<int>(0, 2)(rng);
  r.applied = true;
  r.a = kPlanes[plane][0];
  r.b = kPlanes[plane][1];
  r.k = std::uniform_int_distribution<int>(1, 3)(rng);
  p.image = rot90(p.image, r.a, r.b, r.k);
  p.label = rot90(p.label, r.a, r.b, r.k);
  p.weight = rot90(p.weight, r.a, r.b, r.k);
  return r;
}

// ---------------------------------------------------------------------------
// Stage configuration

void StageConfig::validate(const TfeNetConfig& model) const {
  auto fail = [&](const std::string& m) { throw std::invalid_argument("stage '" + name + "': " + m); };
  if (rotation_threshold < 0 || rotation_threshold > 1) fail("rotation threshold must lie in [0, 1]");
  if (patch.foreground_bias < 0 || patch.foreground_bias > 1) fail("foreground bias must lie in [0, 1]");
  if (epochs < 1) fail("epochs must be positive");
  if (!(lr > 0)) fail("learning rate must be positive");
  if (momentum < 0 || momentum >= 1) fail("momentum must lie in [0, 1)");
  if (patches_per_case < 1) fail("patches_per_case must be positive");
  if (aux_weight < 0) fail("aux_weight must be non-negative");
  if (patch.lib_r_min < 2 || patch.lib_r_max > 3 || patch.lib_r_max < patch.lib_r_min) fail("lib r range must lie in [2, 3]");
  const int m = model.required_multiple();
  const Shape3 s = patch.size;
  if (s.d <= 0 || s.h <= 0 || s.w <= 0 || s.d % m || s.h % m || s.w % m) {
    fail("patch size " + to_string(s) + " must be a positive multiple of " + std::to_string(m));
  }
  if (loss == LossKind::Gul) gul.validate();
  else tversky.validate();
  patch.lib.validate();
}

double StageConfig::lr_at(int epoch) const {
  double v = lr;
  for (int e : decay_epochs)
    if (epoch >= e) v *= decay_factor;
  return v;
}

StageConfig stage1_defaults() { return StageConfig{}; }

StageConfig stage2_defaults() {
  StageConfig s;
  s.name = "output2";
  s.gul.alpha = 0.1;
  s.rotation_threshold = 0.9;
  return s;
}

nlohmann::json to_json(const StageConfig& s) {
  return {{"name", s.name},
          {"loss", s.loss == LossKind::Gul ? "gul" : "tversky"},
          {"gul", {{"alpha", s.gul.alpha}, {"root", s.gul.root}}},
          {"tversky", {{"alpha", s.tversky.alpha}, {"beta", s.tversky.beta}}},
          {"rotation_threshold", s.rotation_threshold},
          {"epochs", s.epochs},
          {"lr", s.lr},
          {"momentum", s.momentum},
          {"decay_epochs", s.decay_epochs},
          {"decay_factor", s.decay_factor},
          {"patches_per_case", s.patches_per_case},
          {"patch_size", {s.patch.size.d, s.patch.size.h, s.patch.size.w}},
          {"foreground_bias", s.patch.foreground_bias},
          {"lib", {{"lambda", s.patch.lib.lambda}, {"window", s.patch.lib.window}, {"r_min", s.patch.lib_r_min},
                   {"r_max", s.patch.lib_r_max}}},
          {"aux_weight", s.aux_weight}};
}

StageConfig stage_config_from_json(const nlohmann::json& j, StageConfig s) {
  s.name = j.value("name", s.name);
  if (j.contains("loss")) {
    const auto k = j.at("loss").get<std::string>();
    if (k == "gul") s.loss = LossKind::Gul;
    else if (k == "tversky") s.loss = LossKind::Tversky;
    else throw std::invalid_argument("unknown loss kind '" + k + "'");
  }
  if (j.contains("gul")) {
    s.gul.alpha = j.at("gul").value("alpha", s.gul.alpha);
    s.gul.root = j.at("gul").value("root", s.gul.root);
  }
  if (j.contains("tversky")) {
    s.tversky.alpha = j.at("tversky").value("alpha", s.tversky.alpha);
    s.tversky.beta = j.at("tversky").value("beta", s.tversky.beta);
  }
  s.rotation_threshold = j.value("rotation_threshold", s.rotation_threshold);
  s.epochs = j.value("epochs", s.epochs);
  s.lr = j.value("lr", s.lr);
  s.momentum = j.value("momentum", s.momentum);
  s.decay_epochs = j.value("decay_epochs", s.decay_epochs);
  s.decay_factor = j.value("decay_factor", s.decay_factor);
  s.patches_per_case = j.value("patches_per_case", s.patches_per_case);
  if (j.contains("patch_size")) {
    const auto& p = j.at("patch_size");
    s.patch.size = {p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
  }
  s.patch.foreground_bias = j.value("foreground_bias", s.patch.foreground_bias);
  if (j.contains("lib")) {
    const auto& l = j.at("lib");
    s.patch.lib.lambda = l.value("lambda", s.patch.lib.lambda);
    s.patch.lib.window = l.value("window", s.patch.lib.window);
    s.patch.lib_r_min = l.value("r_min", s.patch.lib_r_min);
    s.patch.lib_r_max = l.value("r_max", s.patch.lib_r_max);
  }
  s.aux_weight = j.value("aux_weight", s.aux_weight);
  return s;
}

nlohmann::json to_json(const TwoStageConfig& c) {
  return {{"model", to_json(c.model)},
          {"stage1", to_json(c.stage1)},
          {"stage2", to_json(c.stage2)},
          {"run_stage2", c.run_stage2},
          {"seed", c.seed}};
}

TwoStageConfig two_stage_config_from_json(const nlohmann::json& j, TwoStageConfig c) {
  if (j.contains("model")) {
    nlohmann::json m = to_json(c.model);
    m.merge_patch(j.at("model"));
    c.model = tfenet_config_from_json(m);
  }
  if (j.contains("stage1")) c.stage1 = stage_config_from_json(j.at("stage1"), c.stage1);
  if (j.contains("stage2")) c.stage2 = stage_config_from_json(j.at("stage2"), c.stage2);
  c.run_stage2 = j.value("run_stage2", c.run_stage2);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------
// Training

namespace {

LossResult<float> stage_loss(const StageConfig& s, const Tensor<float>& prob, const Tensor<float>& gt,
                             const Tensor<float>& weight) {
  return s.loss == LossKind::Gul ? gul_loss(prob, gt, weight, s.gul) : tversky_loss(prob, gt, s.tversky);
}

// Average-pools a full-resolution field down to `shape` (integer factors).
Tensor<float> pool_to(const Tensor<float>& t, const Shape3& shape) {
  if (t.shape() == shape) return t;
  const Shape3 s = t.shape();
  const int fz = s.d / shape.d, fy = s.h / shape.h, fx = s.w / shape.w;
  Tensor<float> out(t.channels(), shape);
  const float inv = 1.0f / static_cast<float>(fz * fy * fx);
  for (int c = 0; c < t.channels(); ++c)
    for (int z = 0; z < s.d; ++z)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) out(c, z / fz, y / fy, x / fx) += t(c, z, y, x) * inv;
  return out;
}

}  // namespace

StageResult train_stage(const std::vector<TrainCase>& cases, TfeNet<float>& model, const StageConfig& stage,
                        std::mt19937_64& rng, const EpochCallback& on_epoch) {
  if (cases.empty()) throw std::invalid_argument("train_stage: no training cases");
  stage.validate(model.config());
  StageResult result;
  std::vector<std::size_t> order(cases.size());
  for (int epoch = 0; epoch < stage.epochs; ++epoch) {
    const double lr = stage.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    int steps = 0;
    for (std::size_t ci : order) {
      for (int k = 0; k < stage.patches_per_case; ++k) {
        Patch patch = sample_patch(cases[ci], stage.patch, rng);
        rotate_augment(patch, stage.rotation_threshold, rng);
        const Tensor<float> gt = to_tensor(patch.label);
        const Tensor<float> prob = model.forward(patch.image);
        LossResult<float> main = stage_loss(stage, prob, gt, patch.weight);
        double value = main.value;
        std::vector<Tensor<float>> aux_grads;
        if (stage.aux_weight > 0) {
          for (const auto& aux : model.aux_outputs()) {
            LossResult<float> a = stage_loss(stage, aux, pool_to(gt, aux.shape()), pool_to(patch.weight, aux.shape()));
            value += stage.aux_weight * a.value;
            for (auto& g : a.grad.values()) g *= static_cast<float>(stage.aux_weight);
            aux_grads.push_back(std::move(a.grad));
          }
        }
        if (!std::isfinite(value)) {
          std::ostringstream os;
          os << "non-finite loss in stage '" << stage.name << "' at epoch " << epoch << ", step " << steps
             << " (case '" << cases[ci].id << "', patch corner " << patch.corner[0] << ',' << patch.corner[1] << ','
             << patch.corner[2] << ", lr " << lr << ")";
          throw TrainingError(os.str());
        }
        model.backward(main.grad, aux_grads);
        sgd_step(model.params(), lr, stage.momentum);
        total += value;
        ++steps;
      }
    }
    EpochLog log{epoch, total / steps, lr};
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(stage, log);
  }
  return result;
}

void write_loss_csv(const StageResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "epoch,mean_loss,lr\n";
  for (const auto& e : r.epochs) out << e.epoch << ',' << e.mean_loss << ',' << e.lr << '\n';
}

TwoStageResult run_two_stage(const std::vector<TrainCase>& cases, const TwoStageConfig& cfg,
                             const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  cfg.model.validate();
  cfg.stage1.validate(cfg.model);
  if (cfg.run_stage2) cfg.stage2.validate(cfg.model);
  std::filesystem::create_directories(out_dir);
  std::mt19937_64 rng(cfg.seed);
  TfeNet<float> model(cfg.model);
  auto metadata = [&](const StageConfig& s) {
    return nlohmann::json{{"model", to_json(cfg.model)}, {"stage", to_json(s)}, {"training", to_json(cfg)}};
  };

  TwoStageResult res;
  res.stage1 = train_stage(cases, model, cfg.stage1, rng, on_epoch);
  res.checkpoint1 = out_dir / "output1.json";
  save_checkpoint(model.params(), res.checkpoint1, metadata(cfg.stage1));
  write_loss_csv(res.stage1, out_dir / "output1_loss.csv");
  if (!cfg.run_stage2) return res;

  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& v = model.params()[i].velocity;
    std::fill(v.begin(), v.end(), 0.0f);
  }
  res.stage2 = train_stage(cases, model, cfg.stage2, rng, on_epoch);
  res.checkpoint2 = out_dir / "output2.json";
  save_checkpoint(model.params(), res.checkpoint2, metadata(cfg.stage2));
  write_loss_csv(res.stage2, out_dir / "output2_loss.csv");
  return res;
}

TfeNet<float> load_model(const std::filesystem::path& checkpoint) {
  const auto meta = read_checkpoint_metadata(checkpoint);
  if (!meta.contains("model")) throw std::runtime_error(checkpoint.string() + ": checkpoint has no model config");
  TfeNet<float> model(tfenet_config_from_json(meta.at("model")));
  load_checkpoint(model.params(), checkpoint);
  return model;
}

}  // namespace tfe
