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


// tfenet: command-line front end (phantom | train | infer | eval | gradcheck |
// sampleviz). Errors are reported as one JSON object on stderr.

#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tfe/geometry.hpp"
#include "tfe/gradcheck.hpp"
#include "tfe/inference.hpp"
#include "tfe/metrics.hpp"
#include "tfe/phantom.hpp"
#include "tfe/trainer.hpp"
#include "tfe/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tfe;

namespace {

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int workers = 0;
  std::string log_level;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError(path + ": config must be a JSON object");
  return j;
}

json section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg.at(key) : json::object(); }

std::uint64_t resolve_seed(const Common& c, const json& cfg, std::uint64_t fallback) {
  if (c.seed) return *c.seed;
  return cfg.value("seed", fallback);
}

int apply_workers(const Common& c, const json& cfg) {
  int w = c.workers > 0 ? c.workers : cfg.value("workers", 0);
  if (w <= 0) w = omp_get_num_procs();
  omp_set_num_threads(w);
  return w;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void snapshot(const fs::path& dir, const std::string& command, json resolved) {
  fs::create_directories(dir);
  resolved["command"] = command;
  write_json(dir / "resolved_config.json", resolved);
}

Shape3 shape_of(const std::vector<int>& v, const char* what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw UsageError(std::string(what) + " takes 1 or 3 integers");
}

std::optional<Roi> roi_of(const CorpusCase& c) {
  if (c.roi.empty()) return std::nullopt;
  return Roi{{c.roi[0], c.roi[1], c.roi[2]}, {c.roi[3], c.roi[4], c.roi[5]}};
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  int cases = 20;
};

int cmd_phantom(const Common& common, const PhantomArgs& a) {
  const json cfg = load_config(common.config);
  CorpusSpec spec;
  const json c = section(cfg, "corpus");
  spec.tree = tree_spec_from_json(section(c, "tree"));
  spec.depth_min = c.value("depth_min", spec.depth_min);
  spec.depth_max = c.value("depth_max", spec.depth_max);
  spec.root_radius_min = c.value("root_radius_min", spec.root_radius_min);
  spec.root_radius_max = c.value("root_radius_max", spec.root_radius_max);
  const int n = a.cases > 0 ? a.cases : c.value("cases", 20);
  const std::uint64_t seed = resolve_seed(common, cfg, 1);

  const fs::path out(common.out);
  spdlog::info("generating {} phantoms (seed {}) into {}", n, seed, out.string());
  const CorpusManifest m = generate_corpus(n, spec, seed, out);
  write_manifest(m, out / "manifest.json");
  snapshot(out, "phantom",
           {{"seed", seed},
            {"corpus",
             {{"cases", n},
              {"depth_min", spec.depth_min},
              {"depth_max", spec.depth_max},
              {"root_radius_min", spec.root_radius_min},
              {"root_radius_max", spec.root_radius_max},
              {"tree", tree_spec_to_json(spec.tree)}}}});
  std::cout << (out / "manifest.json").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string split = "train";
  std::string stage = "both";
  int epochs = 0;
};

int cmd_train(const Common& common, const TrainArgs& a) {
  const json cfg = load_config(common.config);
  TwoStageConfig tc = two_stage_config_from_json(section(cfg, "training"));
  tc.seed = resolve_seed(common, cfg, tc.seed);
  if (a.stage == "1") tc.run_stage2 = false;
  else if (a.stage == "both") tc.run_stage2 = true;
  else throw UsageError("--stage for train must be 1 or both");
  if (a.epochs > 0) tc.stage1.epochs = tc.stage2.epochs = a.epochs;
  const int workers = apply_workers(common, cfg);

  const CorpusManifest m = read_manifest(a.manifest);
  std::vector<TrainCase> cases;
  for (const auto& c : m.split(a.split)) {
    cases.push_back(preprocess_case(load_any(c.image), read_mask(c.label), roi_of(c), c.id));
  }
  if (cases.empty()) throw UsageError("manifest has no '" + a.split + "' cases");

  const fs::path out(common.out);
  snapshot(out, "train",
           {{"seed", tc.seed}, {"workers", workers}, {"manifest", a.manifest}, {"split", a.split},
            {"training", to_json(tc)}});
  spdlog::info("training on {} cases, {} worker(s)", cases.size(), workers);
  const auto res = run_two_stage(cases, tc, out, [](const StageConfig& s, const EpochLog& e) {
    spdlog::info("{} epoch {} loss {:.6f} lr {:g}", s.name, e.epoch, e.mean_loss, e.lr);
  });
  std::cout << res.checkpoint1.string() << '\n';
  if (!res.checkpoint2.empty()) std::cout << res.checkpoint2.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint1;
  std::string checkpoint2;
  std::string input;
  std::string manifest;
  std::string split = "test";
  std::string stage = "fused";
  std::string fusion;
  std::vector<int> patch;
  std::vector<int> stride;
};

int cmd_infer(const Common& common, const InferArgs& a) {
  const json cfg = load_config(common.config);
  InferenceConfig ic = inference_config_from_json(section(cfg, "inference"));
  if (!a.fusion.empty()) ic.fusion = fusion_mode_from_string(a.fusion);
  if (!a.patch.empty()) ic.patch = shape_of(a.patch, "--patch");
  if (!a.stride.empty()) ic.stride = shape_of(a.stride, "--stride");
  if (a.stage != "1" && a.stage != "2" && a.stage != "fused") throw UsageError("--stage for infer must be 1, 2 or fused");
  const bool need1 = a.stage != "2", need2 = a.stage != "1";
  if (need1 && a.checkpoint1.empty()) throw UsageError("--checkpoint is required for stage " + a.stage);
  if (need2 && a.checkpoint2.empty()) throw UsageError("--checkpoint2 is required for stage " + a.stage);
  if (a.input.empty() == a.manifest.empty()) throw UsageError("give exactly one of --input or --manifest");
  const int workers = apply_workers(common, cfg);

  std::optional<TfeNet<float>> m1, m2;
  if (need1) m1.emplace(load_model(a.checkpoint1));
  if (need2) m2.emplace(load_model(a.checkpoint2));

  std::vector<std::pair<std::string, fs::path>> jobs;
  if (!a.input.empty()) {
    jobs.emplace_back(fs::path(a.input).stem().string(), a.input);
  } else {
    for (const auto& c : read_manifest(a.manifest).split(a.split)) jobs.emplace_back(c.id, c.image);
  }

  const fs::path out(common.out);
  snapshot(out, "infer",
           {{"workers", workers}, {"checkpoint", a.checkpoint1}, {"checkpoint2", a.checkpoint2},
            {"stage", a.stage}, {"inference", to_json(ic)}, {"postprocess_after_fusion", true}});
  for (const auto& [id, path] : jobs) {
    const Volume raw = load_any(path);
    Volume p1, p2;
    if (m1) p1 = sliding_window_predict(raw, *m1, ic);
    if (m2) p2 = sliding_window_predict(raw, *m2, ic);
    Mask mask;
    if (a.stage == "1") mask = threshold(p1.values, ic.threshold);
    else if (a.stage == "2") mask = threshold(p2.values, ic.threshold);
    else mask = fuse_two_stage(p1.values, p2.values, ic.fusion, ic.threshold);
    mask.spacing = raw.spacing;
    const Postprocessed post = postprocess(mask, ic.keep_largest, ic.fill_holes);
    if (post.empty) spdlog::warn("{}: predicted mask is empty", id);
    if (m1) write_volume(p1, out / (id + "_prob1.tvol"));
    if (m2) write_volume(p2, out / (id + "_prob2.tvol"));
    write_mask(post.mask, out / (id + "_mask.tvol"));
    spdlog::info("{}: {} foreground voxels", id, post.mask.count());
    std::cout << (out / (id + "_mask.tvol")).string() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string manifest;
  std::string pred_dir;
  std::string split = "test";
  bool iou_as_printed = false;
};

int cmd_eval(const Common& common, const EvalArgs& a) {
  const json cfg = load_config(common.config);
  EvalOptions opts;
  opts.iou_as_printed = a.iou_as_printed || section(cfg, "eval").value("compat_iou_as_printed", false);
  const int workers = apply_workers(common, cfg);

  std::vector<std::tuple<std::string, fs::path, fs::path>> jobs;
  if (!a.pred.empty() || !a.gt.empty()) {
    if (a.pred.empty() || a.gt.empty()) throw UsageError("--pred and --gt go together");
    jobs.emplace_back(fs::path(a.pred).stem().string(), a.pred, a.gt);
  } else if (!a.manifest.empty() && !a.pred_dir.empty()) {
    for (const auto& c : read_manifest(a.manifest).split(a.split)) {
      jobs.emplace_back(c.id, fs::path(a.pred_dir) / (c.id + "_mask.tvol"), c.label);
    }
  } else {
    throw UsageError("give --pred/--gt or --manifest/--pred-dir");
  }
  for (const auto& [id, p, g] : jobs) {
    if (!fs::exists(p)) throw UsageError("missing prediction " + p.string());
    if (!fs::exists(g)) throw UsageError("missing ground truth " + g.string());
  }

  std::vector<MetricsReport> reports(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    try {
      reports[i] = evaluate(read_mask(std::get<1>(jobs[i])), read_mask(std::get<2>(jobs[i])), opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i]) continue;
    spdlog::error("case {} failed", std::get<0>(jobs[i]));
    std::rethrow_exception(errors[i]);
  }

  const fs::path out(common.out);
  snapshot(out, "eval", {{"workers", workers}, {"compat_iou_as_printed", opts.iou_as_printed}, {"split", a.split}});
  json cases = json::array();
  std::ofstream csv(out / "metrics.csv");
  csv << report_csv_header() << '\n';
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    json r = to_json(reports[i]);
    r["case"] = std::get<0>(jobs[i]);
    cases.push_back(r);
    csv << report_csv_row(std::get<0>(jobs[i]), reports[i]) << '\n';
  }
  csv << report_csv_footer(reports) << '\n';
  // a single --pred/--gt pair reports one flat object
  const json summary = a.pred.empty() ? json{{"cases", cases}} : cases[0];
  write_json(out / "metrics.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(const Common& common) {
  const json cfg = load_config(common.config);
  GradCheckOptions opts;
  opts.seed = resolve_seed(common, cfg, opts.seed);
  const json g = section(cfg, "gradcheck");
  opts.step = g.value("step", opts.step);
  opts.tolerance = g.value("tolerance", opts.tolerance);
  apply_workers(common, cfg);
  const auto entries = run_gradcheck_suite(opts);
  int passed = 0;
  std::ostringstream csv;
  csv << "op,wrt,elements,rel_error,tolerance,pass\n";
  std::printf("%-16s %-26s %9s %12s  %s\n", "op", "wrt", "elements", "rel_error", "result");
  for (const auto& e : entries) {
    std::printf("%-16s %-26s %9zu %12.3e  %s\n", e.op.c_str(), e.wrt.c_str(), e.elements, e.rel_error,
                e.pass ? "PASS" : "FAIL");
    csv << e.op << ',' << e.wrt << ',' << e.elements << ',' << e.rel_error << ',' << e.tolerance << ','
        << (e.pass ? 1 : 0) << '\n';
    passed += e.pass;
  }
  std::printf("%d/%zu passed\n", passed, entries.size());
  if (common.out != ".") {
    snapshot(common.out, "gradcheck", {{"seed", opts.seed}, {"step", opts.step}, {"tolerance", opts.tolerance}});
    std::ofstream(fs::path(common.out) / "gradcheck.csv") << csv.str();
  }
  return passed == static_cast<int>(entries.size()) ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct SampleVizArgs {
  std::string axis = "x";
  int k = 7;
  int dilation = 1;
  double q = std::numbers::pi / 4;
  std::vector<double> angles{0, 0, 0, 0};
  std::vector<double> center{0, 0, 0};
  bool degrees = false;
};

int cmd_sampleviz(const Common& common, const SampleVizArgs& a) {
  KernelSpec spec;
  spec.axis = parse_axis(a.axis);
  spec.k = a.k;
  spec.dilation = a.dilation;
  spec.q = a.q;
  spec.validate();
  if (a.angles.size() % 4 != 0 || a.angles.empty()) throw UsageError("--angles takes groups of 4 values");
  if (a.center.size() != 3) throw UsageError("--center takes 3 values (z y x)");
  const double scale = a.degrees ? std::numbers::pi / 180.0 : 1.0;

  std::ostringstream csv;
  csv.precision(12);
  csv << "set,tap,z,y,x\n";
  for (std::size_t s = 0; s < a.angles.size() / 4; ++s) {
    const Angles ang{a.angles[4 * s] * scale, a.angles[4 * s + 1] * scale, a.angles[4 * s + 2] * scale,
                     a.angles[4 * s + 3] * scale};
    const auto pos = sampling_positions({a.center[0], a.center[1], a.center[2]}, spec, ang);
    for (std::size_t t = 0; t < pos.size(); ++t) {
      csv << s << ',' << static_cast<int>(t) - spec.half() << ',' << pos[t].z << ',' << pos[t].y << ',' << pos[t].x
          << '\n';
    }
  }
  if (common.out == ".") {
    std::cout << csv.str();
  } else {
    const fs::path out(common.out);
    snapshot(out, "sampleviz",
             {{"axis", axis_name(spec.axis)}, {"k", spec.k}, {"dilation", spec.dilation}, {"q", spec.q},
              {"angles", a.angles}, {"degrees", a.degrees}, {"center", a.center}});
    std::ofstream(out / "sampling_positions.csv") << csv.str();
    std::cout << (out / "sampling_positions.csv").string() << '\n';
  }
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "random seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--workers", c.workers, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  sub->add_option("--log-level", c.log_level, "trace, debug, info, warn, error or off (overrides TFE_LOG)")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tfenet");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  if (const char* lvl = std::getenv("TFE_LOG")) spdlog::cfg::helpers::load_levels(lvl);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"TfeNet airway segmentation toolkit"};
  app.require_subcommand(1);

  Common common;
  PhantomArgs pa;
  TrainArgs ta;
  InferArgs ia;
  EvalArgs ea;
  SampleVizArgs sa;

  auto* phantom = app.add_subcommand("phantom", "generate a synthetic tube-tree corpus");
  add_common(phantom, common);
  phantom->add_option("-n,--cases", pa.cases, "number of cases")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "two-stage training");
  add_common(train, common);
  train->add_option("--manifest", ta.manifest, "corpus manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--split", ta.split, "manifest split to train on");
  train->add_option("--stage", ta.stage, "1 or both")->check(CLI::IsMember({"1", "both"}));
  train->add_option("--epochs", ta.epochs, "epochs per stage (overrides the config)");

  auto* infer = app.add_subcommand("infer", "sliding-window prediction");
  add_common(infer, common);
  infer->add_option("--checkpoint", ia.checkpoint1, "stage-1 checkpoint manifest")->check(CLI::ExistingFile);
  infer->add_option("--checkpoint2", ia.checkpoint2, "stage-2 checkpoint manifest")->check(CLI::ExistingFile);
  infer->add_option("--input", ia.input, "input volume (.tvol or .nii)")->check(CLI::ExistingFile);
  infer->add_option("--manifest", ia.manifest, "corpus manifest")->check(CLI::ExistingFile);
  infer->add_option("--split", ia.split, "manifest split");
  infer->add_option("--stage", ia.stage, "1, 2 or fused")->check(CLI::IsMember({"1", "2", "fused"}));
  infer->add_option("--fusion", ia.fusion, "union or mean")->check(CLI::IsMember({"union", "mean"}));
  infer->add_option("--patch", ia.patch, "patch edge(s)");
  infer->add_option("--stride", ia.stride, "stride edge(s)");

  auto* eval = app.add_subcommand("eval", "segmentation and topology metrics");
  add_common(eval, common);
  eval->add_option("--pred", ea.pred, "predicted mask")->check(CLI::ExistingFile);
  eval->add_option("--gt", ea.gt, "reference mask")->check(CLI::ExistingFile);
  eval->add_option("--manifest", ea.manifest, "corpus manifest")->check(CLI::ExistingFile);
  eval->add_option("--pred-dir", ea.pred_dir, "directory of <case>_mask.tvol predictions")->check(CLI::ExistingDirectory);
  eval->add_option("--split", ea.split, "manifest split");
  eval->add_flag("--compat-iou-as-printed", ea.iou_as_printed, "report IOU as 1 - TP/(TP+FP+FN)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(gradcheck, common);

  auto* sampleviz = app.add_subcommand("sampleviz", "DAConv sampling positions as CSV");
  add_common(sampleviz, common);
  sampleviz->add_option("--axis", sa.axis, "x, y or z")->check(CLI::IsMember({"x", "y", "z", "X", "Y", "Z"}));
  sampleviz->add_option("-k,--kernel", sa.k, "tap count (odd)");
  sampleviz->add_option("--dilation", sa.dilation, "tap spacing");
  sampleviz->add_option("--q", sa.q, "angle bound (radians)");
  sampleviz->add_option("--angles", sa.angles, "4 angles per set: neg arm a b, pos arm a b");
  sampleviz->add_option("--center", sa.center, "kernel centre z y x");
  sampleviz->add_flag("--degrees", sa.degrees, "angles are in degrees");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }
  if (!common.log_level.empty()) spdlog::set_level(spdlog::level::from_str(common.log_level));

  try {
    if (*phantom) return cmd_phantom(common, pa);
    if (*train) return cmd_train(common, ta);
    if (*infer) return cmd_infer(common, ia);
    if (*eval) return cmd_eval(common, ea);
    if (*gradcheck) return cmd_gradcheck(common);
    if (*sampleviz) return cmd_sampleviz(common, sa);
  } catch (const UsageError& e) {
    return report_error("usage", e.what(), 2);
  } catch (const IoError& e) {
    return report_error("io", e.what(), 3);
  } catch (const TrainingError& e) {
    return report_error("training", e.what(), 4);
  } catch (const std::invalid_argument& e) {
    return report_error("config", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return report_error("config", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), 1);
  }
  return 0;
}
