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

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "tfe/phantom.hpp"
#include "tfe/volume_io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(TFENET_BIN) + " " + args + " 2>" + err.string();
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream e(err);
  r.err.assign(std::istreambuf_iterator<char>(e), {});
  return r;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::vector<double>> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("phantom, train, infer and eval run end to end") {
  const auto dir = tfe::testing::scratch_dir("cli_pipeline");
  write_text(dir / "cfg.json", R"({
    "seed": 5,
    "workers": 1,
    "corpus": {"depth_min": 0, "depth_max": 1},
    "training": {
      "model": {"levels": 3, "widths": [2, 4, 4], "k": 3},
      "stage1": {"epochs": 1, "patches_per_case": 1, "patch_size": [16, 16, 16], "lib": {"window": 8}},
      "stage2": {"epochs": 1, "patches_per_case": 1, "patch_size": [16, 16, 16], "lib": {"window": 8}}
    },
    "inference": {"patch": [16, 16, 16], "stride": [16, 16, 16]}
  })");
  const std::string cfg = "--config " + (dir / "cfg.json").string();

  auto r = run("phantom " + cfg + " -n 5 --out " + (dir / "corpus").string(), dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "corpus" / "manifest.json"));
  CHECK(read_json(dir / "corpus" / "resolved_config.json").at("seed") == 5);

  r = run("train " + cfg + " --manifest " + (dir / "corpus" / "manifest.json").string() + " --out " +
              (dir / "model").string(),
          dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "model" / "output1.json"));
  CHECK(fs::exists(dir / "model" / "output2.json"));
  CHECK(fs::exists(dir / "model" / "output2_loss.csv"));
  CHECK(read_json(dir / "model" / "resolved_config.json").at("training").at("stage1").at("epochs") == 1);

  r = run("infer " + cfg + " --checkpoint " + (dir / "model" / "output1.json").string() + " --checkpoint2 " +
              (dir / "model" / "output2.json").string() + " --manifest " +
              (dir / "corpus" / "manifest.json").string() + " --out " + (dir / "pred").string(),
          dir);
  REQUIRE(r.code == 0);
  const auto manifest = tfe::read_manifest(dir / "corpus" / "manifest.json");
  const auto test_cases = manifest.split("test");
  REQUIRE(test_cases.size() == 1);
  const std::string id = test_cases[0].id;
  CHECK(fs::exists(dir / "pred" / (id + "_prob1.tvol")));
  CHECK(fs::exists(dir / "pred" / (id + "_prob2.tvol")));
  const tfe::Mask pred = tfe::read_mask(dir / "pred" / (id + "_mask.tvol"));
  CHECK(pred.shape == tfe::read_mask(test_cases[0].label).shape);

  r = run("eval " + cfg + " --manifest " + (dir / "corpus" / "manifest.json").string() + " --pred-dir " +
              (dir / "pred").string() + " --out " + (dir / "eval").string(),
          dir);
  REQUIRE(r.code == 0);
  const json metrics = read_json(dir / "eval" / "metrics.json");
  REQUIRE(metrics.at("cases").size() == 1);
  for (const char* k : {"precision", "dsc", "td", "bd", "iou", "leakage"}) {
    const double v = metrics.at("cases")[0].at(k).get<double>();
    CHECK((v >= 0 && v <= 1));
  }
  std::ifstream csv(dir / "eval" / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("dsc") != std::string::npos);
}

TEST_CASE("eval of a mask against itself scores one") {
  const auto dir = tfe::testing::scratch_dir("cli_eval");
  std::mt19937_64 rng(3);
  tfe::TreeSpec spec;
  spec.depth = 2;
  const auto ph = tfe::generate_tree(spec, rng);
  tfe::write_mask(ph.label, dir / "gt.tvol");
  const auto r = run("eval --pred " + (dir / "gt.tvol").string() + " --gt " + (dir / "gt.tvol").string() +
                         " --out " + (dir / "out").string(),
                     dir);
  REQUIRE(r.code == 0);
  const json m = read_json(dir / "out" / "metrics.json");
  for (const char* k : {"precision", "dsc", "td", "bd", "iou", "leakage", "mean_score", "overall_score"}) {
    CHECK(m.at(k).get<double>() == doctest::Approx(1.0));
  }
  const auto compat = run("eval --compat-iou-as-printed --pred " + (dir / "gt.tvol").string() + " --gt " +
                              (dir / "gt.tvol").string() + " --out " + (dir / "compat").string(),
                          dir);
  REQUIRE(compat.code == 0);
  CHECK(read_json(dir / "compat" / "metrics.json").at("iou").get<double>() == doctest::Approx(0.0));
}

TEST_CASE("sampleviz with zero angles prints a straight line of taps") {
  const auto dir = tfe::testing::scratch_dir("cli_sampleviz");
  for (const char* axis : {"x", "y", "z"}) {
    const auto r = run(std::string("sampleviz --axis ") + axis + " -k 7 --center 10 10 10", dir);
    REQUIRE(r.code == 0);
    const auto rows = parse_csv(r.out);
    REQUIRE(rows.size() == 7);
    const int moving = axis[0] == 'z' ? 2 : axis[0] == 'y' ? 3 : 4;  // csv column of the kernel axis
    for (const auto& row : rows) {
      for (int c = 2; c <= 4; ++c) {
        const double expect = c == moving ? 10 + row[1] : 10;
        CHECK(row[c] == doctest::Approx(expect));
      }
    }
  }
  const auto bent = run("sampleviz --axis x -k 5 --degrees --angles 30 0 30 0", dir);
  REQUIRE(bent.code == 0);
  for (const auto& row : parse_csv(bent.out)) {
    if (row[1] != 0) CHECK(std::abs(row[4]) < std::abs(row[1]));
  }
}

TEST_CASE("errors are JSON on stderr with a nonzero exit") {
  const auto dir = tfe::testing::scratch_dir("cli_errors");
  auto check_error = [&](const Run& r, int code, const std::string& kind) {
    CHECK(r.code == code);
    const json e = json::parse(r.err.substr(r.err.find('{')));
    CHECK(e.at("error") == kind);
    CHECK(e.at("exit_code") == code);
    CHECK_FALSE(e.at("message").get<std::string>().empty());
  };
  check_error(run("eval --pred /nonexistent.tvol --gt /nonexistent.tvol", dir), 2, "usage");
  check_error(run("frobnicate", dir), 2, "usage");

  write_text(dir / "bad.json", "{ \"seed\": ");
  check_error(run("phantom --config " + (dir / "bad.json").string(), dir), 2, "usage");

  write_text(dir / "broken.tvol", R"({"shape":[4,4,4],"spacing":[1,1,1],"channels":1,"dtype":"f32","byte_order":"little"})");
  write_text(dir / "broken.raw", "short");
  check_error(run("eval --pred " + (dir / "broken.tvol").string() + " --gt " + (dir / "broken.tvol").string(), dir), 3,
              "io");

  // A NaN image makes training fail with its own exit code.
  tfe::Volume nan_img{tfe::Tensor<float>(1, {16, 16, 16}, std::numeric_limits<float>::quiet_NaN()), {}};
  tfe::write_volume(nan_img, dir / "nan.tvol");
  tfe::Mask lbl({16, 16, 16});
  lbl.at(8, 8, 8) = 1;
  tfe::write_mask(lbl, dir / "nan_label.tvol");
  tfe::CorpusManifest m;
  m.cases.push_back({"nan", "train", dir / "nan.tvol", dir / "nan_label.tvol", dir / "nan_label.tvol", 0, 0, {}});
  tfe::write_manifest(m, dir / "manifest.json");
  write_text(dir / "tiny.json", R"({"training": {
    "model": {"levels": 3, "widths": [2, 4, 4], "k": 3},
    "stage1": {"epochs": 1, "patches_per_case": 1, "patch_size": [8, 8, 8], "lib": {"window": 8}}}})");
  check_error(run("train --stage 1 --config " + (dir / "tiny.json").string() + " --manifest " +
                      (dir / "manifest.json").string() + " --out " + (dir / "model").string(),
                  dir),
              4, "training");
}
