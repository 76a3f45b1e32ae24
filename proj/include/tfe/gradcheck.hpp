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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tfe {

/// Gradients whose norm stays below this are compared absolutely; conv biases
/// feeding an instance norm have an exactly zero true gradient.
inline constexpr double kGradientNormFloor = 1e-5;

/// ||a - n||_2 / max(||a||_2, ||n||_2, kGradientNormFloor).
double gradient_rel_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences of `loss` with respect to every element of `values`,
/// perturbing in place and restoring afterwards.
std::vector<double> numeric_gradient(std::vector<double>& values, const std::function<double()>& loss, double h);

struct GradCheckEntry {
  std::string op;
  std::string wrt;
  double rel_error = 0;
  double tolerance = 0;
  std::size_t elements = 0;
  bool pass = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 20240611;
  double step = 1e-4;
  double tolerance = 1e-4;
};

/// Runs every differentiable operation of the network in double precision
/// against central finite differences on small random problems.
std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckOptions& opts = {});

}  // namespace tfe
