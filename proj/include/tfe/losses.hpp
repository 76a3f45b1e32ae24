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

#include "tfe/volume.hpp"

namespace tfe {

/// General Union Loss parameters; beta = 1 - alpha.
struct GulParams {
  double alpha = 0.05;
  double root = 0.7;  ///< exponent applied to predictions in the numerator
  void validate() const;
};

/// Local-imbalance weight parameters.
struct LibParams {
  double lambda = 0.05;  ///< weight floor
  double r = 2.0;        ///< exponent, resampled in [2, 3] per training patch
  int window = 32;       ///< cubic window edge for the foreground ratio
  void validate() const;
};

struct TverskyParams {
  double alpha = 0.5;
  double beta = 0.5;
  void validate() const;
};

template <typename T>
struct LossResult {
  double value = 0;
  Tensor<T> grad;  ///< dL/dpred
};

/// Mean label over a `window`-edged cube centered at each voxel, truncated at
/// the volume border (the mean is over in-bounds voxels). Even windows span
/// [p - w/2, p + w/2 - 1].
Tensor<double> foreground_ratio(const Mask& mask, int window);

/// (1 - lambda) * min(-log10 fr, 1)^r + lambda, with fr below 1e-10 mapped to
/// the cap.
double lib_weight(double fr, const LibParams& p);
Tensor<double> lib_weights(const Tensor<double>& fr, const LibParams& p);

/// 1 - sum(w p^root g) / sum(w (alpha p + beta g)). Empty prediction and
/// empty ground truth give 0 with zero gradient.
template <typename T>
LossResult<T> gul_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& weights, const GulParams& p);

/// 1 - sum(p g) / sum(alpha p + beta g), same degenerate rule.
template <typename T>
LossResult<T> tversky_loss(const Tensor<T>& pred, const Tensor<T>& gt, const TverskyParams& p);

}  // namespace tfe
