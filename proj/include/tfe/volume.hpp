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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfe {

/// Spatial extent in voxels, (z, y, x) order; x varies fastest.
struct Shape3 {
  int d = 0;
  int h = 0;
  int w = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool contains(int z, int y, int x) const {
    return z >= 0 && z < d && y >= 0 && y < h && x >= 0 && x < w;
  }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * h + y) * w + x;
  }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

/// Millimetres per voxel along (z, y, x).
struct Spacing {
  double dz = 1.0;
  double dy = 1.0;
  double dx = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Channel-major dense grid: data[(c * d + z) * h + y) * w + x].
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int channels, Shape3 shape, T fill = T{})
      : channels_(channels), shape_(shape), data_(static_cast<std::size_t>(channels) * shape.voxels(), fill) {
    if (channels < 0 || shape.d < 0 || shape.h < 0 || shape.w < 0) {
      throw std::invalid_argument("Tensor: negative extent");
    }
  }

  int channels() const { return channels_; }
  const Shape3& shape() const { return shape_; }
  std::size_t voxels() const { return shape_.voxels(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int c, int z, int y, int x) const {
    return static_cast<std::size_t>(c) * shape_.voxels() + shape_.index(z, y, x);
  }
  T& operator()(int c, int z, int y, int x) { return data_[index(c, z, y, x)]; }
  const T& operator()(int c, int z, int y, int x) const { return data_[index(c, z, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> channel(int c) { return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()}; }
  std::span<const T> channel(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
  }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(channels_, shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  int channels_ = 0;
  Shape3 shape_{};
  std::vector<T> data_;
};

/// Scalar grid with physical spacing (intensity or probability map).
struct Volume {
  Tensor<float> values;
  Spacing spacing{};

  const Shape3& shape() const { return values.shape(); }
  int channels() const { return values.channels(); }
};

/// One byte per voxel, values in {0, 1}.
struct Mask {
  Shape3 shape{};
  Spacing spacing{};
  std::vector<std::uint8_t> data;

  Mask() = default;
  explicit Mask(Shape3 s, Spacing sp = {}) : shape(s), spacing(sp), data(s.voxels(), 0) {}

  std::uint8_t& at(int z, int y, int x) { return data[shape.index(z, y, x)]; }
  std::uint8_t at(int z, int y, int x) const { return data[shape.index(z, y, x)]; }
  std::size_t count() const;
  friend bool operator==(const Mask& a, const Mask& b) { return a.shape == b.shape && a.data == b.data; }
};

/// Thresholds channel 0: voxel set iff value > threshold.
Mask threshold(const Tensor<float>& prob, float threshold);

/// Channel 0 of a 0/1 float tensor.
Tensor<float> to_tensor(const Mask& mask);

}  // namespace tfe
