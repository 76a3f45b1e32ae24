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

#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tfe {

/// A trainable array with its gradient and momentum buffers.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> velocity;
  double lr_mult = 1.0;

  std::size_t size() const { return value.size(); }
};

/// Named parameters in insertion order. References returned by add() stay
/// valid for the lifetime of the store.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, std::vector<int> shape, double lr_mult = 1.0, T init = T(0)) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    if (!(lr_mult > 0)) throw std::invalid_argument("learning-rate multiplier must be positive");
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->shape = std::move(shape);
    p->value.assign(n, init);
    p->grad.assign(n, T(0));
    p->velocity.assign(n, T(0));
    p->lr_mult = lr_mult;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return *params_[it->second];
  }
  const Param<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return *params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *params_[i]; }

  /// Total scalar count over all entries.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
  }

  /// Copies values (by name) from a store of any precision.
  template <typename U>
  void copy_values_from(const ParamStore<U>& other) {
    for (std::size_t i = 0; i < other.size(); ++i) {
      const auto& src = other[i];
      auto& dst = get(src.name);
      if (dst.size() != src.size()) throw std::invalid_argument("parameter '" + src.name + "' size mismatch");
      for (std::size_t j = 0; j < src.size(); ++j) dst.value[j] = static_cast<T>(src.value[j]);
    }
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Momentum SGD: v <- momentum * v + g; p <- p - lr * lr_mult * v; g <- 0.
template <typename T>
void sgd_step(ParamStore<T>& store, double lr, double momentum = 0.9) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    const T step = static_cast<T>(lr * p.lr_mult);
    const T mom = static_cast<T>(momentum);
    for (std::size_t j = 0; j < p.size(); ++j) {
      p.velocity[j] = mom * p.velocity[j] + p.grad[j];
      p.value[j] -= step * p.velocity[j];
      p.grad[j] = T(0);
    }
  }
}

// Checkpoint = JSON manifest + one little-endian f32 blob next to it
// (manifest stem + ".bin"). The manifest lists every entry's name, shape,
// dtype, byte offset and lr multiplier, plus free-form metadata.

void save_checkpoint(const ParamStore<float>& store, const std::filesystem::path& manifest,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Loads values into an existing store (entries matched by name; every entry
/// of the store must be present). Returns the manifest's metadata.
nlohmann::json load_checkpoint(ParamStore<float>& store, const std::filesystem::path& manifest);

/// Reads only the metadata block of a checkpoint manifest.
nlohmann::json read_checkpoint_metadata(const std::filesystem::path& manifest);

}  // namespace tfe
