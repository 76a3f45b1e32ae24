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


#include "tfe/params.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "tfe/volume_io.hpp"

namespace tfe {

namespace {

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

nlohmann::json read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open checkpoint " + manifest.string(), 0);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed checkpoint manifest " + manifest.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

void save_checkpoint(const ParamStore<float>& store, const std::filesystem::path& manifest,
                     const nlohmann::json& metadata) {
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  std::ofstream blob(blob_path(manifest), std::ios::binary | std::ios::trunc);
  if (!blob) throw IoError("cannot write " + blob_path(manifest).string(), 0);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    entries.push_back({{"name", p.name},
                       {"shape", p.shape},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"lr_mult", p.lr_mult}});
    blob.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
    offset += p.size() * sizeof(float);
  }
  nlohmann::json j;
  j["format"] = "tfenet-checkpoint";
  j["blob"] = blob_path(manifest).filename().string();
  j["byte_order"] = "little";
  j["entries"] = std::move(entries);
  j["metadata"] = metadata;
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest.string(), 0);
  out << j.dump(2) << '\n';
}

nlohmann::json load_checkpoint(ParamStore<float>& store, const std::filesystem::path& manifest) {
  const auto j = read_manifest(manifest);
  const auto blob_file = manifest.parent_path() / j.at("blob").get<std::string>();
  std::ifstream in(blob_file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint blob " + blob_file.string(), 0);
  const std::vector<char> blob{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t loaded = 0;
  for (const auto& e : j.at("entries")) {
    const auto name = e.at("name").get<std::string>();
    if (!store.contains(name)) throw IoError("checkpoint entry '" + name + "' has no matching parameter", 0);
    auto& p = store.get(name);
    if (e.at("dtype").get<std::string>() != "f32") throw IoError("unsupported dtype for '" + name + "'", 0);
    const auto off = e.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = p.size() * sizeof(float);
    if (e.at("shape").get<std::vector<int>>() != p.shape) {
      throw IoError("shape mismatch for checkpoint entry '" + name + "'", off);
    }
    if (off + bytes > blob.size()) throw IoError("checkpoint blob truncated at entry '" + name + "'", blob.size());
    std::memcpy(p.value.data(), blob.data() + off, bytes);
    p.lr_mult = e.value("lr_mult", p.lr_mult);
    ++loaded;
  }
  if (loaded != store.size()) throw IoError("checkpoint is missing parameters", 0);
  return j.value("metadata", nlohmann::json::object());
}

nlohmann::json read_checkpoint_metadata(const std::filesystem::path& manifest) {
  return read_manifest(manifest).value("metadata", nlohmann::json::object());
}

}  // namespace tfe
