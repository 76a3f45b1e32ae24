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
#include <filesystem>
#include <stdexcept>
#include <string>

#include "tfe/volume.hpp"

namespace tfe {

enum class Dtype { F32, U8 };

/// Raised for malformed headers and payloads; `offset` is the byte position in
/// the offending file where parsing failed (0 for header-level problems).
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// A .tvol file is a JSON header:
//   {"shape":[d,h,w],"spacing":[dz,dy,dx],"channels":c,"dtype":"f32"|"u8","byte_order":"little"}
// next to a payload with the same stem and a .raw extension, channel-major
// then row-major, little-endian.

std::filesystem::path raw_path_for(const std::filesystem::path& header);

void write_volume(const Volume& vol, const std::filesystem::path& path, Dtype dtype = Dtype::F32);
Volume read_volume(const std::filesystem::path& path);

void write_mask(const Mask& mask, const std::filesystem::path& path);
/// Reads any .tvol (or NIfTI) and marks voxels with nonzero channel-0 values.
Mask read_mask(const std::filesystem::path& path);

/// Single-file NIfTI-1 ("n+1"); honours dim, pixdim and datatype only.
Volume read_nifti(const std::filesystem::path& path);

/// Dispatches on extension: .nii -> NIfTI, anything else -> .tvol.
Volume load_any(const std::filesystem::path& path);

}  // namespace tfe
