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


#include "tfe/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <json.hpp>

namespace tfe {
namespace {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

using nlohmann::json;

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* dtype_name(Dtype t) { return t == Dtype::F32 ? "f32" : "u8"; }

struct Header {
  Shape3 shape;
  Spacing spacing;
  int channels = 1;
  Dtype dtype = Dtype::F32;
};

Header parse_header(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw IoError("malformed header " + path.string() + ": " + e.what(), e.byte);
  }
  Header h;
  try {
    const auto& shape = j.at("shape");
    const auto& spacing = j.at("spacing");
    if (!shape.is_array() || shape.size() != 3) throw IoError("header field 'shape' must be [d,h,w]", 0);
    if (!spacing.is_array() || spacing.size() != 3) throw IoError("header field 'spacing' must be [dz,dy,dx]", 0);
    h.shape = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    h.spacing = {spacing[0].get<double>(), spacing[1].get<double>(), spacing[2].get<double>()};
    h.channels = j.value("channels", 1);
    const auto dtype = j.at("dtype").get<std::string>();
    if (dtype == "f32") {
      h.dtype = Dtype::F32;
    } else if (dtype == "u8") {
      h.dtype = Dtype::U8;
    } else {
      throw IoError("unsupported dtype '" + dtype + "'", 0);
    }
    if (j.value("byte_order", std::string("little")) != "little") throw IoError("unsupported byte_order", 0);
  } catch (const json::exception& e) {
    throw IoError("malformed header " + path.string() + ": " + e.what(), 0);
  }
  if (h.shape.d <= 0 || h.shape.h <= 0 || h.shape.w <= 0 || h.channels <= 0) {
    throw IoError("header declares a non-positive extent", 0);
  }
  if (!(h.spacing.dz > 0 && h.spacing.dy > 0 && h.spacing.dx > 0)) throw IoError("spacing must be positive", 0);
  return h;
}

void write_header(const std::filesystem::path& path, const Shape3& s, const Spacing& sp, int channels, Dtype dt) {
  json j;
  j["shape"] = {s.d, s.h, s.w};
  j["spacing"] = {sp.dz, sp.dy, sp.dx};
  j["channels"] = channels;
  j["dtype"] = dtype_name(dt);
  j["byte_order"] = "little";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string(), 0);
  out << j.dump(2) << '\n';
}

void write_raw(const std::filesystem::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string(), 0);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to " + path.string(), 0);
}

template <typename T>
T read_le(const std::vector<char>& b, std::size_t off, bool swap) {
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  if (swap) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
  }
  return v;
}

}  // namespace

std::filesystem::path raw_path_for(const std::filesystem::path& header) {
  auto raw = header;
  raw.replace_extension(".raw");
  return raw;
}

void write_volume(const Volume& vol, const std::filesystem::path& path, Dtype dtype) {
  write_header(path, vol.shape(), vol.spacing, vol.channels(), dtype);
  if (dtype == Dtype::F32) {
    write_raw(raw_path_for(path), vol.values.data(), vol.values.size() * sizeof(float));
  } else {
    std::vector<std::uint8_t> bytes(vol.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      const float v = std::clamp(vol.values[i], 0.0f, 255.0f);
      bytes[i] = static_cast<std::uint8_t>(v + 0.5f);
    }
    write_raw(raw_path_for(path), bytes.data(), bytes.size());
  }
}

Volume read_volume(const std::filesystem::path& path) {
  const Header h = parse_header(path);
  const auto raw = slurp(raw_path_for(path));
  const std::size_t n = static_cast<std::size_t>(h.channels) * h.shape.voxels();
  const std::size_t elem = h.dtype == Dtype::F32 ? 4 : 1;
  if (raw.size() != n * elem) {
    throw IoError("payload size mismatch in " + raw_path_for(path).string() + ": expected " + std::to_string(n * elem) +
                      " bytes, found " + std::to_string(raw.size()),
                  std::min<std::uint64_t>(raw.size(), n * elem));
  }
  Volume v{Tensor<float>(h.channels, h.shape), h.spacing};
  if (h.dtype == Dtype::F32) {
    std::memcpy(v.values.data(), raw.data(), raw.size());
  } else {
    for (std::size_t i = 0; i < n; ++i) v.values[i] = static_cast<float>(static_cast<unsigned char>(raw[i]));
  }
  return v;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  write_header(path, mask.shape, mask.spacing, 1, Dtype::U8);
  write_raw(raw_path_for(path), mask.data.data(), mask.data.size());
}

Mask read_mask(const std::filesystem::path& path) {
  const Volume v = load_any(path);
  Mask m(v.shape(), v.spacing);
  const auto c0 = v.values.channel(0);
  for (std::size_t i = 0; i < c0.size(); ++i) m.data[i] = c0[i] != 0.0f ? 1 : 0;
  return m;
}

Volume read_nifti(const std::filesystem::path& path) {
  const auto b = slurp(path);
  if (b.size() < 352) throw IoError("NIfTI file shorter than its header", b.size());
  bool swap = false;
  if (read_le<std::int32_t>(b, 0, false) != 348) {
    if (read_le<std::int32_t>(b, 0, true) != 348) throw IoError("bad NIfTI sizeof_hdr", 0);
    swap = true;
  }
  if (std::memcmp(b.data() + 344, "n+1\0", 4) != 0) throw IoError("missing NIfTI-1 single-file magic", 344);
  const int ndim = read_le<std::int16_t>(b, 40, swap);
  if (ndim < 3 || ndim > 7) throw IoError("unsupported NIfTI dimensionality", 40);
  const int nx = read_le<std::int16_t>(b, 42, swap);
  const int ny = read_le<std::int16_t>(b, 44, swap);
  const int nz = read_le<std::int16_t>(b, 46, swap);
  int channels = 1;
  for (int i = 4; i <= ndim; ++i) channels *= std::max<int>(1, read_le<std::int16_t>(b, 40 + 2 * i, swap));
  const int datatype = read_le<std::int16_t>(b, 70, swap);
  auto pix = [&](int i) { return static_cast<double>(std::abs(read_le<float>(b, 76 + 4 * i, swap))); };
  Spacing sp{pix(3), pix(2), pix(1)};
  if (!(sp.dz > 0)) sp.dz = 1;
  if (!(sp.dy > 0)) sp.dy = 1;
  if (!(sp.dx > 0)) sp.dx = 1;
  const auto vox_offset = static_cast<std::size_t>(read_le<float>(b, 108, swap));
  if (nx <= 0 || ny <= 0 || nz <= 0) throw IoError("non-positive NIfTI dims", 42);

  Volume v{Tensor<float>(channels, Shape3{nz, ny, nx}), sp};
  const std::size_t n = v.values.size();
  std::size_t elem = 0;
  switch (datatype) {
    case 2: case 256: elem = 1; break;
    case 4: case 512: elem = 2; break;
    case 8: case 16: case 768: elem = 4; break;
    case 64: elem = 8; break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype), 70);
  }
  if (b.size() < vox_offset + n * elem) throw IoError("NIfTI payload truncated", b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = vox_offset + i * elem;
    double val = 0;
    switch (datatype) {
      case 2: val = static_cast<unsigned char>(b[off]); break;
      case 256: val = static_cast<signed char>(b[off]); break;
      case 4: val = read_le<std::int16_t>(b, off, swap); break;
      case 512: val = read_le<std::uint16_t>(b, off, swap); break;
      case 8: val = read_le<std::int32_t>(b, off, swap); break;
      case 768: val = read_le<std::uint32_t>(b, off, swap); break;
      case 16: val = read_le<float>(b, off, swap); break;
      case 64: val = read_le<double>(b, off, swap); break;
    }
    v.values[i] = static_cast<float>(val);
  }
  return v;
}

Volume load_any(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".nii") return read_nifti(path);
  return read_volume(path);
}

}  // namespace tfe
