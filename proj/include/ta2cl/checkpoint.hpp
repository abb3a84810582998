// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ta2cl/core/binary_io.hpp"
#include "ta2cl/core/mat.hpp"

namespace ta2cl {

struct NamedMat {
  std::string name;
  Mat value;
};

// TA2CL-CKPT1 layout: magic, u32 count, then a manifest of
// (u32 name_len, name bytes, u32 rows, u32 cols) per entry, then one MAT1
// blob per entry in manifest order.
inline constexpr std::string_view kCheckpointMagic = "TA2CL-CKPT1";

inline void write_checkpoint(std::ostream& out, const std::vector<NamedMat>& entries) {
  binary::write_magic(out, kCheckpointMagic);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    binary::write_magic(out, e.name);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows()));
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols()));
  }
  for (const auto& e : entries) write_mat(out, e.value);
}

inline std::vector<NamedMat> read_checkpoint(std::istream& in) {
  binary::expect_magic(in, kCheckpointMagic);
  const auto count = binary::read_le<std::uint32_t>(in);
  std::vector<NamedMat> entries(count);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binary::read_le<std::uint32_t>(in);
    if (len > 4096) throw IoError("checkpoint: implausible name length");
    entries[i].name.resize(len);
    in.read(entries[i].name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw IoError("checkpoint: truncated manifest");
    shapes[i].first = binary::read_le<std::uint32_t>(in);
    shapes[i].second = binary::read_le<std::uint32_t>(in);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    entries[i].value = read_mat(in);
    if (entries[i].value.rows() != shapes[i].first || entries[i].value.cols() != shapes[i].second) {
      throw IoError("checkpoint: blob for '" + entries[i].name + "' disagrees with manifest");
    }
  }
  return entries;
}

/// FNV-1a over names, shapes and raw bytes; any bit change alters the digest.
inline std::string digest(const std::vector<NamedMat>& entries) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& e : entries) {
    mix(e.name.data(), e.name.size());
    const std::uint64_t dims[2] = {e.value.rows(), e.value.cols()};
    mix(dims, sizeof dims);
    mix(e.value.data(), e.value.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ta2cl
