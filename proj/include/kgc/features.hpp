/*
 * Copyright 2026 The kgcascade Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "kgc/common.hpp"

namespace kgc {

enum class FeatureKind { kEntity, kRelation };

// Row-major float32 matrix of precomputed text features.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;
  FeatureKind kind = FeatureKind::kEntity;

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

  // Throws naming the first row that holds NaN or Inf.
  void validate() const {
    if (data.size() != rows * dim) throw Error("feature matrix size mismatch");
    for (std::size_t i = 0; i < rows; ++i) {
      for (float v : row(i)) {
        if (!std::isfinite(v)) {
          throw Error("non-finite feature value at row " + std::to_string(i));
        }
      }
    }
  }
};

inline constexpr char kFeatureMagic[4] = {'F', 'M', 'A', 'T'};

// "FMAT", u64 rows, u64 dim, then rows*dim little-endian float32.
inline FeatureMatrix load_features(const std::filesystem::path& path,
                                   FeatureKind kind = FeatureKind::kEntity) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw Error("bad feature file magic in " + path.string());
  }
  FeatureMatrix m;
  m.kind = kind;
  m.rows = binary::read<std::uint64_t>(in);
  m.dim = binary::read<std::uint64_t>(in);
  const auto header = static_cast<std::uintmax_t>(4 + 2 * sizeof(std::uint64_t));
  const auto payload = std::filesystem::file_size(path) - header;
  if (payload != m.rows * m.dim * sizeof(float)) {
    throw Error("dimension mismatch: header declares " + std::to_string(m.rows) +
                " x " + std::to_string(m.dim) + " but file holds " +
                std::to_string(payload / sizeof(float)) + " floats");
  }
  m.data.resize(m.rows * m.dim);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!in) throw Error("truncated feature file " + path.string());
  m.validate();
  return m;
}

inline std::string encode_features(const FeatureMatrix& m) {
  std::string out(kFeatureMagic, 4);
  auto put = [&out](const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
  };
  std::uint64_t rows = m.rows, dim = m.dim;
  put(&rows, sizeof rows);
  put(&dim, sizeof dim);
  put(m.data.data(), m.data.size() * sizeof(float));
  return out;
}

inline void save_features(const FeatureMatrix& m,
                          const std::filesystem::path& path) {
  write_file_atomic(path, encode_features(m));
}

}  // namespace kgc
