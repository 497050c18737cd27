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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>

#include "kgc/common.hpp"
#include "kgc/kge/model.hpp"

namespace kgc::kge {

inline constexpr char kCheckpointMagic[4] = {'K', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "KGCK" u32 version u32 kind u64 entities u64 relations u64 dim
//   u64 group_size f32 gamma u64 config_hash u8 has_projection
//   u8 activation u64 feature_dim
//   f32 entity[entities * entity_width]
//   f32 relation[relations * relation_width]
//   f32 projection weight, f32 projection bias   (if has_projection)
// Features behind a projection are input data and are not stored.
inline std::string encode_checkpoint(const KgeModel<float>& m,
                                     std::uint64_t config_hash = 0) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, 4);
  binary::write(out, kCheckpointVersion);
  binary::write(out, static_cast<std::uint32_t>(m.kind));
  binary::write(out, static_cast<std::uint64_t>(m.num_entities));
  binary::write(out, static_cast<std::uint64_t>(m.num_relations));
  binary::write(out, static_cast<std::uint64_t>(m.dim));
  binary::write(out, static_cast<std::uint64_t>(m.group_size));
  binary::write(out, m.gamma);
  binary::write(out, config_hash);
  binary::write(out, static_cast<std::uint8_t>(m.projection ? 1 : 0));
  binary::write(out, static_cast<std::uint8_t>(
                         m.projection ? static_cast<int>(m.projection->activation) : 0));
  binary::write(out, static_cast<std::uint64_t>(m.projection ? m.projection->feature_dim : 0));
  auto block = [&out](const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  };
  block(m.entity);
  block(m.relation);
  if (m.projection) {
    block(m.projection->weight);
    block(m.projection->bias);
  }
  return std::move(out).str();
}

inline void save_checkpoint(const KgeModel<float>& m,
                            const std::filesystem::path& path,
                            std::uint64_t config_hash = 0) {
  write_file_atomic(path, encode_checkpoint(m, config_hash));
}

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
};

inline KgeModel<float> decode_checkpoint(
    const std::string& bytes, std::shared_ptr<const FeatureMatrix> features = {},
    CheckpointInfo* info = nullptr) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error("not a model checkpoint");
  }
  CheckpointInfo ci;
  ci.version = binary::read<std::uint32_t>(in);
  if (ci.version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(ci.version));
  }
  KgeModel<float> m;
  auto kind = binary::read<std::uint32_t>(in);
  if (kind > static_cast<std::uint32_t>(ModelKind::kNote)) throw Error("bad model kind");
  m.kind = static_cast<ModelKind>(kind);
  m.num_entities = binary::read<std::uint64_t>(in);
  m.num_relations = binary::read<std::uint64_t>(in);
  m.dim = binary::read<std::uint64_t>(in);
  m.group_size = binary::read<std::uint64_t>(in);
  m.gamma = binary::read<float>(in);
  ci.config_hash = binary::read<std::uint64_t>(in);
  const bool has_projection = binary::read<std::uint8_t>(in) != 0;
  const auto activation = binary::read<std::uint8_t>(in);
  const auto feature_dim = binary::read<std::uint64_t>(in);
  auto block = [&in](std::vector<float>& v, std::size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw Error("truncated checkpoint");
  };
  block(m.entity, m.num_entities * m.entity_width());
  block(m.relation, m.num_relations * m.relation_width());
  if (has_projection) {
    ProjectionLayer<float> p;
    p.feature_dim = feature_dim;
    p.free_dim = m.entity_width();
    p.output_dim = m.entity_width();
    p.activation = activation ? Activation::kRelu : Activation::kNone;
    block(p.weight, p.output_dim * p.input_dim());
    block(p.bias, p.output_dim);
    m.projection = std::move(p);
    m.features = std::move(features);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in checkpoint");
  if (!has_projection || m.features) m.validate_shape();
  if (info) *info = ci;
  return m;
}

inline KgeModel<float> load_checkpoint(
    const std::filesystem::path& path,
    std::shared_ptr<const FeatureMatrix> features = {},
    CheckpointInfo* info = nullptr) {
  return decode_checkpoint(read_file(path), std::move(features), info);
}

}  // namespace kgc::kge
