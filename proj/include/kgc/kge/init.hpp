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

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/features.hpp"
#include "kgc/graph_store.hpp"
#include "kgc/kge/model.hpp"

namespace kgc::kge {

enum class InitMode { kRandom, kFeature, kNeighborEnhanced };

inline std::string_view init_mode_name(InitMode m) {
  switch (m) {
    case InitMode::kRandom: return "random";
    case InitMode::kFeature: return "feature";
    case InitMode::kNeighborEnhanced: return "neighbor_enhanced";
  }
  return "?";
}

inline InitMode parse_init_mode(std::string_view name) {
  for (auto m : {InitMode::kRandom, InitMode::kFeature, InitMode::kNeighborEnhanced}) {
    if (init_mode_name(m) == name) return m;
  }
  throw Error("unknown init mode '" + std::string(name) + "'");
}

// How entity representations start out.
//   random            free rows, uniform init
//   feature           text features
//   neighbor_enhanced sum of the first-order neighbors' text features
// Without a projection, feature modes copy the (aggregated) features into the
// free rows, so their width must equal the entity width. With a projection,
// representations are act(W [feature ; free] + b) and the free rows start
// random.
struct EmbeddingInit {
  InitMode mode = InitMode::kRandom;
  std::shared_ptr<const FeatureMatrix> features;
  bool projection = false;
  Activation activation = Activation::kNone;
};

// Row x is the sum of the features of x's distinct first-order neighbors
// (either direction), accumulated in ascending neighbor id.
inline FeatureMatrix neighbor_enhanced_init(const KnowledgeGraph& kg,
                                            const FeatureMatrix& features) {
  if (features.rows != kg.num_entities()) {
    throw Error("features must cover every entity");
  }
  FeatureMatrix out;
  out.rows = features.rows;
  out.dim = features.dim;
  out.kind = FeatureKind::kEntity;
  out.data.assign(out.rows * out.dim, 0.0f);
  std::vector<double> acc(features.dim);
  std::vector<EntityId> nbrs;
  for (EntityId x = 0; x < kg.num_entities(); ++x) {
    nbrs.clear();
    for (const auto& e : kg.out_edges(x)) nbrs.push_back(e.e);
    for (const auto& e : kg.in_edges(x)) nbrs.push_back(e.e);
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    std::fill(acc.begin(), acc.end(), 0.0);
    for (auto n : nbrs) {
      auto f = features.row(n);
      for (std::size_t j = 0; j < f.size(); ++j) acc[j] += f[j];
    }
    auto dst = out.row(x);
    for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = static_cast<float>(acc[j]);
  }
  return out;
}

struct ModelShape {
  ModelKind kind = ModelKind::kTransE;
  std::size_t dim = 0;
  std::size_t group_size = kDefaultNoteGroupSize;
  double gamma = kDefaultGamma;
};

template <class Real>
KgeModel<Real> make_model(const ModelShape& shape, const KnowledgeGraph& kg,
                          const EmbeddingInit& init, std::uint64_t seed) {
  KgeModel<Real> m;
  m.kind = shape.kind;
  m.num_entities = kg.num_entities();
  m.num_relations = kg.num_relations();
  m.dim = shape.dim;
  m.group_size = shape.group_size;
  m.gamma = static_cast<Real>(shape.gamma);
  if (m.dim == 0) throw Error("model dim must be positive");
  if (m.kind == ModelKind::kNote && (m.group_size == 0 || m.dim % m.group_size != 0)) {
    throw Error("NOTE dim " + std::to_string(m.dim) +
                " is not divisible by group size " + std::to_string(m.group_size));
  }

  std::mt19937_64 rng(seed);
  const Real range = static_cast<Real>((shape.gamma + 2.0) / static_cast<double>(m.dim));
  std::uniform_real_distribution<double> uni(-static_cast<double>(range),
                                             static_cast<double>(range));
  m.entity.resize(m.num_entities * m.entity_width());
  for (auto& v : m.entity) v = static_cast<Real>(uni(rng));

  m.relation.resize(m.num_relations * m.relation_width());
  if (m.kind == ModelKind::kNote) {
    // Blocks start near the identity; scales start uniform (s = 0).
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    const auto g = m.group_size, block = g * g;
    for (RelationId r = 0; r < m.num_relations; ++r) {
      auto row = m.relation_row(r);
      for (std::size_t i = 0; i < m.num_groups(); ++i) {
        for (std::size_t a = 0; a < g; ++a) {
          for (std::size_t b = 0; b < g; ++b) {
            row[i * block + a * g + b] =
                static_cast<Real>((a == b ? 1.0 : 0.0) + jitter(rng));
          }
        }
      }
      std::fill(row.begin() + static_cast<std::ptrdiff_t>(m.num_groups() * block),
                row.end(), Real(0));
    }
  } else {
    for (auto& v : m.relation) v = static_cast<Real>(uni(rng));
  }

  std::shared_ptr<const FeatureMatrix> source;
  if (init.mode != InitMode::kRandom) {
    if (!init.features) {
      throw Error(std::string(init_mode_name(init.mode)) + " init requires features");
    }
    source = init.mode == InitMode::kFeature
                 ? init.features
                 : std::make_shared<const FeatureMatrix>(
                       neighbor_enhanced_init(kg, *init.features));
    if (source->rows != m.num_entities) {
      throw Error("features must cover every entity");
    }
  }

  if (init.projection) {
    if (!source) throw Error("a projection layer requires feature init");
    ProjectionLayer<Real> p;
    p.feature_dim = source->dim;
    p.free_dim = m.entity_width();
    p.output_dim = m.entity_width();
    p.activation = init.activation;
    const double limit =
        std::sqrt(6.0 / static_cast<double>(p.input_dim() + p.output_dim));
    std::uniform_real_distribution<double> xavier(-limit, limit);
    p.weight.resize(p.output_dim * p.input_dim());
    for (auto& w : p.weight) w = static_cast<Real>(xavier(rng));
    p.bias.assign(p.output_dim, Real(0));
    m.projection = std::move(p);
    m.features = std::move(source);
  } else if (source) {
    if (source->dim != m.entity_width()) {
      throw Error("feature dim " + std::to_string(source->dim) +
                  " does not match entity width " + std::to_string(m.entity_width()) +
                  "; enable the projection layer");
    }
    for (std::size_t i = 0; i < m.entity.size(); ++i) {
      m.entity[i] = static_cast<Real>(source->data[i]);
    }
  }
  m.validate_shape();
  return m;
}

}  // namespace kgc::kge
