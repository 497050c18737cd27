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
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "kgc/candidate_list.hpp"
#include "kgc/features.hpp"
#include "kgc/typing_retrieval.hpp"

namespace kgc {

inline constexpr std::size_t kDefaultPqSubspaces = 64;
inline constexpr std::size_t kDefaultPqCentroids = 64;
inline constexpr std::size_t kDefaultKmeansIterations = 25;
inline constexpr std::size_t kDefaultSemanticK = 1000;

// Product quantizer plus the codes of every database row.
//   codebooks: [subspace][centroid][sub_dim]
//   codes:     [row][subspace]
struct PQIndex {
  std::size_t dim = 0;
  std::size_t num_subspaces = 0;
  std::size_t centroids_per_subspace = 0;
  std::size_t rows = 0;
  std::vector<float> codebooks;
  std::vector<std::uint16_t> codes;

  std::size_t sub_dim() const { return dim / num_subspaces; }

  std::span<const float> centroid(std::size_t m, std::size_t c) const {
    const auto d = sub_dim();
    return {codebooks.data() + (m * centroids_per_subspace + c) * d, d};
  }

  std::vector<float> reconstruct(std::size_t row) const {
    std::vector<float> out;
    out.reserve(dim);
    for (std::size_t m = 0; m < num_subspaces; ++m) {
      auto c = centroid(m, codes[row * num_subspaces + m]);
      out.insert(out.end(), c.begin(), c.end());
    }
    return out;
  }
};

namespace detail {

inline double squared_distance(std::span<const float> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

inline double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

// Nearest centroid; ties go to the lower index.
template <class Centroid>
std::pair<std::size_t, double> nearest(std::span<const float> x,
                                       std::size_t k, std::size_t d,
                                       const Centroid* centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double dist = squared_distance(x, std::span<const Centroid>(centroids + c * d, d));
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return {best, best_d};
}

// Lloyd's k-means on one subspace. Returns k * d centroids.
inline std::vector<double> kmeans(const std::vector<std::span<const float>>& points,
                                  std::size_t k, std::size_t d,
                                  std::size_t iterations, std::uint64_t seed) {
  const auto n = points.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // Seed with distinct sub-vectors first, then fill with whatever is left.
  std::vector<std::size_t> chosen;
  std::vector<bool> used(n, false);
  for (auto i : order) {
    if (chosen.size() == k) break;
    bool dup = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t j) {
      return std::equal(points[i].begin(), points[i].end(), points[j].begin());
    });
    if (!dup) {
      chosen.push_back(i);
      used[i] = true;
    }
  }
  for (auto i : order) {
    if (chosen.size() == k) break;
    if (!used[i]) {
      chosen.push_back(i);
      used[i] = true;
    }
  }
  std::vector<double> centroids(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points[chosen[c]].begin(), points[chosen[c]].end(),
              centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  }

  std::vector<std::size_t> assign(n, k);
  std::vector<double> dist(n, 0.0);
  std::vector<std::size_t> sizes(k);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      auto [c, dd] = nearest(points[i], k, d, centroids.data());
      if (c != assign[i]) changed = true;
      assign[i] = c;
      dist[i] = dd;
    }
    if (!changed) break;
    std::fill(centroids.begin(), centroids.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assign[i]];
      double* c = centroids.data() + assign[i] * d;
      for (std::size_t j = 0; j < d; ++j) c[j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // Re-seed from the point farthest from its current centroid.
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i) {
          if (dist[i] > dist[far]) far = i;
        }
        std::copy(points[far].begin(), points[far].end(),
                  centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
        dist[far] = -1.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) {
        centroids[c * d + j] /= static_cast<double>(sizes[c]);
      }
    }
  }
  return centroids;
}

}  // namespace detail

inline PQIndex train_pq(const FeatureMatrix& features,
                        std::size_t num_subspaces = kDefaultPqSubspaces,
                        std::size_t centroids = kDefaultPqCentroids,
                        std::size_t iterations = kDefaultKmeansIterations,
                        std::uint64_t seed = 0) {
  if (num_subspaces == 0 || features.dim % num_subspaces != 0) {
    throw Error("feature dim " + std::to_string(features.dim) +
                " is not divisible by " + std::to_string(num_subspaces) +
                " subspaces");
  }
  if (centroids == 0 || centroids > 65536) {
    throw Error("centroids per subspace must lie in [1, 65536]");
  }
  if (features.rows < centroids) {
    throw Error("need at least " + std::to_string(centroids) +
                " rows to train, got " + std::to_string(features.rows));
  }
  PQIndex index;
  index.dim = features.dim;
  index.num_subspaces = num_subspaces;
  index.centroids_per_subspace = centroids;
  index.rows = features.rows;
  const auto d = index.sub_dim();
  index.codebooks.resize(num_subspaces * centroids * d);
  index.codes.resize(features.rows * num_subspaces);

  std::vector<std::span<const float>> points(features.rows);
  for (std::size_t m = 0; m < num_subspaces; ++m) {
    for (std::size_t i = 0; i < features.rows; ++i) {
      points[i] = features.row(i).subspan(m * d, d);
    }
    auto cb = detail::kmeans(points, centroids, d, iterations,
                             detail::mix_seed(seed, m));
    float* out = index.codebooks.data() + m * centroids * d;
    for (std::size_t j = 0; j < cb.size(); ++j) out[j] = static_cast<float>(cb[j]);
    for (std::size_t i = 0; i < features.rows; ++i) {
      auto [c, dist] = detail::nearest(points[i], centroids, d,
                                       static_cast<const float*>(out));
      index.codes[i * num_subspaces + m] = static_cast<std::uint16_t>(c);
    }
  }
  return index;
}

// Mean squared reconstruction error per row.
inline double quantization_error(const PQIndex& index,
                                 const FeatureMatrix& features) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows; ++i) {
    auto rec = index.reconstruct(i);
    total += detail::squared_distance(features.row(i), std::span<const float>(rec));
  }
  return total / static_cast<double>(features.rows);
}

struct Neighbor {
  std::uint32_t row = 0;
  double distance = 0.0;
};

// Asymmetric distance search: the query stays exact, database rows are
// reconstructed from their codes through per-subspace lookup tables.
inline std::vector<Neighbor> pq_knn(const PQIndex& index,
                                    std::span<const float> query,
                                    std::size_t k = kDefaultSemanticK) {
  if (query.size() != index.dim) {
    throw Error("query dim " + std::to_string(query.size()) +
                " does not match index dim " + std::to_string(index.dim));
  }
  if (k == 0) throw Error("k must be at least 1");
  const auto nm = index.num_subspaces, nc = index.centroids_per_subspace;
  const auto d = index.sub_dim();
  std::vector<double> lut(nm * nc);
  for (std::size_t m = 0; m < nm; ++m) {
    auto q = query.subspan(m * d, d);
    for (std::size_t c = 0; c < nc; ++c) {
      lut[m * nc + c] = detail::squared_distance(q, index.centroid(m, c));
    }
  }
  std::vector<Neighbor> all(index.rows);
  for (std::size_t i = 0; i < index.rows; ++i) {
    double s = 0.0;
    const auto* code = index.codes.data() + i * nm;
    for (std::size_t m = 0; m < nm; ++m) s += lut[m * nc + code[m]];
    all[i] = {static_cast<std::uint32_t>(i), s};
  }
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.row < b.row;
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k),
                    all.end(), closer);
  all.resize(k);
  for (auto& n : all) n.distance = std::sqrt(n.distance);
  return all;
}

// Entities nearest to relation r's feature vector, scored by negative
// distance. The result does not depend on the query head.
inline CandidateList semantic_retrieve(const PQIndex& index,
                                       const FeatureMatrix& relation_features,
                                       RelationId r,
                                       std::size_t k = kDefaultSemanticK,
                                       const std::string& source = "Semantic") {
  if (r >= relation_features.rows) throw Error("relation id out of range");
  if (relation_features.dim != index.dim) {
    throw Error("relation features and entity index differ in dim");
  }
  CandidateList list;
  list.head = kAnyEntity;
  list.relation = r;
  list.cap = k;
  for (const auto& n : pq_knn(index, relation_features.row(r), k)) {
    list.entries.push_back({n.row, -n.distance, -n.distance, source});
  }
  return list;
}

}  // namespace kgc
