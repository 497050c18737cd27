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
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "kgc/candidate_list.hpp"
#include "kgc/graph_store.hpp"

namespace kgc {

inline constexpr std::size_t kDefaultContextHops = 3;
inline constexpr double kDefaultTypingSmoothing = 1e-6;

// Degree prior over entities and frequency prior over relations.
struct PriorTables {
  std::vector<double> entity;
  std::vector<double> relation;
};

inline PriorTables estimate_priors(const KnowledgeGraph& kg) {
  if (kg.num_triples() == 0) throw Error("cannot estimate priors of an empty graph");
  PriorTables p;
  const double total_degree = 2.0 * static_cast<double>(kg.num_triples());
  p.entity.resize(kg.num_entities());
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    p.entity[e] = static_cast<double>(kg.degree(e)) / total_degree;
  }
  p.relation.resize(kg.num_relations());
  for (RelationId r = 0; r < kg.num_relations(); ++r) {
    p.relation[r] = static_cast<double>(kg.relation_frequency(r)) /
                    static_cast<double>(kg.num_triples());
  }
  return p;
}

// Count-based entity typing model p(r | e): a weighted, smoothed histogram
// of the relations on a sample of each entity's incident edges.
class TypingModel {
 public:
  double probability(EntityId e, RelationId r) const {
    auto b = offsets_[e], end = offsets_[e + 1];
    auto first = relations_.begin() + static_cast<std::ptrdiff_t>(b);
    auto last = relations_.begin() + static_cast<std::ptrdiff_t>(end);
    auto it = std::lower_bound(first, last, r);
    if (it != last && *it == r) {
      return probs_[static_cast<std::size_t>(it - relations_.begin())];
    }
    return unseen_[e];
  }

  // Full distribution over [0, num_relations).
  std::vector<double> distribution(EntityId e) const {
    std::vector<double> out(num_relations_, unseen_[e]);
    for (auto i = offsets_[e]; i < offsets_[e + 1]; ++i) out[relations_[i]] = probs_[i];
    return out;
  }

  std::size_t num_entities() const { return unseen_.size(); }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t neighbor_sample_size() const { return sample_size_; }
  double smoothing() const { return smoothing_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> upsample_weights() const { return weights_; }

 private:
  friend TypingModel fit_typing_model(const KnowledgeGraph&, std::size_t,
                                      std::span<const double>, double,
                                      std::uint64_t);

  std::size_t num_relations_ = 0;
  std::size_t sample_size_ = 0;
  double smoothing_ = 0.0;
  std::uint64_t seed_ = 0;
  std::vector<double> weights_;  // normalized to mean 1
  std::vector<std::uint64_t> offsets_{0};
  std::vector<RelationId> relations_;
  std::vector<double> probs_;
  std::vector<double> unseen_;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// `upsample_weights` is empty (uniform) or one positive weight per relation.
// Weights are rescaled to mean 1, so only their ratios matter.
inline TypingModel fit_typing_model(const KnowledgeGraph& kg,
                                    std::size_t sample_size,
                                    std::span<const double> upsample_weights,
                                    double smoothing, std::uint64_t seed) {
  if (sample_size == 0) throw Error("neighbor sample size must be at least 1");
  if (smoothing < 0.0) throw Error("smoothing must be non-negative");
  const auto nr = kg.num_relations();
  TypingModel m;
  m.num_relations_ = nr;
  m.sample_size_ = sample_size;
  m.smoothing_ = smoothing;
  m.seed_ = seed;
  if (upsample_weights.empty()) {
    m.weights_.assign(nr, 1.0);
  } else {
    if (upsample_weights.size() != nr) {
      throw Error("upsample weights must cover every relation");
    }
    double sum = 0.0;
    for (double w : upsample_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw Error("upsample weights must be positive");
      sum += w;
    }
    const double mean = sum / static_cast<double>(nr);
    for (double w : upsample_weights) m.weights_.push_back(w / mean);
  }

  std::vector<double> hist(nr, 0.0);
  std::vector<RelationId> incident;
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    incident.clear();
    for (const auto& edge : kg.out_edges(e)) incident.push_back(edge.r);
    for (const auto& edge : kg.in_edges(e)) incident.push_back(edge.r);
    if (incident.size() > sample_size) {
      std::mt19937_64 rng(detail::mix_seed(seed, e));
      for (std::size_t i = 0; i < sample_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, incident.size() - 1);
        std::swap(incident[i], incident[pick(rng)]);
      }
      incident.resize(sample_size);
    }
    std::sort(incident.begin(), incident.end());
    double mass = 0.0;
    for (auto r : incident) {
      hist[r] += m.weights_[r];
      mass += m.weights_[r];
    }
    const double z = mass + smoothing * static_cast<double>(nr);
    m.unseen_.push_back(z > 0.0 ? smoothing / z : 0.0);
    incident.erase(std::unique(incident.begin(), incident.end()), incident.end());
    for (auto r : incident) {
      m.relations_.push_back(r);
      m.probs_.push_back((hist[r] + smoothing) / z);
      hist[r] = 0.0;
    }
    m.offsets_.push_back(m.relations_.size());
  }
  return m;
}

struct MaskScore {
  double mean_reciprocal_rank = 0.0;
  std::size_t evaluated = 0;
  // Endpoints left without any edge once the masked triples are removed.
  std::size_t skipped = 0;
};

// 1-based rank of r in p(. | e); ties go to the lower relation id.
inline std::size_t relation_rank(const TypingModel& model, EntityId e,
                                 RelationId r) {
  auto dist = model.distribution(e);
  std::size_t rank = 1;
  for (RelationId q = 0; q < dist.size(); ++q) {
    if (dist[q] > dist[r] || (dist[q] == dist[r] && q < r)) ++rank;
  }
  return rank;
}

// Self-evaluation by masking: removes a random `mask_fraction` of the
// triples, refits the model with the same settings on the remainder and
// ranks each masked relation at both endpoints.
inline MaskScore mask_and_score(const TypingModel& model,
                                const KnowledgeGraph& kg, double mask_fraction,
                                std::uint64_t seed) {
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) {
    throw Error("mask fraction must lie in (0, 1)");
  }
  auto triples = kg.triples();
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto num_masked = static_cast<std::size_t>(
      std::llround(mask_fraction * static_cast<double>(triples.size())));
  num_masked = std::clamp<std::size_t>(num_masked, 1, triples.size());

  std::vector<bool> masked(triples.size(), false);
  for (std::size_t i = 0; i < num_masked; ++i) masked[order[i]] = true;
  std::vector<Triple> kept;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    if (!masked[i]) kept.push_back(triples[i]);
  }
  auto rest = KnowledgeGraph::build(std::move(kept), kg.num_entities(),
                                    kg.num_relations());
  auto refit = fit_typing_model(rest, model.neighbor_sample_size(),
                                model.upsample_weights(), model.smoothing(),
                                model.seed());
  MaskScore score;
  double sum = 0.0;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    if (!masked[i]) continue;
    for (EntityId e : {triples[i].h, triples[i].t}) {
      if (rest.degree(e) == 0) {
        ++score.skipped;
        continue;
      }
      sum += 1.0 / static_cast<double>(relation_rank(refit, e, triples[i].r));
      ++score.evaluated;
    }
  }
  if (score.evaluated > 0) {
    score.mean_reciprocal_rank = sum / static_cast<double>(score.evaluated);
  }
  return score;
}

// Entities within `hops` undirected hops of h, excluding h, ascending.
inline std::vector<EntityId> context_neighborhood(const KnowledgeGraph& kg,
                                                  EntityId h,
                                                  std::size_t hops) {
  kg.check_entity(h);
  std::vector<bool> seen(kg.num_entities(), false);
  seen[h] = true;
  std::vector<EntityId> frontier{h}, reached;
  for (std::size_t hop = 0; hop < hops && !frontier.empty(); ++hop) {
    std::vector<EntityId> next;
    for (auto e : frontier) {
      for (auto row : {kg.out_edges(e), kg.in_edges(e)}) {
        for (const auto& edge : row) {
          if (!seen[edge.e]) {
            seen[edge.e] = true;
            next.push_back(edge.e);
          }
        }
      }
    }
    reached.insert(reached.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  std::sort(reached.begin(), reached.end());
  return reached;
}

// Ranks the context neighborhood of h by the posterior p(e) * p(r | e).
// Zero-posterior entities are dropped.
inline CandidateList pie_retrieve(const TypingModel& model,
                                  const PriorTables& priors,
                                  const KnowledgeGraph& kg, EntityId h,
                                  RelationId r,
                                  std::size_t cap = kDefaultCandidateCap,
                                  std::size_t hops = kDefaultContextHops,
                                  const std::string& source = "PIE") {
  if (cap == 0) throw Error("cap must be at least 1");
  if (r >= kg.num_relations()) throw Error("relation id out of range");
  CandidateList list;
  list.head = h;
  list.relation = r;
  list.cap = cap;
  for (auto e : context_neighborhood(kg, h, hops)) {
    double score = priors.entity[e] * model.probability(e, r);
    if (score > 0.0) list.entries.push_back({e, score, score, source});
  }
  sort_and_truncate(list);
  return list;
}

// "relation_id weight" per line; relations not listed keep weight 1.
inline std::vector<double> read_upsample_weights(
    const std::filesystem::path& path, std::size_t num_relations) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open upsample weight file " + path.string());
  std::vector<double> w(num_relations, 1.0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto f = detail::split_ws(body);
    std::uint64_t r = 0;
    double weight = 0.0;
    if (f.size() != 2 || !parse_number(f[0], r) || !parse_number(f[1], weight)) {
      throw Error("malformed weight at line " + std::to_string(line_no));
    }
    if (r >= num_relations) {
      throw Error("relation id out of range at line " + std::to_string(line_no));
    }
    w[r] = weight;
  }
  return w;
}

}  // namespace kgc
