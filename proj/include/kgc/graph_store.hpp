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
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgc/common.hpp"

namespace kgc {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId h = 0;
  RelationId r = 0;
  EntityId t = 0;

  auto operator<=>(const Triple&) const = default;
};

// One adjacency entry: the relation and the entity on the other end.
struct Edge {
  RelationId r = 0;
  EntityId e = 0;

  auto operator<=>(const Edge&) const = default;
};

enum class Direction { kOut, kIn, kBoth };

// Immutable triple store with CSR adjacency in both directions.
//
// Adjacency rows are sorted by (relation, neighbor) and keep duplicate
// triples, so counts derived from them match the raw input multiset.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph build(std::vector<Triple> triples,
                              std::size_t num_entities,
                              std::size_t num_relations) {
    for (const auto& tr : triples) {
      if (tr.h >= num_entities || tr.t >= num_entities ||
          tr.r >= num_relations) {
        throw Error("triple id out of range");
      }
    }
    std::sort(triples.begin(), triples.end());

    KnowledgeGraph kg;
    kg.num_entities_ = num_entities;
    kg.num_relations_ = num_relations;
    kg.triples_ = std::move(triples);
    kg.relation_freq_.assign(num_relations, 0);
    for (const auto& tr : kg.triples_) ++kg.relation_freq_[tr.r];

    auto fill = [&](std::vector<std::uint64_t>& offsets,
                    std::vector<Edge>& edges, bool outgoing) {
      offsets.assign(num_entities + 1, 0);
      for (const auto& tr : kg.triples_) ++offsets[(outgoing ? tr.h : tr.t) + 1];
      std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
      edges.resize(kg.triples_.size());
      std::vector<std::uint64_t> cursor(offsets.begin(), offsets.end() - 1);
      for (const auto& tr : kg.triples_) {
        if (outgoing) {
          edges[cursor[tr.h]++] = Edge{tr.r, tr.t};
        } else {
          edges[cursor[tr.t]++] = Edge{tr.r, tr.h};
        }
      }
      for (std::size_t e = 0; e < num_entities; ++e) {
        std::sort(edges.begin() + static_cast<std::ptrdiff_t>(offsets[e]),
                  edges.begin() + static_cast<std::ptrdiff_t>(offsets[e + 1]));
      }
    };
    fill(kg.out_offsets_, kg.out_edges_, true);
    fill(kg.in_offsets_, kg.in_edges_, false);
    return kg;
  }

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_triples() const { return triples_.size(); }

  // Sorted lexicographically by (h, r, t).
  std::span<const Triple> triples() const { return triples_; }

  std::span<const Edge> out_edges(EntityId e) const {
    check_entity(e);
    return {out_edges_.data() + out_offsets_[e],
            out_edges_.data() + out_offsets_[e + 1]};
  }

  std::span<const Edge> in_edges(EntityId e) const {
    check_entity(e);
    return {in_edges_.data() + in_offsets_[e],
            in_edges_.data() + in_offsets_[e + 1]};
  }

  // Out-degree plus in-degree.
  std::uint64_t degree(EntityId e) const {
    check_entity(e);
    return (out_offsets_[e + 1] - out_offsets_[e]) +
           (in_offsets_[e + 1] - in_offsets_[e]);
  }

  std::uint64_t relation_frequency(RelationId r) const {
    if (r >= num_relations_) throw Error("relation id out of range");
    return relation_freq_[r];
  }

  void check_entity(EntityId e) const {
    if (e >= num_entities_) {
      throw Error("entity id " + std::to_string(e) + " out of range");
    }
  }

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<Triple> triples_;
  std::vector<std::uint64_t> out_offsets_{0};
  std::vector<Edge> out_edges_;
  std::vector<std::uint64_t> in_offsets_{0};
  std::vector<Edge> in_edges_;
  std::vector<std::uint64_t> relation_freq_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Splits on spaces and tabs, dropping empty fields.
inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

// Parses "h r t" lines. '#' lines and blank lines are skipped.
inline std::vector<Triple> read_triples(const std::filesystem::path& path,
                                        std::size_t num_entities,
                                        std::size_t num_relations) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file " + path.string());
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto fields = detail::split_ws(body);
    std::uint64_t v[3];
    if (fields.size() != 3 || !parse_number(fields[0], v[0]) ||
        !parse_number(fields[1], v[1]) || !parse_number(fields[2], v[2])) {
      throw Error("malformed triple at line " + std::to_string(line_no));
    }
    if (v[0] >= num_entities || v[2] >= num_entities || v[1] >= num_relations) {
      throw Error("id out of range at line " + std::to_string(line_no));
    }
    triples.push_back(Triple{static_cast<EntityId>(v[0]),
                             static_cast<RelationId>(v[1]),
                             static_cast<EntityId>(v[2])});
  }
  if (triples.empty()) throw Error("empty file: " + path.string());
  return triples;
}

inline KnowledgeGraph ingest_triples(const std::filesystem::path& path,
                                     std::size_t num_entities,
                                     std::size_t num_relations) {
  return KnowledgeGraph::build(read_triples(path, num_entities, num_relations),
                               num_entities, num_relations);
}

inline std::string format_triples(std::span<const Triple> triples) {
  std::string out;
  for (const auto& tr : triples) {
    out += std::to_string(tr.h);
    out += ' ';
    out += std::to_string(tr.r);
    out += ' ';
    out += std::to_string(tr.t);
    out += '\n';
  }
  return out;
}

// One label per line; the line number is the id.
inline std::vector<std::string> read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocab file " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  return labels;
}

// Deduplicated (relation, neighbor) pairs, sorted. kBoth merges both rows.
inline std::vector<Edge> neighbors(const KnowledgeGraph& kg, EntityId e,
                                   Direction direction) {
  std::vector<Edge> out;
  if (direction != Direction::kIn) {
    auto row = kg.out_edges(e);
    out.insert(out.end(), row.begin(), row.end());
  }
  if (direction != Direction::kOut) {
    auto row = kg.in_edges(e);
    out.insert(out.end(), row.begin(), row.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Uniform sample of n distinct entries of neighbors(e, kBoth), returned in
// sorted order. Returns the full list when it has at most n entries.
inline std::vector<Edge> sample_neighbors(const KnowledgeGraph& kg, EntityId e,
                                          std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("sample size must be at least 1");
  auto all = neighbors(kg, e, Direction::kBoth);
  if (all.size() <= n) return all;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace kgc
