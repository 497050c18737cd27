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
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgc/candidate_list.hpp"
#include "kgc/graph_store.hpp"

namespace kgc {

// Row-major sparse count matrix. Every stored count is > 0 and columns
// within a row are strictly ascending.
class SparseCounts {
 public:
  SparseCounts() = default;

  // `entries` are (row, col) occurrences; repeats are summed.
  static SparseCounts from_pairs(
      std::vector<std::pair<std::uint32_t, std::uint32_t>> entries,
      std::size_t num_rows) {
    std::sort(entries.begin(), entries.end());
    SparseCounts m;
    m.offsets_.assign(num_rows + 1, 0);
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      while (j < entries.size() && entries[j] == entries[i]) ++j;
      m.cols_.push_back(entries[i].second);
      m.counts_.push_back(j - i);
      ++m.offsets_[entries[i].first + 1];
      i = j;
    }
    for (std::size_t r = 0; r < num_rows; ++r) m.offsets_[r + 1] += m.offsets_[r];
    return m;
  }

  std::size_t num_rows() const { return offsets_.size() - 1; }

  std::span<const std::uint32_t> cols(std::uint32_t row) const {
    if (row >= num_rows()) return {};
    return {cols_.data() + offsets_[row], cols_.data() + offsets_[row + 1]};
  }

  std::span<const std::uint64_t> counts(std::uint32_t row) const {
    if (row >= num_rows()) return {};
    return {counts_.data() + offsets_[row], counts_.data() + offsets_[row + 1]};
  }

  std::uint64_t get(std::uint32_t row, std::uint32_t col) const {
    auto c = cols(row);
    auto it = std::lower_bound(c.begin(), c.end(), col);
    if (it == c.end() || *it != col) return 0;
    return counts(row)[static_cast<std::size_t>(it - c.begin())];
  }

  std::uint64_t row_sum(std::uint32_t row) const {
    std::uint64_t s = 0;
    for (auto v : counts(row)) s += v;
    return s;
  }

  std::size_t nnz() const { return cols_.size(); }

 private:
  std::vector<std::uint64_t> offsets_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<std::uint64_t> counts_;
};

// Co-occurrence counts over the training triples.
struct CountTables {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  SparseCounts head_tail;  // (h, t) -> count(h,*,t)
  SparseCounts tail_head;  // (t, h) -> count(h,*,t)
  SparseCounts rel_tail;   // (r, t) -> count(*,r,t)
  SparseCounts rel_head;   // (r, h) -> count(h,r,*)
  SparseCounts head_rel;   // (e, r) -> count(e,r,*)
  SparseCounts tail_rel;   // (e, r) -> count(*,r,e)
  std::vector<std::uint64_t> head_total;  // count(h,*,*)
  std::vector<std::uint64_t> tail_total;  // count(*,*,t)
  std::vector<std::uint64_t> rel_total;   // count(*,r,*)
};

inline CountTables build_count_tables(const KnowledgeGraph& kg) {
  const auto ne = kg.num_entities();
  const auto nr = kg.num_relations();
  using Pairs = std::vector<std::pair<std::uint32_t, std::uint32_t>>;
  Pairs ht, th, rt, rh, hr, tr;
  for (const auto& x : kg.triples()) {
    ht.emplace_back(x.h, x.t);
    th.emplace_back(x.t, x.h);
    rt.emplace_back(x.r, x.t);
    rh.emplace_back(x.r, x.h);
    hr.emplace_back(x.h, x.r);
    tr.emplace_back(x.t, x.r);
  }
  CountTables c;
  c.num_entities = ne;
  c.num_relations = nr;
  c.head_tail = SparseCounts::from_pairs(std::move(ht), ne);
  c.tail_head = SparseCounts::from_pairs(std::move(th), ne);
  c.rel_tail = SparseCounts::from_pairs(std::move(rt), nr);
  c.rel_head = SparseCounts::from_pairs(std::move(rh), nr);
  c.head_rel = SparseCounts::from_pairs(std::move(hr), ne);
  c.tail_rel = SparseCounts::from_pairs(std::move(tr), ne);
  c.head_total.assign(ne, 0);
  c.tail_total.assign(ne, 0);
  c.rel_total.assign(nr, 0);
  for (const auto& x : kg.triples()) {
    ++c.head_total[x.h];
    ++c.tail_total[x.t];
    ++c.rel_total[x.r];
  }
  return c;
}

// One step of a walk: the conditional frequency of the free element given
// the bound one.
//   HT: entity x -> entity y, count(x,*,y) / count(x,*,*)
//   TH: entity x -> entity y, count(y,*,x) / count(*,*,x)
//   RT: relation r -> entity y, count(*,r,y) / count(*,r,*)
//   RH: relation r -> entity y, count(y,r,*) / count(*,r,*)
//   HR: entity x -> relation q, count(x,q,*) / count(x,*,*)
//   TR: entity x -> relation q, count(*,q,x) / count(*,*,x)
enum class Leg { kHT, kTH, kRT, kRH, kHR, kTR };

struct LegRow {
  std::span<const std::uint32_t> targets;
  std::span<const std::uint64_t> counts;
  std::uint64_t denominator = 0;
};

inline LegRow leg_row(const CountTables& c, Leg leg, std::uint32_t from) {
  auto total = [](const std::vector<std::uint64_t>& v, std::uint32_t i) {
    return i < v.size() ? v[i] : std::uint64_t{0};
  };
  switch (leg) {
    case Leg::kHT:
      return {c.head_tail.cols(from), c.head_tail.counts(from), total(c.head_total, from)};
    case Leg::kTH:
      return {c.tail_head.cols(from), c.tail_head.counts(from), total(c.tail_total, from)};
    case Leg::kRT:
      return {c.rel_tail.cols(from), c.rel_tail.counts(from), total(c.rel_total, from)};
    case Leg::kRH:
      return {c.rel_head.cols(from), c.rel_head.counts(from), total(c.rel_total, from)};
    case Leg::kHR:
      return {c.head_rel.cols(from), c.head_rel.counts(from), total(c.head_total, from)};
    case Leg::kTR:
      return {c.tail_rel.cols(from), c.tail_rel.counts(from), total(c.tail_total, from)};
  }
  return {};
}

enum class RuleId {
  kHT,
  kTH,
  kRT,
  kRH,
  kTH_TH,
  kHT_HT,
  kTH_HT,
  kRT_TR_RT,
  kRT_HR_RT,
  kRH_HR_RT,
  kRH_TR_RT,
};

inline constexpr std::array<RuleId, 11> kAllRules = {
    RuleId::kHT,       RuleId::kTH,       RuleId::kRT,       RuleId::kRH,
    RuleId::kTH_TH,    RuleId::kHT_HT,    RuleId::kTH_HT,    RuleId::kRT_TR_RT,
    RuleId::kRT_HR_RT, RuleId::kRH_HR_RT, RuleId::kRH_TR_RT,
};

inline std::string_view rule_name(RuleId rule) {
  switch (rule) {
    case RuleId::kHT: return "HT";
    case RuleId::kTH: return "TH";
    case RuleId::kRT: return "RT";
    case RuleId::kRH: return "RH";
    case RuleId::kTH_TH: return "TH-TH";
    case RuleId::kHT_HT: return "HT-HT";
    case RuleId::kTH_HT: return "TH-HT";
    case RuleId::kRT_TR_RT: return "RT-TR-RT";
    case RuleId::kRT_HR_RT: return "RT-HR-RT";
    case RuleId::kRH_HR_RT: return "RH-HR-RT";
    case RuleId::kRH_TR_RT: return "RH-TR-RT";
  }
  return "?";
}

inline std::optional<RuleId> parse_rule(std::string_view name) {
  for (auto rule : kAllRules) {
    if (rule_name(rule) == name) return rule;
  }
  return std::nullopt;
}

inline std::vector<Leg> rule_legs(RuleId rule) {
  switch (rule) {
    case RuleId::kHT: return {Leg::kHT};
    case RuleId::kTH: return {Leg::kTH};
    case RuleId::kRT: return {Leg::kRT};
    case RuleId::kRH: return {Leg::kRH};
    case RuleId::kTH_TH: return {Leg::kTH, Leg::kTH};
    case RuleId::kHT_HT: return {Leg::kHT, Leg::kHT};
    case RuleId::kTH_HT: return {Leg::kTH, Leg::kHT};
    case RuleId::kRT_TR_RT: return {Leg::kRT, Leg::kTR, Leg::kRT};
    case RuleId::kRT_HR_RT: return {Leg::kRT, Leg::kHR, Leg::kRT};
    case RuleId::kRH_HR_RT: return {Leg::kRH, Leg::kHR, Leg::kRT};
    case RuleId::kRH_TR_RT: return {Leg::kRH, Leg::kTR, Leg::kRT};
  }
  return {};
}

// Entity-to-entity rules walk from h; relation-to-entity rules from r.
inline bool rule_starts_at_relation(RuleId rule) {
  auto first = rule_legs(rule).front();
  return first == Leg::kRT || first == Leg::kRH;
}

namespace detail {

// Sorted (node, mass) pairs after each leg but the last. Per node, mass is
// accumulated in ascending order of the predecessor node, which keeps
// rule_score and retrieve_by_rule bitwise consistent.
using Frontier = std::vector<std::pair<std::uint32_t, double>>;

inline Frontier advance(const CountTables& c, Leg leg, const Frontier& from) {
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& [node, mass] : from) {
    auto row = leg_row(c, leg, node);
    if (row.denominator == 0) continue;
    for (std::size_t i = 0; i < row.targets.size(); ++i) {
      double p = static_cast<double>(row.counts[i]) /
                 static_cast<double>(row.denominator);
      acc[row.targets[i]] += mass * p;
    }
  }
  Frontier out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end());
  return out;
}

inline Frontier frontier_before_last_leg(const CountTables& c, RuleId rule,
                                         EntityId h, RelationId r) {
  auto legs = rule_legs(rule);
  Frontier f{{rule_starts_at_relation(rule) ? r : h, 1.0}};
  for (std::size_t i = 0; i + 1 < legs.size(); ++i) f = advance(c, legs[i], f);
  return f;
}

}  // namespace detail

// Co-occurrence score F(h, r, t) of `rule`. Composite rules sum the product
// of leg frequencies over every intermediate entity/relation. A leg with an
// empty denominator contributes 0.
inline double rule_score(const CountTables& c, RuleId rule, EntityId h,
                         RelationId r, EntityId t) {
  auto frontier = detail::frontier_before_last_leg(c, rule, h, r);
  Leg last = rule_legs(rule).back();
  double score = 0.0;
  for (const auto& [node, mass] : frontier) {
    auto row = leg_row(c, last, node);
    if (row.denominator == 0) continue;
    auto it = std::lower_bound(row.targets.begin(), row.targets.end(), t);
    if (it == row.targets.end() || *it != t) continue;
    double p = static_cast<double>(row.counts[static_cast<std::size_t>(
                   it - row.targets.begin())]) /
               static_cast<double>(row.denominator);
    score += mass * p;
  }
  return score;
}

// Every tail with nonzero rule_score, ranked and truncated to `cap`.
inline CandidateList retrieve_by_rule(const CountTables& c, RuleId rule,
                                      EntityId h, RelationId r,
                                      std::size_t cap = kDefaultCandidateCap) {
  if (cap == 0) throw Error("cap must be at least 1");
  auto frontier = detail::frontier_before_last_leg(c, rule, h, r);
  auto last = detail::advance(c, rule_legs(rule).back(), frontier);
  CandidateList list;
  list.head = h;
  list.relation = r;
  list.cap = cap;
  std::string source(rule_name(rule));
  for (const auto& [t, score] : last) {
    if (score > 0.0) list.entries.push_back({t, score, score, source});
  }
  sort_and_truncate(list);
  return list;
}

}  // namespace kgc
