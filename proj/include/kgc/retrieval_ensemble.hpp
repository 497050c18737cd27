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
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgc/candidate_list.hpp"
#include "kgc/graph_store.hpp"

namespace kgc {

// Held-out triples; each triple is one tail-prediction query.
struct EvalSplit {
  std::vector<Triple> triples;

  std::vector<QueryKey> unique_queries() const {
    std::set<QueryKey> keys;
    for (const auto& tr : triples) keys.emplace(tr.h, tr.r);
    return {keys.begin(), keys.end()};
  }
};

struct RetrievalModelReport {
  std::string model_tag;
  double recall = 0.0;
  double accuracy = 0.0;
  std::size_t priority_rank = 0;
};

inline const CandidateList* find_list(const CandidateSet& set, QueryKey key) {
  auto it = set.find(key);
  return it == set.end() ? nullptr : &it->second;
}

// Pooled |S_dev ∩ S_m| / |S_m| over the dev queries; 0 when S_m is empty.
inline double model_accuracy(const CandidateSet& candidates,
                             const EvalSplit& dev) {
  std::size_t hits = 0, emitted = 0;
  for (const auto& tr : dev.triples) {
    const auto* list = find_list(candidates, {tr.h, tr.r});
    if (list && list->contains(tr.t)) ++hits;
  }
  for (const auto& key : dev.unique_queries()) {
    if (const auto* list = find_list(candidates, key)) emitted += list->entries.size();
  }
  return emitted == 0 ? 0.0
                      : static_cast<double>(hits) / static_cast<double>(emitted);
}

// Per-query mean of hits / list size. Diagnostic only.
inline double per_query_accuracy(const CandidateSet& candidates,
                                 const EvalSplit& dev) {
  std::map<QueryKey, std::size_t> hits;
  for (const auto& tr : dev.triples) {
    const auto* list = find_list(candidates, {tr.h, tr.r});
    if (list && list->contains(tr.t)) ++hits[{tr.h, tr.r}];
  }
  auto queries = dev.unique_queries();
  if (queries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& key : queries) {
    const auto* list = find_list(candidates, key);
    if (list && !list->entries.empty()) {
      sum += static_cast<double>(hits[key]) /
             static_cast<double>(list->entries.size());
    }
  }
  return sum / static_cast<double>(queries.size());
}

inline double recall_at_cap(const CandidateSet& candidates,
                            const EvalSplit& dev) {
  if (dev.triples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& tr : dev.triples) {
    const auto* list = find_list(candidates, {tr.h, tr.r});
    if (list && list->contains(tr.t)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dev.triples.size());
}

// Descending accuracy, ties by tag. Also fills priority_rank (1 = highest).
inline std::vector<std::string> priority_order(
    std::vector<RetrievalModelReport>& reports) {
  std::vector<std::size_t> idx(reports.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (reports[a].accuracy != reports[b].accuracy) {
      return reports[a].accuracy > reports[b].accuracy;
    }
    return reports[a].model_tag < reports[b].model_tag;
  });
  std::vector<std::string> tags;
  for (std::size_t rank = 0; rank < idx.size(); ++rank) {
    reports[idx[rank]].priority_rank = rank + 1;
    tags.push_back(reports[idx[rank]].model_tag);
  }
  return tags;
}

inline std::vector<std::string> priority_order(
    const std::vector<RetrievalModelReport>& reports) {
  auto copy = reports;
  return priority_order(copy);
}

// Concatenates the lists in priority order, skipping entities already taken,
// until n candidates are collected. Fused scores are 1/(position+1).
inline CandidateList priority_infill(std::span<const CandidateList> ordered,
                                     std::size_t n = kDefaultCandidateCap) {
  if (n == 0) throw Error("n must be at least 1");
  CandidateList out;
  out.cap = n;
  if (!ordered.empty()) {
    out.head = ordered.front().head;
    out.relation = ordered.front().relation;
  }
  std::unordered_set<EntityId> taken;
  for (const auto& list : ordered) {
    for (const auto& c : list.entries) {
      if (out.entries.size() == n) return out;
      if (!taken.insert(c.entity).second) continue;
      Candidate fused = c;
      fused.score = 1.0 / static_cast<double>(out.entries.size() + 1);
      out.entries.push_back(std::move(fused));
    }
  }
  return out;
}

// Comparison mode: entities ranked by how many lists contain them, then by
// their best position in any list, then by id.
inline CandidateList majority_vote(std::span<const CandidateList> lists,
                                   std::size_t n = kDefaultCandidateCap) {
  if (n == 0) throw Error("n must be at least 1");
  struct Tally {
    std::size_t votes = 0;
    std::size_t best_pos = SIZE_MAX;
    std::string source;
  };
  std::map<EntityId, Tally> tally;
  for (const auto& list : lists) {
    for (std::size_t pos = 0; pos < list.entries.size(); ++pos) {
      auto& t = tally[list.entries[pos].entity];
      ++t.votes;
      if (pos < t.best_pos) {
        t.best_pos = pos;
        t.source = list.entries[pos].source;
      }
    }
  }
  std::vector<std::pair<EntityId, Tally>> ranked(tally.begin(), tally.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.votes != b.second.votes) return a.second.votes > b.second.votes;
    return a.second.best_pos < b.second.best_pos;
  });
  CandidateList out;
  out.cap = n;
  if (!lists.empty()) {
    out.head = lists.front().head;
    out.relation = lists.front().relation;
  }
  for (const auto& [e, t] : ranked) {
    if (out.entries.size() == n) break;
    double score = 1.0 / static_cast<double>(out.entries.size() + 1);
    out.entries.push_back({e, score, static_cast<double>(t.votes), t.source});
  }
  return out;
}

// Report file: tab-separated model_tag, recall, accuracy, priority.
inline std::string format_retrieval_report(
    const std::vector<RetrievalModelReport>& reports) {
  std::string out = "model_tag\trecall\taccuracy\tpriority\n";
  for (const auto& r : reports) {
    out += r.model_tag + '\t' + format_double(r.recall) + '\t' +
           format_double(r.accuracy) + '\t' + std::to_string(r.priority_rank) +
           '\n';
  }
  return out;
}

}  // namespace kgc
