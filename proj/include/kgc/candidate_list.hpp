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
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kgc/common.hpp"
#include "kgc/graph_store.hpp"

namespace kgc {

inline constexpr std::size_t kDefaultCandidateCap = 20000;
// Query head for retrievers whose ranking does not depend on h.
inline constexpr EntityId kAnyEntity = std::numeric_limits<EntityId>::max();

struct Candidate {
  EntityId entity = 0;
  double score = 0.0;
  // Score assigned by the producing retriever; kept through fusion/reranking.
  double retrieval_score = 0.0;
  std::string source;
};

// Ranked tail candidates for one (h, r) query.
//   entries are sorted by score descending, ties by ascending entity id,
//   hold no duplicate entity, and number at most `cap`.
struct CandidateList {
  EntityId head = 0;
  RelationId relation = 0;
  std::vector<Candidate> entries;
  std::size_t cap = kDefaultCandidateCap;

  bool contains(EntityId t) const {
    return std::any_of(entries.begin(), entries.end(),
                       [t](const Candidate& c) { return c.entity == t; });
  }

  std::vector<EntityId> entities() const {
    std::vector<EntityId> out;
    out.reserve(entries.size());
    for (const auto& c : entries) out.push_back(c.entity);
    return out;
  }
};

inline bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.entity < b.entity;
}

inline void sort_and_truncate(CandidateList& list) {
  auto& v = list.entries;
  if (v.size() > list.cap) {
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(list.cap),
                      v.end(), ranks_before);
    v.resize(list.cap);
  } else {
    std::sort(v.begin(), v.end(), ranks_before);
  }
}

using QueryKey = std::pair<EntityId, RelationId>;
// Candidate lists of one retriever, keyed by query.
using CandidateSet = std::map<QueryKey, CandidateList>;

// Text form: "h r t1:s1 t2:s2 ..." per query, optionally "t:s@source".
inline std::string format_candidates(const CandidateSet& set,
                                     bool with_source = false) {
  std::string out;
  for (const auto& [key, list] : set) {
    out += std::to_string(key.first);
    out += ' ';
    out += std::to_string(key.second);
    for (const auto& c : list.entries) {
      out += ' ';
      out += std::to_string(c.entity);
      out += ':';
      out += format_double(c.score);
      if (with_source) {
        out += '@';
        out += c.source;
      }
    }
    out += '\n';
  }
  return out;
}

inline CandidateSet parse_candidates(std::string_view text,
                                     const std::string& default_source = {}) {
  CandidateSet set;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto fields = detail::split_ws(line);
    auto bad = [&] {
      return Error("malformed candidate record at line " +
                   std::to_string(line_no));
    };
    CandidateList list;
    if (fields.size() < 2 || !parse_number(fields[0], list.head) ||
        !parse_number(fields[1], list.relation)) {
      throw bad();
    }
    for (std::size_t i = 2; i < fields.size(); ++i) {
      auto f = fields[i];
      auto colon = f.find(':');
      if (colon == std::string_view::npos) throw bad();
      auto at = f.find('@', colon);
      Candidate c;
      auto score_part = f.substr(colon + 1, at == std::string_view::npos
                                                ? std::string_view::npos
                                                : at - colon - 1);
      if (!parse_number(f.substr(0, colon), c.entity) ||
          !parse_number(score_part, c.score)) {
        throw bad();
      }
      c.retrieval_score = c.score;
      c.source = at == std::string_view::npos ? default_source
                                              : std::string(f.substr(at + 1));
      list.entries.push_back(std::move(c));
    }
    list.cap = std::max<std::size_t>(list.entries.size(), 1);
    set[{list.head, list.relation}] = std::move(list);
  }
  return set;
}

}  // namespace kgc
