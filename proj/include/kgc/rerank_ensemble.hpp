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
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/candidate_list.hpp"
#include "kgc/common.hpp"
#include "kgc/graph_store.hpp"

namespace kgc {

inline constexpr std::size_t kMrrCutoff = 10;
inline constexpr double kDefaultGridStep = 0.1;
inline constexpr std::size_t kMaxGridModels = 6;
inline constexpr std::size_t kDefaultGridBudget = 1'000'000;

enum class Normalization { kRank, kMinMax };

inline std::string_view normalization_name(Normalization n) {
  return n == Normalization::kRank ? "rank" : "minmax";
}

inline Normalization parse_normalization(std::string_view s) {
  if (s == "rank") return Normalization::kRank;
  if (s == "minmax") return Normalization::kMinMax;
  throw Error("unknown normalization '" + std::string(s) + "'");
}

// One dev triple to re-rank: its shared candidate tails and the true tail.
struct RerankQuery {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId answer = 0;
  std::vector<EntityId> candidates;
};

// Scores of one model, aligned with RerankQuery::candidates.
struct ModelScoreSet {
  std::string tag;
  std::vector<std::vector<double>> scores;
};

struct EnsembleSpec {
  std::vector<std::string> models;
  std::vector<double> weights;
  Normalization normalization = Normalization::kRank;
};

// 1-based rank of `answer` (score descending, ties by ascending id), or 0
// when it is not a candidate.
inline std::size_t answer_rank(std::span<const EntityId> candidates,
                               std::span<const double> scores, EntityId answer) {
  std::size_t pos = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] == answer) {
      pos = i;
      break;
    }
  }
  if (pos == candidates.size()) return 0;
  std::size_t rank = 1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (scores[i] > scores[pos] ||
        (scores[i] == scores[pos] && candidates[i] < answer)) {
      ++rank;
    }
  }
  return rank;
}

inline double reciprocal_rank_at(std::size_t rank, std::size_t cutoff = kMrrCutoff) {
  return (rank == 0 || rank > cutoff) ? 0.0 : 1.0 / static_cast<double>(rank);
}

// Mean over queries of 1/rank when the answer ranks within the top 10.
inline double mrr_at_10(std::span<const CandidateList> ranked,
                        std::span<const EntityId> answers) {
  if (ranked.size() != answers.size()) throw Error("one answer per query is required");
  if (ranked.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    const auto& e = ranked[q].entries;
    for (std::size_t i = 0; i < std::min(e.size(), kMrrCutoff); ++i) {
      if (e[i].entity == answers[q]) {
        sum += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
  }
  return sum / static_cast<double>(ranked.size());
}

inline double mrr_at_10(std::span<const RerankQuery> queries,
                        const std::vector<std::vector<double>>& scores) {
  if (queries.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    sum += reciprocal_rank_at(
        answer_rank(queries[q].candidates, scores[q], queries[q].answer));
  }
  return sum / static_cast<double>(queries.size());
}

inline void check_aligned(std::span<const RerankQuery> queries,
                          const ModelScoreSet& set) {
  if (set.scores.size() != queries.size()) {
    throw Error("model " + set.tag + " does not score every query");
  }
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (set.scores[q].size() != queries[q].candidates.size()) {
      throw Error("model " + set.tag + " score vector misaligned at query " +
                  std::to_string(q));
    }
    for (double s : set.scores[q]) {
      if (!std::isfinite(s)) throw Error("model " + set.tag + " has non-finite scores");
    }
  }
}

// rank: 1/rank per query; minmax: affine map onto [0, 1], constant -> 0.5.
inline ModelScoreSet normalize_scores(const ModelScoreSet& set,
                                      std::span<const RerankQuery> queries,
                                      Normalization mode) {
  check_aligned(queries, set);
  ModelScoreSet out{set.tag, {}};
  out.scores.reserve(set.scores.size());
  for (std::size_t q = 0; q < set.scores.size(); ++q) {
    const auto& s = set.scores[q];
    const auto& c = queries[q].candidates;
    std::vector<double> n(s.size());
    if (mode == Normalization::kRank) {
      std::vector<std::size_t> idx(s.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (s[a] != s[b]) return s[a] > s[b];
        return c[a] < c[b];
      });
      for (std::size_t r = 0; r < idx.size(); ++r) {
        n[idx[r]] = 1.0 / static_cast<double>(r + 1);
      }
    } else if (!s.empty()) {
      auto [lo, hi] = std::minmax_element(s.begin(), s.end());
      for (std::size_t i = 0; i < s.size(); ++i) {
        n[i] = *hi == *lo ? 0.5 : (s[i] - *lo) / (*hi - *lo);
      }
    }
    out.scores.push_back(std::move(n));
  }
  return out;
}

inline std::vector<std::vector<double>> mix_scores(
    std::span<const ModelScoreSet* const> models, std::span<const double> weights) {
  std::vector<std::vector<double>> out(models.front()->scores.size());
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q].assign(models.front()->scores[q].size(), 0.0);
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (weights[m] == 0.0) continue;
      const auto& s = models[m]->scores[q];
      for (std::size_t i = 0; i < s.size(); ++i) out[q][i] += weights[m] * s[i];
    }
  }
  return out;
}

struct GreedyResult {
  std::vector<std::string> selected;
  // Dev MRR@10 after each accepted step; the first entry is the best single.
  std::vector<double> trace;
};

// Forward selection with equal weights. `models` should already be
// normalized. Ties go to the lexicographically smaller tag.
inline GreedyResult greedy_select(std::span<const ModelScoreSet> models,
                                  std::span<const RerankQuery> queries) {
  if (models.empty()) throw Error("greedy selection needs at least one model");
  for (const auto& m : models) check_aligned(queries, m);
  std::vector<std::size_t> order(models.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return models[a].tag < models[b].tag; });

  auto evaluate = [&](const std::vector<std::size_t>& chosen) {
    std::vector<const ModelScoreSet*> ptrs;
    for (auto i : chosen) ptrs.push_back(&models[i]);
    std::vector<double> w(chosen.size(), 1.0 / static_cast<double>(chosen.size()));
    return mrr_at_10(queries, mix_scores(ptrs, w));
  };

  GreedyResult result;
  std::vector<std::size_t> chosen;
  std::vector<bool> used(models.size(), false);
  double current = -1.0;
  while (true) {
    double best = current;
    std::size_t best_i = models.size();
    for (auto i : order) {
      if (used[i]) continue;
      auto trial = chosen;
      trial.push_back(i);
      double v = evaluate(trial);
      if (v > best) {
        best = v;
        best_i = i;
      }
    }
    if (best_i == models.size()) break;
    chosen.push_back(best_i);
    used[best_i] = true;
    current = best;
    result.selected.push_back(models[best_i].tag);
    result.trace.push_back(best);
  }
  return result;
}

struct GridOptions {
  double step = kDefaultGridStep;
  std::size_t budget = kDefaultGridBudget;
  std::size_t max_models = kMaxGridModels;
  // Restricts the grid to interior points (every weight > 0).
  bool strictly_positive = false;
};

struct GridResult {
  EnsembleSpec spec;
  double mrr = 0.0;
  std::size_t evaluated = 0;
};

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return r;
}

}  // namespace detail

// Exhaustive search over the weight simplex at resolution `step`, visiting
// weight vectors in lexicographic order and keeping the first maximum.
// `models` must already be normalized with `normalization`.
inline GridResult grid_search_weights(std::span<const ModelScoreSet> models,
                                      std::span<const RerankQuery> queries,
                                      Normalization normalization,
                                      const GridOptions& opt = {}) {
  const auto m = models.size();
  if (m == 0 || m > opt.max_models) {
    throw Error("grid search takes between 1 and " + std::to_string(opt.max_models) +
                " models, got " + std::to_string(m));
  }
  if (!(opt.step > 0.0) || opt.step > 1.0) throw Error("grid step must lie in (0, 1]");
  const auto units = static_cast<std::size_t>(std::llround(1.0 / opt.step));
  if (std::abs(static_cast<double>(units) * opt.step - 1.0) > 1e-9) {
    throw Error("grid step must divide 1");
  }
  if (opt.strictly_positive && units < m) {
    throw Error("grid step too coarse for strictly positive weights");
  }
  const double points = opt.strictly_positive
                            ? detail::binomial(units - 1, m - 1)
                            : detail::binomial(units + m - 1, m - 1);
  if (points > static_cast<double>(opt.budget)) {
    throw Error("weight grid has " + format_double(points) +
                " points, over the budget of " + std::to_string(opt.budget) +
                "; use a coarser step");
  }
  for (const auto& s : models) check_aligned(queries, s);
  std::vector<const ModelScoreSet*> ptrs;
  for (const auto& s : models) ptrs.push_back(&s);

  const std::size_t min_units = opt.strictly_positive ? 1 : 0;
  GridResult best;
  best.mrr = -1.0;
  std::vector<std::size_t> k(m, 0);
  std::vector<double> w(m);
  // Recursive enumeration of compositions of `units` into m parts.
  auto visit = [&](auto&& self, std::size_t pos, std::size_t left) -> void {
    if (pos + 1 == m) {
      if (left < min_units) return;
      k[pos] = left;
      for (std::size_t i = 0; i < m; ++i) {
        w[i] = static_cast<double>(k[i]) / static_cast<double>(units);
      }
      double v = mrr_at_10(queries, mix_scores(ptrs, w));
      ++best.evaluated;
      if (v > best.mrr) {
        best.mrr = v;
        best.spec.weights = w;
      }
      return;
    }
    for (std::size_t x = min_units; x + min_units * (m - pos - 1) <= left; ++x) {
      k[pos] = x;
      self(self, pos + 1, left - x);
    }
  };
  visit(visit, 0, units);
  for (const auto& s : models) best.spec.models.push_back(s.tag);
  best.spec.normalization = normalization;
  return best;
}

// Weighted sum of normalized scores for query q, ranked.
inline CandidateList ensemble_predict(const EnsembleSpec& spec,
                                      std::span<const ModelScoreSet> raw_models,
                                      std::span<const RerankQuery> queries,
                                      std::size_t q) {
  if (spec.models.size() != spec.weights.size()) throw Error("malformed ensemble spec");
  const auto& query = queries[q];
  CandidateList out;
  out.head = query.head;
  out.relation = query.relation;
  out.cap = std::max<std::size_t>(query.candidates.size(), 1);
  std::vector<double> mixed(query.candidates.size(), 0.0);
  for (std::size_t i = 0; i < spec.models.size(); ++i) {
    auto it = std::find_if(raw_models.begin(), raw_models.end(),
                           [&](const ModelScoreSet& s) { return s.tag == spec.models[i]; });
    if (it == raw_models.end()) throw Error("ensemble references unknown model " + spec.models[i]);
    if (spec.weights[i] == 0.0) continue;
    ModelScoreSet one{it->tag, {it->scores.at(q)}};
    auto norm = normalize_scores(one, queries.subspan(q, 1), spec.normalization);
    for (std::size_t c = 0; c < mixed.size(); ++c) mixed[c] += spec.weights[i] * norm.scores[0][c];
  }
  for (std::size_t c = 0; c < mixed.size(); ++c) {
    out.entries.push_back({query.candidates[c], mixed[c], mixed[c], "ensemble"});
  }
  sort_and_truncate(out);
  return out;
}

// "normalization <mode>" then one "<model_tag> <weight>" line per model.
inline std::string format_ensemble_spec(const EnsembleSpec& spec) {
  std::string out = "normalization " + std::string(normalization_name(spec.normalization)) + "\n";
  for (std::size_t i = 0; i < spec.models.size(); ++i) {
    out += spec.models[i] + ' ' + format_double(spec.weights[i]) + '\n';
  }
  return out;
}

inline EnsembleSpec parse_ensemble_spec(std::string_view text) {
  EnsembleSpec spec;
  bool have_norm = false;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto f = detail::split_ws(line);
    if (f.size() != 2) throw Error("malformed ensemble spec at line " + std::to_string(line_no));
    if (f[0] == "normalization") {
      spec.normalization = parse_normalization(f[1]);
      have_norm = true;
      continue;
    }
    double w = 0.0;
    if (!parse_number(f[1], w) || w < 0.0) {
      throw Error("bad weight at line " + std::to_string(line_no));
    }
    spec.models.emplace_back(f[0]);
    spec.weights.push_back(w);
  }
  if (!have_norm) throw Error("ensemble spec lacks a normalization line");
  double sum = std::accumulate(spec.weights.begin(), spec.weights.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw Error("ensemble weights must sum to 1");
  return spec;
}

}  // namespace kgc
