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
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/candidate_list.hpp"
#include "kgc/common.hpp"
#include "kgc/features.hpp"
#include "kgc/graph_store.hpp"
#include "kgc/kge/checkpoint.hpp"
#include "kgc/kge/init.hpp"
#include "kgc/kge/model.hpp"
#include "kgc/kge/train.hpp"
#include "kgc/path_rules.hpp"
#include "kgc/pipeline/artifacts.hpp"
#include "kgc/pipeline/config.hpp"
#include "kgc/pipeline/report.hpp"
#include "kgc/pq.hpp"
#include "kgc/rerank_ensemble.hpp"
#include "kgc/retrieval_ensemble.hpp"
#include "kgc/typing_retrieval.hpp"

namespace kgc::pipeline {

enum class Stage { kIngest, kRetrieve, kFuse, kTrain, kRerank, kEval };

inline constexpr std::array<Stage, 6> kStages = {Stage::kIngest, Stage::kRetrieve, Stage::kFuse,
                                                 Stage::kTrain,  Stage::kRerank,   Stage::kEval};

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kRetrieve: return "retrieve";
    case Stage::kFuse: return "fuse";
    case Stage::kTrain: return "train";
    case Stage::kRerank: return "rerank";
    case Stage::kEval: return "eval";
  }
  return "?";
}

inline Stage parse_stage(std::string_view name) {
  for (auto s : kStages) {
    if (stage_name(s) == name) return s;
  }
  throw Error("unknown stage '" + std::string(name) + "'");
}

// Direct inputs.
inline std::vector<Stage> stage_inputs(Stage s) {
  switch (s) {
    case Stage::kIngest: return {};
    case Stage::kRetrieve: return {Stage::kIngest};
    case Stage::kFuse: return {Stage::kRetrieve};
    case Stage::kTrain: return {Stage::kIngest};
    case Stage::kRerank: return {Stage::kFuse, Stage::kTrain};
    case Stage::kEval: return {Stage::kRerank};
  }
  return {};
}

inline bool depends_on(Stage s, Stage dep) {
  for (auto in : stage_inputs(s)) {
    if (in == dep || depends_on(in, dep)) return true;
  }
  return false;
}

struct StageContext {
  PipelineConfig config;
  std::filesystem::path stage_dir;
  std::ostream* log = nullptr;

  std::filesystem::path dir(Stage s) const { return stage_dir / std::string(stage_name(s)); }
  std::filesystem::path file(Stage s, const std::string& name) const { return dir(s) / name; }

  void info(const std::string& msg) const {
    if (log) *log << "[kgc] " << msg << '\n' << std::flush;
  }
};

enum class StageStatus { kMissing, kStale, kComplete };

inline StageStatus stage_status(const StageContext& ctx, Stage s) {
  auto m = load_manifest(ctx.dir(s));
  if (!m || m->stage != stage_name(s) || !outputs_intact(ctx.dir(s), *m)) {
    return StageStatus::kMissing;
  }
  return m->config_hash == ctx.config.hash ? StageStatus::kComplete : StageStatus::kStale;
}

// Names the first incomplete upstream stage in pipeline order.
inline void require_upstream(const StageContext& ctx, Stage s) {
  for (auto dep : kStages) {
    if (!depends_on(s, dep)) continue;
    auto st = stage_status(ctx, dep);
    if (st == StageStatus::kMissing) {
      throw Error("requires stage: " + std::string(stage_name(dep)));
    }
    if (st == StageStatus::kStale) {
      throw Error("requires stage: " + std::string(stage_name(dep)) +
                  " (its artifacts come from a different config)");
    }
  }
}

namespace detail {

inline void hash_file_if_set(Fnv1a& h, const std::filesystem::path& p) {
  h.update(p.string()).update(std::string_view("\0", 1));
  if (!p.empty()) h.update(read_file(p));
}

}  // namespace detail

// Config hash, dataset contents and the manifests of the direct inputs.
inline std::uint64_t stage_input_hash(const StageContext& ctx, Stage s) {
  Fnv1a h;
  h.update(stage_name(s)).update(hex64(ctx.config.hash));
  const auto& d = ctx.config.dataset;
  for (const auto* p : {&d.triples, &d.entity_vocab, &d.relation_vocab, &d.entity_features,
                        &d.relation_features, &ctx.config.retrieval.pie.upsample_weights}) {
    detail::hash_file_if_set(h, *p);
  }
  for (auto dep : stage_inputs(s)) h.update(read_file(ctx.dir(dep) / kManifestName));
  return h.digest();
}


struct IngestData {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::vector<Triple> train;
  std::vector<Triple> dev;

  KnowledgeGraph train_graph() const {
    return KnowledgeGraph::build(train, num_entities, num_relations);
  }
};

inline IngestData load_ingest(const StageContext& ctx) {
  const auto graph_path = ctx.file(Stage::kIngest, "graph.json");
  auto g = nlohmann::json::parse(read_file(graph_path));
  if (g.value("config", "") != hex64(ctx.config.hash)) {
    throw Error(graph_path.string() + " was produced by a different config");
  }
  IngestData d;
  d.num_entities = g.at("num_entities").get<std::size_t>();
  d.num_relations = g.at("num_relations").get<std::size_t>();
  for (auto [name, out] : {std::pair{"train.txt", &d.train}, std::pair{"dev.txt", &d.dev}}) {
    auto path = ctx.file(Stage::kIngest, name);
    auto text = read_file(path);
    *out = parse_triple_text(strip_header(text, path, ctx.config.hash), d.num_entities,
                             d.num_relations);
  }
  return d;
}

inline CandidateSet load_candidates(const StageContext& ctx, Stage s, const std::string& tag,
                                    const std::string& file) {
  auto path = ctx.file(s, file);
  auto text = read_file(path);
  return parse_candidates(strip_header(text, path, ctx.config.hash), tag);
}

inline ScoreFile load_scores(const StageContext& ctx, const std::string& tag) {
  auto path = ctx.file(Stage::kRerank, tag + ".scores");
  auto text = read_file(path);
  return parse_scores(strip_header(text, path, ctx.config.hash), tag);
}

// Retrieval model tags in the order they were written.
inline std::vector<std::string> retriever_tags(const StageContext& ctx) {
  auto path = ctx.file(Stage::kRetrieve, "retrieval.tsv");
  auto rows = read_tsv(path, ctx.config.hash);
  std::vector<std::string> tags;
  for (std::size_t i = 1; i < rows.size(); ++i) tags.push_back(rows[i].at(0));
  return tags;
}

inline std::shared_ptr<const FeatureMatrix> load_entity_features(const PipelineConfig& c) {
  if (c.dataset.entity_features.empty()) return nullptr;
  return std::make_shared<const FeatureMatrix>(
      load_features(c.dataset.entity_features, FeatureKind::kEntity));
}

// Feature rows a projected model reads at scoring time. The same matrix
// must be supplied when training and when reloading the checkpoint.
inline std::shared_ptr<const FeatureMatrix> projection_features(
    const ModelVariant& v, const KnowledgeGraph& kg,
    const std::shared_ptr<const FeatureMatrix>& raw) {
  if (!v.projection) return nullptr;
  if (!raw) throw Error("model " + v.tag + " needs entity features");
  if (v.init_mode == kge::InitMode::kFeature) return raw;
  return std::make_shared<const FeatureMatrix>(kge::neighbor_enhanced_init(kg, *raw));
}

// Re-ranking queries: one per dev triple, over the fused candidates of its
// (h, r) with the other known true tails filtered out.
inline std::vector<RerankQuery> rerank_queries(const IngestData& data,
                                               const CandidateSet& fused) {
  std::map<QueryKey, std::set<EntityId>> known;
  for (const auto* split : {&data.train, &data.dev}) {
    for (const auto& tr : *split) known[{tr.h, tr.r}].insert(tr.t);
  }
  std::vector<RerankQuery> out;
  for (const auto& tr : data.dev) {
    RerankQuery q{tr.h, tr.r, tr.t, {}};
    if (const auto* list = find_list(fused, {tr.h, tr.r})) {
      const auto& truth = known[{tr.h, tr.r}];
      for (const auto& c : list->entries) {
        if (c.entity == tr.t || !truth.contains(c.entity)) q.candidates.push_back(c.entity);
      }
    }
    out.push_back(std::move(q));
  }
  return out;
}

inline std::vector<ModelScoreSet> normalize_all(const std::vector<ModelScoreSet>& raw,
                                                std::span<const RerankQuery> queries,
                                                Normalization mode) {
  std::vector<ModelScoreSet> out;
  for (const auto& s : raw) out.push_back(normalize_scores(s, queries, mode));
  return out;
}

// Dev MRR@10 of the weighted mixture described by an EnsembleSpec.
inline double ensemble_mrr(const EnsembleSpec& spec, const std::vector<ModelScoreSet>& raw,
                           std::span<const RerankQuery> queries) {
  std::vector<ModelScoreSet> chosen;
  for (const auto& tag : spec.models) {
    auto it = std::find_if(raw.begin(), raw.end(),
                           [&](const ModelScoreSet& s) { return s.tag == tag; });
    if (it == raw.end()) throw Error("ensemble references unknown model " + tag);
    chosen.push_back(normalize_scores(*it, queries, spec.normalization));
  }
  std::vector<const ModelScoreSet*> ptrs;
  for (const auto& s : chosen) ptrs.push_back(&s);
  return mrr_at_10(queries, mix_scores(ptrs, spec.weights));
}


namespace detail {

inline bool in_dev_split(const Triple& tr, std::uint64_t seed, double ratio) {
  auto h = Fnv1a().update_pod(tr.h).update_pod(tr.r).update_pod(seed).digest();
  return static_cast<double>(h >> 11) * 0x1.0p-53 < ratio;
}

inline std::size_t vocab_size(const std::filesystem::path& p) {
  return p.empty() ? 0 : read_vocab(p).size();
}

inline void run_ingest(const StageContext& ctx, StageWriter& w) {
  const auto& c = ctx.config;
  const auto& d = c.dataset;
  constexpr std::size_t kIdLimit = std::numeric_limits<EntityId>::max();
  std::size_t ne = d.num_entities ? d.num_entities : vocab_size(d.entity_vocab);
  std::size_t nr = d.num_relations ? d.num_relations : vocab_size(d.relation_vocab);
  auto triples = read_triples(d.triples, ne ? ne : kIdLimit, nr ? nr : kIdLimit);
  if (ne == 0 || nr == 0) {
    std::size_t max_e = 0, max_r = 0;
    for (const auto& tr : triples) {
      max_e = std::max<std::size_t>({max_e, tr.h, tr.t});
      max_r = std::max<std::size_t>(max_r, tr.r);
    }
    if (ne == 0) ne = max_e + 1;
    if (nr == 0) nr = max_r + 1;
  }
  for (auto [path, rows, kind] :
       {std::tuple{&d.entity_features, ne, FeatureKind::kEntity},
        std::tuple{&d.relation_features, nr, FeatureKind::kRelation}}) {
    if (path->empty()) continue;
    auto f = load_features(*path, kind);
    if (f.rows != rows) {
      throw Error(path->string() + " has " + std::to_string(f.rows) + " rows, expected " +
                  std::to_string(rows));
    }
  }

  std::vector<Triple> train, dev;
  for (const auto& tr : triples) {
    (in_dev_split(tr, c.seed, c.ensemble.dev_ratio) ? dev : train).push_back(tr);
  }
  std::sort(train.begin(), train.end());
  std::sort(dev.begin(), dev.end());
  dev.erase(std::unique(dev.begin(), dev.end()), dev.end());
  if (dev.empty()) throw Error("the dev split is empty; raise ensemble.dev_ratio");
  if (train.empty()) throw Error("the training split is empty; lower ensemble.dev_ratio");

  EvalSplit split{dev};
  nlohmann::json g;
  g["format"] = kFormatVersion;
  g["config"] = hex64(c.hash);
  g["num_entities"] = ne;
  g["num_relations"] = nr;
  g["input_triples"] = triples.size();
  g["train_triples"] = train.size();
  g["dev_triples"] = dev.size();
  g["dev_queries"] = split.unique_queries().size();
  w.write_text("train.txt", format_triples(train));
  w.write_text("dev.txt", format_triples(dev));
  w.write("graph.json", g.dump(2) + "\n");
  ctx.info("ingest: " + std::to_string(train.size()) + " train / " + std::to_string(dev.size()) +
           " dev triples, " + std::to_string(ne) + " entities, " + std::to_string(nr) +
           " relations");
}

inline void run_retrieve(const StageContext& ctx, StageWriter& w) {
  const auto& c = ctx.config;
  const auto& rc = c.retrieval;
  auto data = load_ingest(ctx);
  auto kg = data.train_graph();
  EvalSplit dev{data.dev};
  const auto queries = dev.unique_queries();
  std::vector<std::pair<std::string, CandidateSet>> models;

  if (!rc.rules.empty()) {
    auto counts = build_count_tables(kg);
    for (auto rule : rc.rules) {
      CandidateSet set;
      for (const auto& q : queries) {
        set[q] = retrieve_by_rule(counts, rule, q.first, q.second, rc.cap);
      }
      models.emplace_back(std::string(rule_name(rule)), std::move(set));
    }
  }

  std::string typing = "model_tag\tsample_size\tmask_mrr\tevaluated\tskipped\n";
  if (rc.pie.enabled) {
    auto priors = estimate_priors(kg);
    std::vector<double> upsample;
    if (!rc.pie.upsample_weights.empty()) {
      upsample = read_upsample_weights(rc.pie.upsample_weights, kg.num_relations());
    }
    for (auto s : rc.pie.sample_sizes) {
      const auto tag = "PIE_" + std::to_string(s);
      auto model = fit_typing_model(kg, s, upsample, rc.pie.smoothing,
                                    kgc::detail::mix_seed(c.seed, fnv1a(tag)));
      CandidateSet set;
      for (const auto& q : queries) {
        set[q] = pie_retrieve(model, priors, kg, q.first, q.second, rc.cap, rc.pie.context_hops,
                              tag);
      }
      auto mask = mask_and_score(model, kg, rc.pie.mask_fraction,
                                 kgc::detail::mix_seed(c.seed, fnv1a(tag + "/mask")));
      typing += tag + '\t' + std::to_string(s) + '\t' + format_double(mask.mean_reciprocal_rank) +
                '\t' + std::to_string(mask.evaluated) + '\t' + std::to_string(mask.skipped) + '\n';
      models.emplace_back(tag, std::move(set));
    }
  }

  if (rc.semantic.enabled) {
    auto ef = load_features(c.dataset.entity_features, FeatureKind::kEntity);
    auto rf = load_features(c.dataset.relation_features, FeatureKind::kRelation);
    const std::string tag = "Semantic";
    auto index = train_pq(ef, rc.semantic.num_subspaces, rc.semantic.centroids,
                          rc.semantic.iterations, kgc::detail::mix_seed(c.seed, fnv1a(tag)));
    std::map<RelationId, CandidateList> by_relation;
    CandidateSet set;
    for (const auto& q : queries) {
      auto it = by_relation.find(q.second);
      if (it == by_relation.end()) {
        it = by_relation
                 .emplace(q.second, semantic_retrieve(index, rf, q.second, rc.semantic.k, tag))
                 .first;
      }
      auto list = it->second;
      list.head = q.first;
      set[q] = std::move(list);
    }
    models.emplace_back(tag, std::move(set));
  }

  std::vector<RetrievalModelReport> reports;
  for (const auto& [tag, set] : models) {
    w.write_text(tag + ".cand", format_candidates(set));
    reports.push_back({tag, recall_at_cap(set, dev), model_accuracy(set, dev), 0});
  }
  priority_order(reports);
  w.write_text("retrieval.tsv", format_retrieval_report(reports));
  w.write_text("typing.tsv", typing);
  ctx.info("retrieve: " + std::to_string(models.size()) + " retrievers over " +
           std::to_string(queries.size()) + " dev queries");
}

inline void run_fuse(const StageContext& ctx, StageWriter& w) {
  const auto& c = ctx.config;
  auto data = load_ingest(ctx);
  EvalSplit dev{data.dev};
  std::vector<RetrievalModelReport> reports;
  auto rows = read_tsv(ctx.file(Stage::kRetrieve, "retrieval.tsv"), c.hash);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    RetrievalModelReport r;
    r.model_tag = rows[i].at(0);
    r.accuracy = tsv_number(rows[i].at(2), "retrieval.tsv");
    reports.push_back(r);
  }
  const auto order = priority_order(reports);
  std::vector<CandidateSet> sets;
  for (const auto& tag : order) sets.push_back(load_candidates(ctx, Stage::kRetrieve, tag, tag + ".cand"));

  CandidateSet fused, voted;
  for (const auto& q : dev.unique_queries()) {
    std::vector<CandidateList> lists;
    for (const auto& set : sets) {
      const auto* l = find_list(set, q);
      CandidateList list = l ? *l : CandidateList{};
      list.head = q.first;
      list.relation = q.second;
      lists.push_back(std::move(list));
    }
    fused[q] = priority_infill(lists, c.ensemble.n);
    if (c.ensemble.majority_vote) voted[q] = majority_vote(lists, c.ensemble.n);
  }
  std::string priority;
  for (const auto& tag : order) priority += tag + '\n';
  std::string report = "method\trecall\taccuracy\n";
  report += "priority_infill\t" + format_double(recall_at_cap(fused, dev)) + '\t' +
            format_double(model_accuracy(fused, dev)) + '\n';
  if (c.ensemble.majority_vote) {
    report += "majority_vote\t" + format_double(recall_at_cap(voted, dev)) + '\t' +
              format_double(model_accuracy(voted, dev)) + '\n';
  }
  w.write_text("priority.txt", priority);
  w.write_text("fused.cand", format_candidates(fused, true));
  w.write_text("fusion.tsv", report);
  ctx.info("fuse: priority " + [&] {
    std::string s;
    for (const auto& t : order) s += (s.empty() ? "" : " > ") + t;
    return s;
  }());
}

inline void run_train(const StageContext& ctx, StageWriter& w) {
  const auto& c = ctx.config;
  auto data = load_ingest(ctx);
  auto kg = data.train_graph();
  std::shared_ptr<const FeatureMatrix> raw;
  std::string summary = "model_tag\tkind\tdim\tsteps\tfinal_loss\n";
  for (const auto& v : c.models) {
    if (v.init_mode != kge::InitMode::kRandom && !raw) raw = load_entity_features(c);
    kge::EmbeddingInit init{v.init_mode, raw, v.projection, v.activation};
    auto model = kge::make_model<float>(v.shape, kg, init, kgc::detail::mix_seed(v.train.seed, 0));
    auto result = kge::train(model, kg, v.train);
    std::string loss = "step\tloss\n";
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
      loss += std::to_string(i) + '\t' + format_double(result.loss_trace[i]) + '\n';
    }
    w.write(v.tag + ".kgck", kge::encode_checkpoint(model, c.hash));
    w.write_text(v.tag + ".loss", loss);
    const double last = result.loss_trace.empty() ? 0.0 : result.loss_trace.back();
    summary += v.tag + '\t' + std::string(kge::kind_name(v.shape.kind)) + '\t' +
               std::to_string(v.shape.dim) + '\t' + std::to_string(result.loss_trace.size()) +
               '\t' + format_double(last) + '\n';
    ctx.info("train: " + v.tag + " final loss " + format_fixed(last, 4));
  }
  w.write_text("train.tsv", summary);
}

inline void run_rerank(const StageContext& ctx, StageWriter& w) {
  const auto& c = ctx.config;
  auto data = load_ingest(ctx);
  auto kg = data.train_graph();
  auto fused = load_candidates(ctx, Stage::kFuse, "fused", "fused.cand");
  const auto queries = rerank_queries(data, fused);
  std::shared_ptr<const FeatureMatrix> raw;

  std::vector<ModelScoreSet> raw_scores;
  std::string table = "model_tag\tmrr10\n";
  for (const auto& v : c.models) {
    if (v.projection && !raw) raw = load_entity_features(c);
    kge::CheckpointInfo info;
    auto model = kge::load_checkpoint(ctx.file(Stage::kTrain, v.tag + ".kgck"),
                                      projection_features(v, kg, raw), &info);
    if (info.config_hash != c.hash) throw Error(v.tag + ".kgck was produced by a different config");
    ModelScoreSet set{v.tag, {}};
    for (const auto& q : queries) {
      auto s = kge::score_tails(model, q.head, q.relation, std::span<const EntityId>(q.candidates));
      set.scores.emplace_back(s.begin(), s.end());
    }
    const double mrr = mrr_at_10(queries, set.scores);
    w.write_text(v.tag + ".scores", format_scores(queries, set));
    table += v.tag + '\t' + format_double(mrr) + '\n';
    ctx.info("rerank: " + v.tag + " dev MRR@10 " + format_fixed(mrr, 4));
    raw_scores.push_back(std::move(set));
  }

  const auto norm = normalize_all(raw_scores, queries, c.rerank.normalization);
  auto greedy = greedy_select(norm, queries);
  std::string trace = "step\tmodel_tag\tmrr10\n";
  for (std::size_t i = 0; i < greedy.selected.size(); ++i) {
    trace += std::to_string(i + 1) + '\t' + greedy.selected[i] + '\t' +
             format_double(greedy.trace[i]) + '\n';
  }
  auto selected = greedy.selected;
  if (selected.size() > c.rerank.max_models) selected.resize(c.rerank.max_models);
  std::vector<ModelScoreSet> chosen;
  for (const auto& tag : selected) {
    chosen.push_back(*std::find_if(norm.begin(), norm.end(),
                                   [&](const ModelScoreSet& s) { return s.tag == tag; }));
  }
  GridOptions opt{c.rerank.grid_step, c.rerank.grid_budget, c.rerank.max_models, false};
  auto grid = grid_search_weights(chosen, queries, c.rerank.normalization, opt);
  table += "ensemble\t" + format_double(grid.mrr) + '\n';
  ctx.info("rerank: ensemble of " + std::to_string(chosen.size()) + " models, dev MRR@10 " +
           format_fixed(grid.mrr, 4));

  if (c.rerank.direct_ensemble && norm.size() >= 2) {
    GridOptions direct = opt;
    direct.strictly_positive = true;
    try {
      auto all = grid_search_weights(norm, queries, c.rerank.normalization, direct);
      table += "direct_ensemble\t" + format_double(all.mrr) + '\n';
      w.write_text("direct.spec", format_ensemble_spec(all.spec));
    } catch (const Error& e) {
      ctx.info(std::string("rerank: direct ensemble skipped: ") + e.what());
    }
  }

  ModelScoreSet mixed{"ensemble", {}};
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto list = ensemble_predict(grid.spec, raw_scores, queries, q);
    std::vector<double> s(queries[q].candidates.size());
    for (const auto& e : list.entries) {
      auto pos = std::find(queries[q].candidates.begin(), queries[q].candidates.end(), e.entity);
      s[static_cast<std::size_t>(pos - queries[q].candidates.begin())] = e.score;
    }
    mixed.scores.push_back(std::move(s));
  }
  w.write_text("ensemble.scores", format_scores(queries, mixed));
  w.write_text("ensemble.spec", format_ensemble_spec(grid.spec));
  w.write_text("greedy.tsv", trace);
  w.write_text("rerank.tsv", table);
}

inline void check_same(double stored, double recomputed, const std::string& what) {
  if (stored != recomputed) {
    throw Error("artifact mismatch: " + what + " is " + format_double(stored) +
                " on disk but recomputes to " + format_double(recomputed));
  }
}

// Every table is recomputed from the per-query artifacts and checked
// against the values the producing stage recorded.
inline RunReport build_report(const StageContext& ctx) {
  const auto& c = ctx.config;
  auto data = load_ingest(ctx);
  EvalSplit dev{data.dev};
  RunReport rep;
  rep.config_hash = c.hash;
  rep.num_entities = data.num_entities;
  rep.num_relations = data.num_relations;
  rep.train_triples = data.train.size();
  rep.dev_triples = data.dev.size();
  rep.dev_queries = dev.unique_queries().size();

  auto rrows = read_tsv(ctx.file(Stage::kRetrieve, "retrieval.tsv"), c.hash);
  std::vector<RetrievalModelReport> reports;
  for (std::size_t i = 1; i < rrows.size(); ++i) {
    const auto& tag = rrows[i].at(0);
    auto set = load_candidates(ctx, Stage::kRetrieve, tag, tag + ".cand");
    RetrievalModelReport r{tag, recall_at_cap(set, dev), model_accuracy(set, dev), 0};
    check_same(tsv_number(rrows[i].at(1), "retrieval.tsv"), r.recall, tag + " recall");
    check_same(tsv_number(rrows[i].at(2), "retrieval.tsv"), r.accuracy, tag + " accuracy");
    reports.push_back(r);
  }
  priority_order(reports);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    check_same(tsv_number(rrows[i + 1].at(3), "retrieval.tsv"),
               static_cast<double>(reports[i].priority_rank), reports[i].model_tag + " priority");
    rep.retrieval.push_back({reports[i].model_tag, reports[i].recall, reports[i].accuracy,
                             reports[i].priority_rank});
  }

  auto trows = read_tsv(ctx.file(Stage::kRetrieve, "typing.tsv"), c.hash);
  for (std::size_t i = 1; i < trows.size(); ++i) {
    rep.typing.push_back({trows[i].at(0),
                          static_cast<std::size_t>(tsv_number(trows[i].at(1), "typing.tsv")),
                          tsv_number(trows[i].at(2), "typing.tsv"),
                          static_cast<std::size_t>(tsv_number(trows[i].at(3), "typing.tsv")),
                          static_cast<std::size_t>(tsv_number(trows[i].at(4), "typing.tsv"))});
  }

  auto fused = load_candidates(ctx, Stage::kFuse, "fused", "fused.cand");
  auto frows = read_tsv(ctx.file(Stage::kFuse, "fusion.tsv"), c.hash);
  for (std::size_t i = 1; i < frows.size(); ++i) {
    FusionRow f{frows[i].at(0), tsv_number(frows[i].at(1), "fusion.tsv"),
                tsv_number(frows[i].at(2), "fusion.tsv")};
    if (f.method == "priority_infill") {
      check_same(f.recall, recall_at_cap(fused, dev), "fused recall");
      check_same(f.accuracy, model_accuracy(fused, dev), "fused accuracy");
    }
    rep.fusion.push_back(f);
  }
  rep.fused_n = c.ensemble.n;

  const auto queries = rerank_queries(data, fused);
  auto krows = read_tsv(ctx.file(Stage::kRerank, "rerank.tsv"), c.hash);
  std::map<std::string, double> stored;
  for (std::size_t i = 1; i < krows.size(); ++i) {
    stored[krows[i].at(0)] = tsv_number(krows[i].at(1), "rerank.tsv");
  }
  std::vector<ModelScoreSet> raw_scores;
  for (const auto& v : c.models) {
    auto f = load_scores(ctx, v.tag);
    if (f.queries.size() != queries.size()) throw Error(v.tag + ".scores does not match the dev split");
    for (std::size_t q = 0; q < queries.size(); ++q) {
      if (f.queries[q].head != queries[q].head || f.queries[q].relation != queries[q].relation ||
          f.queries[q].answer != queries[q].answer ||
          f.queries[q].candidates != queries[q].candidates) {
        throw Error(v.tag + ".scores does not match the fused candidates");
      }
    }
    const double mrr = mrr_at_10(queries, f.scores.scores);
    check_same(stored.at(v.tag), mrr, v.tag + " MRR@10");
    rep.kge.push_back({v.tag, std::string(kge::kind_name(v.shape.kind)), mrr});
    raw_scores.push_back(std::move(f.scores));
  }

  auto spec_path = ctx.file(Stage::kRerank, "ensemble.spec");
  auto spec_text = read_file(spec_path);
  rep.ensemble = parse_ensemble_spec(strip_header(spec_text, spec_path, c.hash));
  rep.ensemble_mrr = ensemble_mrr(rep.ensemble, raw_scores, queries);
  check_same(stored.at("ensemble"), rep.ensemble_mrr, "ensemble MRR@10");
  auto ens = parse_scores(
      strip_header(read_file(ctx.file(Stage::kRerank, "ensemble.scores")),
                   ctx.file(Stage::kRerank, "ensemble.scores"), c.hash),
      "ensemble");
  check_same(rep.ensemble_mrr, mrr_at_10(queries, ens.scores.scores), "ensemble predictions MRR@10");
  if (auto it = stored.find("direct_ensemble"); it != stored.end()) {
    auto dpath = ctx.file(Stage::kRerank, "direct.spec");
    auto dtext = read_file(dpath);
    auto direct = parse_ensemble_spec(strip_header(dtext, dpath, c.hash));
    rep.direct_ensemble_mrr = ensemble_mrr(direct, raw_scores, queries);
    check_same(it->second, *rep.direct_ensemble_mrr, "direct ensemble MRR@10");
  }

  auto grows = read_tsv(ctx.file(Stage::kRerank, "greedy.tsv"), c.hash);
  for (std::size_t i = 1; i < grows.size(); ++i) {
    rep.greedy_trace.push_back({grows[i].at(1), tsv_number(grows[i].at(2), "greedy.tsv")});
  }
  return rep;
}

inline void run_eval(const StageContext& ctx, StageWriter& w) {
  auto rep = build_report(ctx);
  w.write("report.json", rep.to_json().dump(2) + "\n");
  w.write_text("report.txt", rep.render());
  ctx.info("eval: ensemble dev MRR@10 " + format_fixed(rep.ensemble_mrr, 4));
}

}  // namespace detail

// Runs one stage. Returns false when the stage was already complete for the
// same inputs and nothing was rewritten.
inline bool run_stage(const StageContext& ctx, Stage s) {
  require_upstream(ctx, s);
  const auto input = stage_input_hash(ctx, s);
  const auto dir = ctx.dir(s);
  if (auto m = load_manifest(dir); m && m->stage == stage_name(s) &&
                                   m->config_hash == ctx.config.hash &&
                                   m->input_hash == input && outputs_intact(dir, *m)) {
    ctx.info(std::string(stage_name(s)) + ": up to date, skipping");
    return false;
  }
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir / kManifestName);
  StageWriter w(dir, Manifest{std::string(stage_name(s)), ctx.config.hash, input, {}});
  switch (s) {
    case Stage::kIngest: detail::run_ingest(ctx, w); break;
    case Stage::kRetrieve: detail::run_retrieve(ctx, w); break;
    case Stage::kFuse: detail::run_fuse(ctx, w); break;
    case Stage::kTrain: detail::run_train(ctx, w); break;
    case Stage::kRerank: detail::run_rerank(ctx, w); break;
    case Stage::kEval: detail::run_eval(ctx, w); break;
  }
  w.commit();
  return true;
}

inline void run_all(const StageContext& ctx) {
  for (auto s : kStages) run_stage(ctx, s);
}

}  // namespace kgc::pipeline
