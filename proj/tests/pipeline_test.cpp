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

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kgc/pipeline/config.hpp"
#include "kgc/pipeline/report.hpp"
#include "kgc/pipeline/stages.hpp"
#include "pipeline_util.hpp"
#include "test_util.hpp"

namespace kgc::pipeline {
namespace {

using kgc::testing::TempDir;
using kgc::testing::toy_config_json;
using kgc::testing::toy_context;
using kgc::testing::toy_dir;
using kgc::testing::write_text;
using nlohmann::json;

PipelineConfig parse(const json& j, const ConfigOverrides& ov = {}) {
  return parse_config(j.dump(), toy_dir(), ov);
}

json minimal_config() {
  return {{"dataset",
           {{"triples", "triples.txt"},
            {"entity_features", "entity_features.fmat"},
            {"relation_features", "relation_features.fmat"}}}};
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(Config, MinimalConfigTakesDefaults) {
  auto c = parse(minimal_config());
  EXPECT_EQ(c.retrieval.cap, 20000u);
  EXPECT_EQ(c.ensemble.n, 20000u);
  EXPECT_EQ(c.retrieval.semantic.k, 1000u);
  EXPECT_EQ(c.retrieval.semantic.num_subspaces, 64u);
  EXPECT_EQ(c.retrieval.semantic.centroids, 64u);
  EXPECT_DOUBLE_EQ(c.rerank.grid_step, 0.1);
  EXPECT_EQ(c.rerank.normalization, Normalization::kRank);
  EXPECT_EQ(c.retrieval.rules.size(), 11u);
  EXPECT_EQ(c.retrieval.pie.sample_sizes, (std::vector<std::size_t>{6, 10}));
  EXPECT_DOUBLE_EQ(c.retrieval.pie.smoothing, 1e-6);
  EXPECT_EQ(c.retrieval.pie.context_hops, 3u);
  EXPECT_EQ(c.retrieval.pie.batch_size, 512u);
  EXPECT_DOUBLE_EQ(c.retrieval.pie.learning_rate, 2e-3);
  EXPECT_EQ(c.retrieval.pie.hidden_dim, 1024u);
  EXPECT_TRUE(std::filesystem::equivalent(c.dataset.triples, toy_dir() / "triples.txt"));
}

TEST(Config, DefaultModelsFollowReferenceSettings) {
  auto c = parse(minimal_config());
  ASSERT_EQ(c.models.size(), 3u);
  EXPECT_EQ(c.models[0].tag, "TransE-0");
  EXPECT_EQ(c.models[0].shape.dim, 600u);
  EXPECT_EQ(c.models[0].train.batch_size, 16384u);
  EXPECT_EQ(c.models[1].shape.kind, kge::ModelKind::kComplEx);
  EXPECT_EQ(c.models[2].tag, "NOTE-0");
  EXPECT_EQ(c.models[2].shape.dim, 200u);
  EXPECT_EQ(c.models[2].shape.group_size, 20u);
  EXPECT_EQ(c.models[2].train.batch_size, 1000u);
  EXPECT_DOUBLE_EQ(c.models[2].train.learning_rate, 0.1);
  EXPECT_DOUBLE_EQ(c.models[2].shape.gamma, 3.0);
  EXPECT_NE(c.models[0].train.seed, c.models[1].train.seed);
}

TEST(Config, PartialModelEntriesKeepKindDefaults) {
  auto j = minimal_config();
  j["kge"]["models"] = json::array({{{"tag", "n"}, {"kind", "note"}, {"train", {{"max_steps", 5}}}}});
  auto c = parse(j);
  ASSERT_EQ(c.models.size(), 1u);
  EXPECT_EQ(c.models[0].train.max_steps, 5u);
  EXPECT_EQ(c.models[0].train.batch_size, 1000u);
  EXPECT_EQ(c.models[0].shape.dim, 200u);
}

TEST(Config, UnknownKeyIsNamed) {
  auto j = minimal_config();
  j["foo"] = 1;
  EXPECT_NE(error_of([&] { parse(j); }).find("'foo'"), std::string::npos);
  auto k = minimal_config();
  k["retrieval"]["pie"]["bar"] = true;
  EXPECT_NE(error_of([&] { parse(k); }).find("retrieval.pie.bar"), std::string::npos);
  auto m = minimal_config();
  m["kge"]["models"] = json::array({{{"kind", "transe"}, {"tag", "t"}, {"baz", 1}}});
  EXPECT_NE(error_of([&] { parse(m); }).find("kge.models.0.baz"), std::string::npos);
}

TEST(Config, ConstraintViolationsAreNamed) {
  auto cap = minimal_config();
  cap["retrieval"]["cap"] = -5;
  EXPECT_NE(error_of([&] { parse(cap); }).find("retrieval.cap"), std::string::npos);
  cap["retrieval"]["cap"] = 0;
  EXPECT_NE(error_of([&] { parse(cap); }).find("retrieval.cap"), std::string::npos);

  auto ratio = minimal_config();
  ratio["ensemble"]["dev_ratio"] = 1.5;
  EXPECT_NE(error_of([&] { parse(ratio); }).find("ensemble.dev_ratio"), std::string::npos);

  auto type = minimal_config();
  type["seed"] = "seven";
  EXPECT_NE(error_of([&] { parse(type); }).find("'seed'"), std::string::npos);

  auto rule = minimal_config();
  rule["retrieval"]["rules"] = json::array({"HT", "XY"});
  EXPECT_NE(error_of([&] { parse(rule); }).find("XY"), std::string::npos);

  auto step = minimal_config();
  step["rerank"]["grid_step"] = 0.0;
  EXPECT_NE(error_of([&] { parse(step); }).find("rerank.grid_step"), std::string::npos);

  auto note = minimal_config();
  note["kge"]["models"] = json::array({{{"tag", "n"}, {"kind", "note"}, {"dim", 30}, {"group_size", 4}}});
  EXPECT_NE(error_of([&] { parse(note); }).find("divisible"), std::string::npos);

  auto tags = minimal_config();
  tags["kge"]["models"] = json::array({{{"tag", "a"}, {"kind", "transe"}}, {{"tag", "a"}, {"kind", "note"}}});
  EXPECT_NE(error_of([&] { parse(tags); }).find("duplicate"), std::string::npos);

  auto slash = minimal_config();
  slash["kge"]["models"] = json::array({{{"tag", "../x"}, {"kind", "transe"}}});
  EXPECT_NE(error_of([&] { parse(slash); }).find("tag"), std::string::npos);

  auto sizes = minimal_config();
  sizes["retrieval"]["pie"]["sample_sizes"] = json::array({6, 6});
  EXPECT_NE(error_of([&] { parse(sizes); }).find("twice"), std::string::npos);
}

TEST(Config, ReferencedFilesMustExist) {
  EXPECT_NE(error_of([] { validate_config("/nonexistent/kgc.json"); }).find("not found"),
            std::string::npos);
  auto j = minimal_config();
  j["dataset"]["entity_vocab"] = "missing_vocab.txt";
  EXPECT_NE(error_of([&] { parse(j); }).find("dataset.entity_vocab"), std::string::npos);
  auto no_triples = minimal_config();
  no_triples["dataset"].erase("triples");
  EXPECT_NE(error_of([&] { parse(no_triples); }).find("dataset.triples"), std::string::npos);
}

TEST(Config, SemanticRetrievalNeedsFeatures) {
  json j = {{"dataset", {{"triples", "triples.txt"}}}};
  EXPECT_NE(error_of([&] { parse(j); }).find("retrieval.semantic.enabled"), std::string::npos);
  j["retrieval"]["semantic"]["enabled"] = false;
  EXPECT_FALSE(parse(j).retrieval.semantic.enabled);
}

TEST(Config, EnvironmentOverridesApplyAfterDefaults) {
  ConfigOverrides ov;
  ov.env = {{"KGC_RETRIEVAL__CAP", "100"},
            {"KGC_KGE__MODELS__1__DIM", "8"},
            {"KGC_RERANK__NORMALIZATION", "minmax"},
            {"KGC_RETRIEVAL__PIE__SAMPLE_SIZES", "[3]"}};
  auto c = parse(minimal_config(), ov);
  EXPECT_EQ(c.retrieval.cap, 100u);
  EXPECT_EQ(c.models[1].shape.dim, 8u);
  EXPECT_EQ(c.rerank.normalization, Normalization::kMinMax);
  EXPECT_EQ(c.retrieval.pie.sample_sizes, (std::vector<std::size_t>{3}));
  EXPECT_EQ(c.resolved["retrieval"]["cap"], 100);
}

TEST(Config, BadEnvironmentOverridesAreRejected) {
  ConfigOverrides unknown;
  unknown.env = {{"KGC_RETRIEVAL__NOPE", "1"}};
  EXPECT_NE(error_of([&] { parse(minimal_config(), unknown); }).find("retrieval.nope"),
            std::string::npos);
  ConfigOverrides index;
  index.env = {{"KGC_KGE__MODELS__9__DIM", "8"}};
  EXPECT_NE(error_of([&] { parse(minimal_config(), index); }).find("kge.models.9"),
            std::string::npos);
  ConfigOverrides type;
  type.env = {{"KGC_RETRIEVAL__CAP", "many"}};
  EXPECT_NE(error_of([&] { parse(minimal_config(), type); }).find("wrong type"),
            std::string::npos);
}

TEST(Config, EnvironmentScanKeepsOnlyPrefixedVariables) {
  std::string a = "KGC_SEED=3", b = "PATH=/bin", c = "KGC_RETRIEVAL__CAP=9";
  char* envp[] = {a.data(), b.data(), c.data(), nullptr};
  auto env = environment_overrides(envp);
  ASSERT_EQ(env.size(), 2u);
  EXPECT_EQ(env[0].first, "KGC_RETRIEVAL__CAP");
  EXPECT_EQ(env[1].second, "3");
}

TEST(Config, SeedAndDeterministicFlags) {
  auto j = minimal_config();
  j["kge"]["models"] = json::array({{{"tag", "t"}, {"kind", "transe"}, {"train", {{"num_threads", 4}}}}});
  ConfigOverrides ov;
  ov.seed = 99;
  ov.env = {{"KGC_SEED", "5"}};
  ov.deterministic = true;
  auto c = parse(j, ov);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.models[0].train.num_threads, 1u);
  EXPECT_EQ(parse(j).models[0].train.num_threads, 4u);
}

TEST(Config, HashTracksResolvedValues) {
  auto a = parse(minimal_config());
  auto b = parse(minimal_config());
  EXPECT_EQ(a.hash, b.hash);
  auto j = minimal_config();
  j["retrieval"]["cap"] = 19999;
  EXPECT_NE(parse(j).hash, a.hash);
  auto explicit_default = minimal_config();
  explicit_default["retrieval"]["cap"] = 20000;
  EXPECT_EQ(parse(explicit_default).hash, a.hash);
}

TEST(Stages, NamesRoundTrip) {
  for (auto s : kStages) EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_THROW(parse_stage("deploy"), Error);
  EXPECT_TRUE(depends_on(Stage::kEval, Stage::kIngest));
  EXPECT_TRUE(depends_on(Stage::kRerank, Stage::kTrain));
  EXPECT_FALSE(depends_on(Stage::kTrain, Stage::kRetrieve));
}

TEST(Stages, MissingUpstreamIsNamed) {
  TempDir dir;
  auto ctx = toy_context(kgc::testing::quick_toy_config(), dir.path());
  EXPECT_EQ(error_of([&] { run_stage(ctx, Stage::kEval); }), "requires stage: ingest");
  run_stage(ctx, Stage::kIngest);
  EXPECT_EQ(error_of([&] { run_stage(ctx, Stage::kEval); }), "requires stage: retrieve");
  EXPECT_EQ(error_of([&] { run_stage(ctx, Stage::kRerank); }), "requires stage: retrieve");
  run_stage(ctx, Stage::kTrain);
  run_stage(ctx, Stage::kRetrieve);
  EXPECT_EQ(error_of([&] { run_stage(ctx, Stage::kEval); }), "requires stage: fuse");
}

TEST(Stages, ArtifactsFromAnotherConfigAreStale) {
  TempDir dir;
  auto j = kgc::testing::quick_toy_config();
  run_stage(toy_context(j, dir.path()), Stage::kIngest);
  j["seed"] = 8;
  auto err = error_of([&] { run_stage(toy_context(j, dir.path()), Stage::kRetrieve); });
  EXPECT_EQ(err.rfind("requires stage: ingest", 0), 0u) << err;
  EXPECT_NE(err.find("different config"), std::string::npos);
}

TEST(Stages, RerunIsANoOpWithLogLine) {
  TempDir dir;
  std::ostringstream log;
  auto ctx = toy_context(kgc::testing::quick_toy_config(), dir.path(), &log);
  EXPECT_TRUE(run_stage(ctx, Stage::kIngest));
  auto train = ctx.file(Stage::kIngest, "train.txt");
  auto before = std::filesystem::last_write_time(train);
  auto bytes = read_file(train);
  log.str("");
  EXPECT_FALSE(run_stage(ctx, Stage::kIngest));
  EXPECT_NE(log.str().find("ingest: up to date"), std::string::npos);
  EXPECT_EQ(std::filesystem::last_write_time(train), before);
  EXPECT_EQ(read_file(train), bytes);
}

TEST(Stages, DamagedOutputForcesRerun) {
  TempDir dir;
  auto ctx = toy_context(kgc::testing::quick_toy_config(), dir.path());
  run_stage(ctx, Stage::kIngest);
  auto dev = ctx.file(Stage::kIngest, "dev.txt");
  auto original = read_file(dev);
  write_text(dev, original + "0 0 1\n");
  EXPECT_EQ(error_of([&] { run_stage(ctx, Stage::kRetrieve); }), "requires stage: ingest");
  EXPECT_TRUE(run_stage(ctx, Stage::kIngest));
  EXPECT_EQ(read_file(dev), original);
}

TEST(Stages, UpstreamRerunInvalidatesDownstream) {
  TempDir dir;
  auto ctx = toy_context(kgc::testing::quick_toy_config(), dir.path());
  run_stage(ctx, Stage::kIngest);
  run_stage(ctx, Stage::kTrain);
  std::filesystem::remove(ctx.file(Stage::kIngest, "graph.json"));
  run_stage(ctx, Stage::kIngest);
  // Same bytes, same manifest: the training stage still matches.
  EXPECT_FALSE(run_stage(ctx, Stage::kTrain));
}

TEST(Stages, ReportNeedsEval) {
  TempDir dir;
  EXPECT_EQ(error_of([&] { emit_report(dir.path()); }), "requires stage: eval");
}

TEST(Stages, DevSplitGroupsQueries) {
  TempDir dir;
  auto ctx = toy_context(kgc::testing::quick_toy_config(), dir.path());
  run_stage(ctx, Stage::kIngest);
  auto data = load_ingest(ctx);
  std::set<QueryKey> train_keys;
  for (const auto& t : data.train) train_keys.emplace(t.h, t.r);
  for (const auto& t : data.dev) EXPECT_FALSE(train_keys.contains({t.h, t.r}));
  EXPECT_EQ(data.train.size() + data.dev.size(), 207u);
  EXPECT_EQ(data.num_entities, 50u);
  EXPECT_EQ(data.num_relations, 8u);
}

// One full toy run shared by the report tests.
class ToyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    auto ctx = toy_context(toy_config_json(), dir_->path());
    run_all(ctx);
    ctx_ = new StageContext(std::move(ctx));
  }
  static void TearDownTestSuite() {
    delete ctx_;
    delete dir_;
  }
  static TempDir* dir_;
  static StageContext* ctx_;
};

TempDir* ToyRun::dir_ = nullptr;
StageContext* ToyRun::ctx_ = nullptr;

TEST_F(ToyRun, ReportHasEveryEnabledComponentOnce) {
  auto rep = load_report(ctx_->stage_dir);
  std::vector<std::string> expected;
  for (auto r : kAllRules) expected.emplace_back(rule_name(r));
  expected.insert(expected.end(), {"PIE_6", "PIE_10", "Semantic"});
  std::vector<std::string> got;
  for (const auto& r : rep.retrieval) got.push_back(r.model);
  EXPECT_EQ(got, expected);
  std::vector<std::size_t> priorities;
  for (const auto& r : rep.retrieval) priorities.push_back(r.priority);
  std::sort(priorities.begin(), priorities.end());
  for (std::size_t i = 0; i < priorities.size(); ++i) EXPECT_EQ(priorities[i], i + 1);
  ASSERT_EQ(rep.kge.size(), 3u);
  EXPECT_EQ(rep.kge[0].model, "TransE-0");
  EXPECT_EQ(rep.kge[1].model, "ComplEx-0");
  EXPECT_EQ(rep.kge[2].model, "NOTE-0");
  ASSERT_EQ(rep.typing.size(), 2u);
  EXPECT_GT(rep.typing[0].evaluated, 0u);
  ASSERT_FALSE(rep.fusion.empty());
  EXPECT_EQ(rep.fusion[0].method, "priority_infill");
  EXPECT_FALSE(rep.ensemble.models.empty());
  EXPECT_EQ(rep.dev_triples + rep.train_triples, 207u);

  auto text = read_file(ctx_->file(Stage::kEval, "report.txt"));
  for (const auto& tag : expected) EXPECT_NE(text.find("\n" + tag + " "), std::string::npos) << tag;
  EXPECT_NE(text.find("ensemble"), std::string::npos);
}

TEST_F(ToyRun, ArtifactsCarryFormatAndConfig) {
  const auto header = artifact_header(ctx_->config.hash);
  for (auto s : kStages) {
    auto m = load_manifest(ctx_->dir(s));
    ASSERT_TRUE(m) << stage_name(s);
    EXPECT_EQ(m->config_hash, ctx_->config.hash);
    for (const auto& [name, h] : m->outputs) {
      auto bytes = read_file(ctx_->file(s, name));
      EXPECT_EQ(fnv1a(bytes), h) << name;
      if (name.ends_with(".kgck")) {
        kge::CheckpointInfo info;
        auto model = kge::decode_checkpoint(bytes, nullptr, &info);
        EXPECT_EQ(info.config_hash, ctx_->config.hash);
      } else if (name.ends_with(".json")) {
        auto j = json::parse(bytes);
        EXPECT_EQ(j["format"], 1) << name;
        EXPECT_EQ(j["config"], hex64(ctx_->config.hash)) << name;
      } else {
        EXPECT_EQ(bytes.rfind(header, 0), 0u) << name;
      }
    }
  }
}

TEST_F(ToyRun, RerunAllIsANoOp) {
  std::ostringstream log;
  auto ctx = *ctx_;
  ctx.log = &log;
  for (auto s : kStages) EXPECT_FALSE(run_stage(ctx, s)) << stage_name(s);
  EXPECT_NE(log.str().find("eval: up to date"), std::string::npos);
}

TEST_F(ToyRun, ReportRoundTripsThroughJson) {
  auto rep = load_report(ctx_->stage_dir);
  auto again = RunReport::from_json(json::parse(rep.to_json().dump()));
  EXPECT_EQ(again.to_json(), rep.to_json());
  EXPECT_EQ(again.render(), rep.render());
  EXPECT_EQ(emit_report(ctx_->stage_dir), read_file(ctx_->file(Stage::kEval, "report.txt"))
                                              .substr(artifact_header(ctx_->config.hash).size()));
}

// Independent recomputation from the per-query text artifacts.
std::vector<std::string> data_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

struct ScoredQuery {
  EntityId answer = 0;
  std::vector<std::pair<EntityId, double>> cands;
};

std::vector<ScoredQuery> read_scored(const std::filesystem::path& p) {
  std::vector<ScoredQuery> out;
  for (const auto& line : data_lines(p)) {
    std::istringstream in(line);
    EntityId h, r;
    ScoredQuery q;
    in >> h >> r >> q.answer;
    std::string tok;
    while (in >> tok) {
      auto colon = tok.find(':');
      q.cands.emplace_back(std::stoul(tok.substr(0, colon)), std::stod(tok.substr(colon + 1)));
    }
    out.push_back(q);
  }
  return out;
}

std::size_t oracle_rank(const std::vector<std::pair<EntityId, double>>& c, EntityId answer) {
  auto it = std::find_if(c.begin(), c.end(), [&](const auto& x) { return x.first == answer; });
  if (it == c.end()) return 0;
  std::size_t rank = 1;
  for (const auto& x : c) {
    if (x.second > it->second || (x.second == it->second && x.first < answer)) ++rank;
  }
  return rank;
}

double oracle_mrr(const std::vector<ScoredQuery>& qs) {
  double sum = 0.0;
  for (const auto& q : qs) {
    auto r = oracle_rank(q.cands, q.answer);
    if (r >= 1 && r <= 10) sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(qs.size());
}

TEST_F(ToyRun, ReportMatchesRecomputationFromArtifacts) {
  auto rep = load_report(ctx_->stage_dir);
  std::vector<Triple> dev;
  for (const auto& line : data_lines(ctx_->file(Stage::kIngest, "dev.txt"))) {
    std::istringstream in(line);
    Triple t;
    in >> t.h >> t.r >> t.t;
    dev.push_back(t);
  }
  auto member = [](const std::filesystem::path& p) {
    std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> m;
    for (const auto& line : data_lines(p)) {
      std::istringstream in(line);
      EntityId h, r;
      in >> h >> r;
      auto& s = m[{h, r}];
      std::string tok;
      while (in >> tok) s.insert(static_cast<EntityId>(std::stoul(tok.substr(0, tok.find(':')))));
    }
    return m;
  };
  auto recall = [&](const std::filesystem::path& p) {
    auto m = member(p);
    double hits = 0;
    for (const auto& t : dev) hits += m[{t.h, t.r}].contains(t.t) ? 1 : 0;
    return hits / static_cast<double>(dev.size());
  };
  for (const auto& row : rep.retrieval) {
    EXPECT_DOUBLE_EQ(row.recall, recall(ctx_->file(Stage::kRetrieve, row.model + ".cand")))
        << row.model;
  }
  EXPECT_DOUBLE_EQ(rep.fusion[0].recall, recall(ctx_->file(Stage::kFuse, "fused.cand")));

  std::map<std::string, std::vector<ScoredQuery>> scored;
  for (const auto& row : rep.kge) {
    scored[row.model] = read_scored(ctx_->file(Stage::kRerank, row.model + ".scores"));
    ASSERT_EQ(scored[row.model].size(), dev.size());
    EXPECT_DOUBLE_EQ(row.mrr10, oracle_mrr(scored[row.model])) << row.model;
  }

  // Rank normalization: each candidate gets 1 / its rank under the model.
  ASSERT_EQ(rep.ensemble.normalization, Normalization::kRank);
  std::vector<ScoredQuery> mixed(dev.size());
  for (std::size_t q = 0; q < dev.size(); ++q) {
    const auto& base = scored.begin()->second[q];
    mixed[q].answer = base.answer;
    for (const auto& c : base.cands) mixed[q].cands.emplace_back(c.first, 0.0);
    for (std::size_t i = 0; i < rep.ensemble.models.size(); ++i) {
      const double w = rep.ensemble.weights[i];
      if (w == 0.0) continue;
      const auto& mq = scored[rep.ensemble.models[i]][q];
      for (std::size_t c = 0; c < mq.cands.size(); ++c) {
        mixed[q].cands[c].second += w / static_cast<double>(oracle_rank(mq.cands, mq.cands[c].first));
      }
    }
  }
  EXPECT_DOUBLE_EQ(rep.ensemble_mrr, oracle_mrr(mixed));
  EXPECT_DOUBLE_EQ(rep.ensemble_mrr,
                   oracle_mrr(read_scored(ctx_->file(Stage::kRerank, "ensemble.scores"))));
}

TEST_F(ToyRun, RerankCandidatesAreFilteredFusedLists) {
  auto data = load_ingest(*ctx_);
  std::set<Triple> known(data.train.begin(), data.train.end());
  known.insert(data.dev.begin(), data.dev.end());
  auto scored = read_scored(ctx_->file(Stage::kRerank, "TransE-0.scores"));
  ASSERT_EQ(scored.size(), data.dev.size());
  for (std::size_t q = 0; q < scored.size(); ++q) {
    const auto& t = data.dev[q];
    EXPECT_EQ(scored[q].answer, t.t);
    EXPECT_LE(scored[q].cands.size(), ctx_->config.ensemble.n);
    for (const auto& c : scored[q].cands) {
      if (c.first != t.t) {
        EXPECT_FALSE(known.contains({t.h, t.r, c.first}));
      }
    }
  }
}

TEST_F(ToyRun, EvalDetectsTamperedScores) {
  TempDir copy;
  std::filesystem::copy(ctx_->stage_dir, copy.path(), std::filesystem::copy_options::recursive);
  auto ctx = *ctx_;
  ctx.stage_dir = copy.path();
  auto rr = ctx.file(Stage::kRerank, "rerank.tsv");
  auto text = read_file(rr);
  auto pos = text.find("TransE-0\t");
  ASSERT_NE(pos, std::string::npos);
  const auto end = text.find('\n', pos);
  text.replace(pos, end - pos, "TransE-0\t0.000001");
  // Keep the manifest consistent so only the recomputation can notice.
  auto m = *load_manifest(ctx.dir(Stage::kRerank));
  m.outputs["rerank.tsv"] = fnv1a(text);
  write_text(rr, text);
  write_text(ctx.dir(Stage::kRerank) / "manifest.json", m.dump());
  std::filesystem::remove(ctx.dir(Stage::kEval) / "manifest.json");
  EXPECT_NE(error_of([&] { run_stage(ctx, Stage::kEval); }).find("artifact mismatch"),
            std::string::npos);
}

TEST(Pipeline, DisabledRetrieversHaveNoRows) {
  TempDir dir;
  auto j = kgc::testing::quick_toy_config();
  j["retrieval"]["semantic"]["enabled"] = false;
  j["retrieval"]["pie"]["enabled"] = false;
  j["retrieval"]["rules"] = json::array({"HT", "TH-HT"});
  j["kge"]["models"] = json::array({j["kge"]["models"][0]});
  auto ctx = toy_context(j, dir.path());
  run_all(ctx);
  auto rep = load_report(dir.path());
  ASSERT_EQ(rep.retrieval.size(), 2u);
  EXPECT_EQ(rep.retrieval[0].model, "HT");
  EXPECT_EQ(rep.retrieval[1].model, "TH-HT");
  EXPECT_TRUE(rep.typing.empty());
  ASSERT_EQ(rep.kge.size(), 1u);
  EXPECT_FALSE(rep.direct_ensemble_mrr.has_value());
  auto text = emit_report(dir.path());
  EXPECT_EQ(text.find("Semantic"), std::string::npos);
  EXPECT_EQ(text.find("PIE_"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(ctx.file(Stage::kRetrieve, "Semantic.cand")));
}

TEST(Pipeline, FeatureInitializedVariantsTrainAndRerank) {
  TempDir dir;
  auto j = kgc::testing::quick_toy_config();
  auto base = j["kge"]["models"][0];
  auto ne = base;
  ne["tag"] = "TransE-ne";
  ne["init"] = {{"mode", "neighbor_enhanced"}, {"projection", true}, {"activation", "relu"}};
  auto feat = base;
  feat["tag"] = "TransE-feat";
  feat["dim"] = 16;
  feat["init"] = {{"mode", "feature"}};
  j["kge"]["models"] = json::array({base, ne, feat});
  auto ctx = toy_context(j, dir.path());
  run_all(ctx);
  auto rep = load_report(dir.path());
  ASSERT_EQ(rep.kge.size(), 3u);
  EXPECT_EQ(rep.kge[1].model, "TransE-ne");
}

TEST(Pipeline, SameSeedGivesIdenticalReports) {
  TempDir a, b;
  auto j = kgc::testing::quick_toy_config();
  run_all(toy_context(j, a.path()));
  run_all(toy_context(j, b.path()));
  for (const auto* name : {"report.json", "report.txt"}) {
    EXPECT_EQ(read_file(a.path() / "eval" / name), read_file(b.path() / "eval" / name)) << name;
  }
}

}  // namespace
}  // namespace kgc::pipeline
