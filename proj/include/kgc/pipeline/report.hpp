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
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/common.hpp"
#include "kgc/rerank_ensemble.hpp"

namespace kgc::pipeline {

struct RetrievalRow {
  std::string model;
  double recall = 0.0;
  double accuracy = 0.0;
  std::size_t priority = 0;
};

struct TypingRow {
  std::string model;
  std::size_t sample_size = 0;
  double mask_mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct FusionRow {
  std::string method;
  double recall = 0.0;
  double accuracy = 0.0;
};

struct KgeRow {
  std::string model;
  std::string kind;
  double mrr10 = 0.0;
};

struct RunReport {
  std::uint64_t config_hash = 0;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t train_triples = 0;
  std::size_t dev_triples = 0;
  std::size_t dev_queries = 0;
  std::vector<RetrievalRow> retrieval;
  std::vector<TypingRow> typing;
  std::vector<FusionRow> fusion;
  std::size_t fused_n = 0;
  std::vector<KgeRow> kge;
  EnsembleSpec ensemble;
  double ensemble_mrr = 0.0;
  std::vector<std::pair<std::string, double>> greedy_trace;
  std::optional<double> direct_ensemble_mrr;

  nlohmann::json to_json() const {
    using nlohmann::json;
    json j;
    j["format"] = 1;
    j["config"] = hex64(config_hash);
    j["dataset"] = {{"entities", num_entities},
                    {"relations", num_relations},
                    {"train_triples", train_triples},
                    {"dev_triples", dev_triples},
                    {"dev_queries", dev_queries}};
    j["retrieval"] = json::array();
    for (const auto& r : retrieval) {
      j["retrieval"].push_back({{"model", r.model},
                                {"recall", r.recall},
                                {"accuracy", r.accuracy},
                                {"priority", r.priority}});
    }
    j["typing"] = json::array();
    for (const auto& t : typing) {
      j["typing"].push_back({{"model", t.model},
                             {"sample_size", t.sample_size},
                             {"mask_mrr", t.mask_mrr},
                             {"evaluated", t.evaluated},
                             {"skipped", t.skipped}});
    }
    j["fusion"] = {{"n", fused_n}, {"methods", json::array()}};
    for (const auto& f : fusion) {
      j["fusion"]["methods"].push_back(
          {{"method", f.method}, {"recall", f.recall}, {"accuracy", f.accuracy}});
    }
    j["kge"] = json::array();
    for (const auto& k : kge) {
      j["kge"].push_back({{"model", k.model}, {"kind", k.kind}, {"mrr10", k.mrr10}});
    }
    json weights = json::array();
    for (std::size_t i = 0; i < ensemble.models.size(); ++i) {
      weights.push_back({{"model", ensemble.models[i]}, {"weight", ensemble.weights[i]}});
    }
    json trace = json::array();
    for (const auto& [tag, mrr] : greedy_trace) trace.push_back({{"model", tag}, {"mrr10", mrr}});
    j["ensemble"] = {{"normalization", std::string(normalization_name(ensemble.normalization))},
                     {"weights", weights},
                     {"mrr10", ensemble_mrr},
                     {"greedy_trace", trace}};
    if (direct_ensemble_mrr) j["ensemble"]["direct_mrr10"] = *direct_ensemble_mrr;
    return j;
  }

  static RunReport from_json(const nlohmann::json& j) {
    RunReport r;
    auto hex = j.at("config").get<std::string>();
    r.config_hash = std::stoull(hex, nullptr, 16);
    const auto& d = j.at("dataset");
    r.num_entities = d.at("entities");
    r.num_relations = d.at("relations");
    r.train_triples = d.at("train_triples");
    r.dev_triples = d.at("dev_triples");
    r.dev_queries = d.at("dev_queries");
    for (const auto& x : j.at("retrieval")) {
      r.retrieval.push_back({x.at("model"), x.at("recall"), x.at("accuracy"), x.at("priority")});
    }
    for (const auto& x : j.at("typing")) {
      r.typing.push_back({x.at("model"), x.at("sample_size"), x.at("mask_mrr"),
                          x.at("evaluated"), x.at("skipped")});
    }
    r.fused_n = j.at("fusion").at("n");
    for (const auto& x : j.at("fusion").at("methods")) {
      r.fusion.push_back({x.at("method"), x.at("recall"), x.at("accuracy")});
    }
    for (const auto& x : j.at("kge")) r.kge.push_back({x.at("model"), x.at("kind"), x.at("mrr10")});
    const auto& e = j.at("ensemble");
    r.ensemble.normalization = parse_normalization(e.at("normalization").get<std::string>());
    for (const auto& x : e.at("weights")) {
      r.ensemble.models.push_back(x.at("model"));
      r.ensemble.weights.push_back(x.at("weight"));
    }
    r.ensemble_mrr = e.at("mrr10");
    for (const auto& x : e.at("greedy_trace")) r.greedy_trace.emplace_back(x.at("model"), x.at("mrr10"));
    if (e.contains("direct_mrr10")) r.direct_ensemble_mrr = e.at("direct_mrr10").get<double>();
    return r;
  }

  // Plain-text tables, four decimals.
  std::string render() const {
    auto num = [](double v) { return format_fixed(v, 4); };
    auto pad = [](std::string s, std::size_t w) {
      if (s.size() < w) s.append(w - s.size(), ' ');
      return s;
    };
    std::size_t w = 10;
    for (const auto& r : retrieval) w = std::max(w, r.model.size() + 2);
    for (const auto& k : kge) w = std::max(w, k.model.size() + 2);
    for (const auto& f : fusion) w = std::max(w, f.method.size() + 2);

    std::string out;
    out += "dataset: " + std::to_string(num_entities) + " entities, " +
           std::to_string(num_relations) + " relations, " + std::to_string(train_triples) +
           " train triples, " + std::to_string(dev_triples) + " dev triples (" +
           std::to_string(dev_queries) + " queries)\n\n";

    out += "Retrieval models (dev)\n";
    out += pad("model", w) + pad("recall", 10) + pad("accuracy", 10) + "priority\n";
    for (const auto& r : retrieval) {
      out += pad(r.model, w) + pad(num(r.recall), 10) + pad(num(r.accuracy), 10) +
             std::to_string(r.priority) + "\n";
    }
    out += "\nCandidate fusion (N = " + std::to_string(fused_n) + ")\n";
    out += pad("method", w) + pad("recall", 10) + "accuracy\n";
    for (const auto& f : fusion) {
      out += pad(f.method, w) + pad(num(f.recall), 10) + num(f.accuracy) + "\n";
    }
    if (!typing.empty()) {
      out += "\nTyping self-evaluation (masked relation MRR)\n";
      out += pad("model", w) + pad("mrr", 10) + "evaluated\n";
      for (const auto& t : typing) {
        out += pad(t.model, w) + pad(num(t.mask_mrr), 10) + std::to_string(t.evaluated) + "\n";
      }
    }
    out += "\nRe-ranking models (dev MRR@10)\n";
    out += pad("model", w) + pad("kind", 10) + "mrr@10\n";
    for (const auto& k : kge) out += pad(k.model, w) + pad(k.kind, 10) + num(k.mrr10) + "\n";
    out += pad("ensemble", w) + pad("", 10) + num(ensemble_mrr) + "\n";
    if (direct_ensemble_mrr) {
      out += pad("all-models", w) + pad("", 10) + num(*direct_ensemble_mrr) + "\n";
    }
    out += "\nEnsemble (" + std::string(normalization_name(ensemble.normalization)) +
           " normalization)\n";
    for (std::size_t i = 0; i < ensemble.models.size(); ++i) {
      out += pad(ensemble.models[i], w) + num(ensemble.weights[i]) + "\n";
    }
    out += "greedy trace:";
    for (const auto& [tag, mrr] : greedy_trace) out += " +" + tag + " " + num(mrr);
    out += "\n";
    return out;
  }
};

// Reads the eval stage's machine-readable report and renders the tables.
inline RunReport load_report(const std::filesystem::path& stage_dir) {
  auto path = stage_dir / "eval" / "report.json";
  if (!std::filesystem::is_regular_file(path)) throw Error("requires stage: eval");
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(path.string() + " is not valid JSON");
  return RunReport::from_json(j);
}

inline std::string emit_report(const std::filesystem::path& stage_dir) {
  return load_report(stage_dir).render();
}

}  // namespace kgc::pipeline
