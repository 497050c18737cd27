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
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/candidate_list.hpp"
#include "kgc/common.hpp"
#include "kgc/kge/init.hpp"
#include "kgc/kge/train.hpp"
#include "kgc/path_rules.hpp"
#include "kgc/pq.hpp"
#include "kgc/rerank_ensemble.hpp"
#include "kgc/typing_retrieval.hpp"

namespace kgc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::string_view kEnvPrefix = "KGC_";

struct DatasetConfig {
  fs::path triples;
  std::size_t num_entities = 0;  // 0: taken from the vocab file, else max id + 1
  std::size_t num_relations = 0;
  fs::path entity_vocab;
  fs::path relation_vocab;
  fs::path entity_features;
  fs::path relation_features;
};

// The neural typing network's training settings are carried for
// completeness; the count-based typing model does not consume them.
struct PieConfig {
  bool enabled = true;
  std::vector<std::size_t> sample_sizes{6, 10};
  fs::path upsample_weights;
  double smoothing = kDefaultTypingSmoothing;
  std::size_t context_hops = kDefaultContextHops;
  double mask_fraction = 0.1;
  std::size_t batch_size = 512;
  double learning_rate = 2e-3;
  std::size_t hidden_dim = 1024;
  double margin = 3.0;
  double gamma = 3.0;
};

struct SemanticConfig {
  bool enabled = true;
  std::size_t num_subspaces = kDefaultPqSubspaces;
  std::size_t centroids = kDefaultPqCentroids;
  std::size_t iterations = kDefaultKmeansIterations;
  std::size_t k = kDefaultSemanticK;
};

struct RetrievalConfig {
  std::vector<RuleId> rules{kAllRules.begin(), kAllRules.end()};
  std::size_t cap = kDefaultCandidateCap;
  PieConfig pie;
  SemanticConfig semantic;
};

struct EnsembleConfig {
  std::size_t n = kDefaultCandidateCap;
  double dev_ratio = 0.1;
  bool majority_vote = true;
};

struct ModelVariant {
  std::string tag;
  kge::ModelShape shape;
  kge::InitMode init_mode = kge::InitMode::kRandom;
  bool projection = false;
  kge::Activation activation = kge::Activation::kNone;
  kge::TrainConfig train;
};

struct RerankConfig {
  double grid_step = kDefaultGridStep;
  Normalization normalization = Normalization::kRank;
  std::size_t grid_budget = kDefaultGridBudget;
  std::size_t max_models = kMaxGridModels;
  bool direct_ensemble = true;
};

struct PipelineConfig {
  DatasetConfig dataset;
  std::uint64_t seed = 0;
  RetrievalConfig retrieval;
  EnsembleConfig ensemble;
  std::vector<ModelVariant> models;
  RerankConfig rerank;
  bool deterministic = false;
  // Fully resolved configuration (defaults and overrides applied) and its
  // hash, which is stamped into every artifact.
  json resolved;
  std::uint64_t hash = 0;
};

namespace detail {

inline json model_defaults(kge::ModelKind kind) {
  const bool note = kind == kge::ModelKind::kNote;
  auto t = note ? kge::TrainConfig::note_defaults() : kge::TrainConfig::wide_defaults();
  return {
      {"tag", ""},
      {"kind", kge::kind_name(kind)},
      {"dim", note ? kge::kDefaultDimNote : kge::kDefaultDimWide},
      {"group_size", kge::kDefaultNoteGroupSize},
      {"gamma", kge::kDefaultGamma},
      {"init", {{"mode", "random"}, {"projection", false}, {"activation", "none"}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"negative_sample_size", t.negative_sample_size},
        {"learning_rate", t.learning_rate},
        {"lr_decay_step", t.lr_decay_step},
        {"lr_decay_factor", t.lr_decay_factor},
        {"regularization", t.regularization},
        {"encoder_learning_rate", t.encoder_learning_rate},
        {"max_steps", t.max_steps},
        {"adversarial_temperature", t.adversarial_temperature},
        {"loss", kge::loss_name(t.loss)},
        {"num_threads", t.num_threads}}},
  };
}

inline json config_defaults() {
  PieConfig pie;
  SemanticConfig sem;
  json rules = json::array();
  for (auto r : kAllRules) rules.push_back(rule_name(r));
  return {
      {"dataset",
       {{"triples", ""},
        {"num_entities", 0},
        {"num_relations", 0},
        {"entity_vocab", ""},
        {"relation_vocab", ""},
        {"entity_features", ""},
        {"relation_features", ""}}},
      {"seed", 0},
      {"retrieval",
       {{"rules", rules},
        {"cap", kDefaultCandidateCap},
        {"pie",
         {{"enabled", pie.enabled},
          {"sample_sizes", pie.sample_sizes},
          {"upsample_weights", ""},
          {"smoothing", pie.smoothing},
          {"context_hops", pie.context_hops},
          {"mask_fraction", pie.mask_fraction},
          {"batch_size", pie.batch_size},
          {"learning_rate", pie.learning_rate},
          {"hidden_dim", pie.hidden_dim},
          {"margin", pie.margin},
          {"gamma", pie.gamma}}},
        {"semantic",
         {{"enabled", sem.enabled},
          {"num_subspaces", sem.num_subspaces},
          {"centroids", sem.centroids},
          {"iterations", sem.iterations},
          {"k", sem.k}}}}},
      {"ensemble", {{"n", kDefaultCandidateCap}, {"dev_ratio", 0.1}, {"majority_vote", true}}},
      {"kge",
       {{"models",
         json::array({{{"tag", "TransE-0"}, {"kind", "transe"}},
                      {{"tag", "ComplEx-0"}, {"kind", "complex"}},
                      {{"tag", "NOTE-0"}, {"kind", "note"}}})}}},
      {"rerank",
       {{"grid_step", kDefaultGridStep},
        {"normalization", "rank"},
        {"grid_budget", kDefaultGridBudget},
        {"max_models", kMaxGridModels},
        {"direct_ensemble", true}}},
  };
}

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Overlays `user` on `defaults`, rejecting keys the defaults lack and values
// of the wrong type. Arrays replace wholesale.
inline void overlay(json& defaults, const json& user, const std::string& path) {
  if (!user.is_object()) throw Error("config key '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const auto key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw Error("unknown config key '" + key + "'");
    auto& slot = defaults[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else if (!same_kind(slot, it.value())) {
      throw Error("config key '" + key + "' has the wrong type");
    } else {
      slot = it.value();
    }
  }
}

inline json resolve_models(const json& models) {
  if (!models.is_array() || models.empty()) {
    throw Error("config key 'kge.models' must be a non-empty list");
  }
  json out = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto path = "kge.models." + std::to_string(i);
    const auto& m = models[i];
    if (!m.is_object() || !m.contains("kind") || !m["kind"].is_string()) {
      throw Error("config key '" + path + ".kind' is required");
    }
    auto d = model_defaults(kge::parse_kind(m["kind"].get<std::string>()));
    overlay(d, m, path);
    out.push_back(std::move(d));
  }
  return out;
}

// KGC_RETRIEVAL__CAP=100 sets retrieval.cap; list items are addressed by
// index (KGC_KGE__MODELS__0__DIM). Values parse as JSON, else as strings.
inline void apply_override(json& cfg, std::string_view name, const std::string& value) {
  auto body = name.substr(kEnvPrefix.size());
  json* slot = &cfg;
  std::string path;
  std::size_t pos = 0;
  while (true) {
    auto sep = body.find("__", pos);
    std::string seg(body.substr(pos, sep == std::string_view::npos ? sep : sep - pos));
    for (auto& c : seg) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    path += (path.empty() ? "" : ".") + seg;
    if (slot->is_array()) {
      std::size_t idx = 0;
      if (!parse_number(seg, idx) || idx >= slot->size()) {
        throw Error("override " + std::string(name) + " addresses unknown key '" + path + "'");
      }
      slot = &(*slot)[idx];
    } else if (slot->is_object() && slot->contains(seg)) {
      slot = &(*slot)[seg];
    } else {
      throw Error("override " + std::string(name) + " addresses unknown key '" + path + "'");
    }
    if (sep == std::string_view::npos) break;
    pos = sep + 2;
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  if (!same_kind(*slot, parsed)) {
    throw Error("override " + std::string(name) + " has the wrong type");
  }
  *slot = std::move(parsed);
}

template <class T>
T get_count(const json& j, const std::string& key, bool positive = true) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) {
    throw Error("config key '" + key + "' must be an integer");
  }
  auto v = j.get<std::int64_t>();
  if (v < 0 || (positive && v == 0)) {
    throw Error("config key '" + key + "' must be " + (positive ? "at least 1" : "non-negative"));
  }
  return static_cast<T>(v);
}

inline double get_real(const json& j, const std::string& key) {
  auto v = j.get<double>();
  if (!std::isfinite(v)) throw Error("config key '" + key + "' must be finite");
  return v;
}

inline fs::path get_path(const json& j, const fs::path& base) {
  auto s = j.get<std::string>();
  if (s.empty()) return {};
  fs::path p(s);
  return p.is_absolute() ? p : base / p;
}

inline void require_file(const fs::path& p, const std::string& key) {
  if (!p.empty() && !fs::is_regular_file(p)) {
    throw Error("config key '" + key + "' names a missing file: " + p.string());
  }
}

inline bool valid_tag(const std::string& tag) {
  if (tag.empty()) return false;
  for (char c : tag) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') {
      return false;
    }
  }
  return true;
}

}  // namespace detail

struct ConfigOverrides {
  // (variable name, value) pairs, e.g. from the environment.
  std::vector<std::pair<std::string, std::string>> env;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

// Environment variables carrying the override prefix.
inline std::vector<std::pair<std::string, std::string>> environment_overrides(char** envp) {
  std::vector<std::pair<std::string, std::string>> out;
  for (; envp && *envp; ++envp) {
    std::string_view kv(*envp);
    if (kv.substr(0, kEnvPrefix.size()) != kEnvPrefix) continue;
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace_back(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Parses `text` (JSON) with relative paths resolved against `base_dir`.
inline PipelineConfig parse_config(std::string_view text, const fs::path& base_dir,
                                   const ConfigOverrides& ov = {}) {
  json user = json::parse(text, nullptr, false);
  if (user.is_discarded()) throw Error("config is not valid JSON");
  json cfg = detail::config_defaults();
  json models = cfg["kge"]["models"];
  if (user.is_object() && user.contains("kge") && user["kge"].is_object() &&
      user["kge"].contains("models")) {
    models = user["kge"]["models"];
    user["kge"].erase("models");
  }
  detail::overlay(cfg, user, "");
  cfg["kge"]["models"] = detail::resolve_models(models);
  for (const auto& [name, value] : ov.env) detail::apply_override(cfg, name, value);
  if (ov.seed) cfg["seed"] = *ov.seed;
  if (ov.deterministic) {
    for (auto& m : cfg["kge"]["models"]) m["train"]["num_threads"] = 1;
  }

  PipelineConfig c;
  c.deterministic = ov.deterministic;
  const auto& d = cfg["dataset"];
  c.dataset.triples = detail::get_path(d["triples"], base_dir);
  if (c.dataset.triples.empty()) throw Error("config key 'dataset.triples' is required");
  detail::require_file(c.dataset.triples, "dataset.triples");
  c.dataset.num_entities = detail::get_count<std::size_t>(d["num_entities"], "dataset.num_entities", false);
  c.dataset.num_relations = detail::get_count<std::size_t>(d["num_relations"], "dataset.num_relations", false);
  for (auto [key, field] : {std::pair{"entity_vocab", &c.dataset.entity_vocab},
                            std::pair{"relation_vocab", &c.dataset.relation_vocab},
                            std::pair{"entity_features", &c.dataset.entity_features},
                            std::pair{"relation_features", &c.dataset.relation_features}}) {
    *field = detail::get_path(d[key], base_dir);
    detail::require_file(*field, std::string("dataset.") + key);
  }
  c.seed = detail::get_count<std::uint64_t>(cfg["seed"], "seed", false);

  const auto& r = cfg["retrieval"];
  c.retrieval.rules.clear();
  for (const auto& name : r["rules"]) {
    auto rule = name.is_string() ? parse_rule(name.get<std::string>()) : std::nullopt;
    if (!rule) throw Error("config key 'retrieval.rules' names an unknown rule " + name.dump());
    if (std::find(c.retrieval.rules.begin(), c.retrieval.rules.end(), *rule) !=
        c.retrieval.rules.end()) {
      throw Error("config key 'retrieval.rules' lists " + name.dump() + " twice");
    }
    c.retrieval.rules.push_back(*rule);
  }
  c.retrieval.cap = detail::get_count<std::size_t>(r["cap"], "retrieval.cap");
  const auto& p = r["pie"];
  auto& pie = c.retrieval.pie;
  pie.enabled = p["enabled"].get<bool>();
  pie.sample_sizes.clear();
  for (const auto& s : p["sample_sizes"]) {
    auto n = detail::get_count<std::size_t>(s, "retrieval.pie.sample_sizes");
    if (std::find(pie.sample_sizes.begin(), pie.sample_sizes.end(), n) != pie.sample_sizes.end()) {
      throw Error("config key 'retrieval.pie.sample_sizes' lists " + std::to_string(n) + " twice");
    }
    pie.sample_sizes.push_back(n);
  }
  if (pie.enabled && pie.sample_sizes.empty()) {
    throw Error("config key 'retrieval.pie.sample_sizes' must not be empty");
  }
  pie.upsample_weights = detail::get_path(p["upsample_weights"], base_dir);
  detail::require_file(pie.upsample_weights, "retrieval.pie.upsample_weights");
  pie.smoothing = detail::get_real(p["smoothing"], "retrieval.pie.smoothing");
  if (pie.smoothing < 0) throw Error("config key 'retrieval.pie.smoothing' must be non-negative");
  pie.context_hops = detail::get_count<std::size_t>(p["context_hops"], "retrieval.pie.context_hops");
  pie.mask_fraction = detail::get_real(p["mask_fraction"], "retrieval.pie.mask_fraction");
  if (!(pie.mask_fraction > 0 && pie.mask_fraction < 1)) {
    throw Error("config key 'retrieval.pie.mask_fraction' must lie in (0, 1)");
  }
  pie.batch_size = detail::get_count<std::size_t>(p["batch_size"], "retrieval.pie.batch_size");
  pie.learning_rate = detail::get_real(p["learning_rate"], "retrieval.pie.learning_rate");
  pie.hidden_dim = detail::get_count<std::size_t>(p["hidden_dim"], "retrieval.pie.hidden_dim");
  pie.margin = detail::get_real(p["margin"], "retrieval.pie.margin");
  pie.gamma = detail::get_real(p["gamma"], "retrieval.pie.gamma");

  const auto& s = r["semantic"];
  auto& sem = c.retrieval.semantic;
  sem.enabled = s["enabled"].get<bool>();
  sem.num_subspaces = detail::get_count<std::size_t>(s["num_subspaces"], "retrieval.semantic.num_subspaces");
  sem.centroids = detail::get_count<std::size_t>(s["centroids"], "retrieval.semantic.centroids");
  sem.iterations = detail::get_count<std::size_t>(s["iterations"], "retrieval.semantic.iterations");
  sem.k = detail::get_count<std::size_t>(s["k"], "retrieval.semantic.k");
  if (sem.enabled && (c.dataset.entity_features.empty() || c.dataset.relation_features.empty())) {
    throw Error("config key 'retrieval.semantic.enabled' requires dataset.entity_features "
                "and dataset.relation_features");
  }
  if (c.retrieval.rules.empty() && !pie.enabled && !sem.enabled) {
    throw Error("config enables no retrieval model");
  }

  const auto& e = cfg["ensemble"];
  c.ensemble.n = detail::get_count<std::size_t>(e["n"], "ensemble.n");
  c.ensemble.dev_ratio = detail::get_real(e["dev_ratio"], "ensemble.dev_ratio");
  if (!(c.ensemble.dev_ratio > 0 && c.ensemble.dev_ratio < 1)) {
    throw Error("config key 'ensemble.dev_ratio' must lie in (0, 1)");
  }
  c.ensemble.majority_vote = e["majority_vote"].get<bool>();

  for (std::size_t i = 0; i < cfg["kge"]["models"].size(); ++i) {
    const auto& m = cfg["kge"]["models"][i];
    const auto key = "kge.models." + std::to_string(i);
    ModelVariant v;
    v.tag = m["tag"].get<std::string>();
    if (!detail::valid_tag(v.tag)) {
      throw Error("config key '" + key + ".tag' must be a non-empty name of [A-Za-z0-9._-]");
    }
    for (const auto& other : c.models) {
      if (other.tag == v.tag) throw Error("duplicate model tag '" + v.tag + "'");
    }
    v.shape.kind = kge::parse_kind(m["kind"].get<std::string>());
    v.shape.dim = detail::get_count<std::size_t>(m["dim"], key + ".dim");
    v.shape.group_size = detail::get_count<std::size_t>(m["group_size"], key + ".group_size");
    v.shape.gamma = detail::get_real(m["gamma"], key + ".gamma");
    if (v.shape.kind == kge::ModelKind::kNote && v.shape.dim % v.shape.group_size != 0) {
      throw Error("config key '" + key + ".dim' must be divisible by group_size");
    }
    v.init_mode = kge::parse_init_mode(m["init"]["mode"].get<std::string>());
    v.projection = m["init"]["projection"].get<bool>();
    const auto act = m["init"]["activation"].get<std::string>();
    if (act != "none" && act != "relu") {
      throw Error("config key '" + key + ".init.activation' must be none or relu");
    }
    v.activation = act == "relu" ? kge::Activation::kRelu : kge::Activation::kNone;
    if (v.init_mode != kge::InitMode::kRandom && c.dataset.entity_features.empty()) {
      throw Error("config key '" + key + ".init.mode' requires dataset.entity_features");
    }
    if (v.projection && v.init_mode == kge::InitMode::kRandom) {
      throw Error("config key '" + key + ".init.projection' requires a feature init mode");
    }
    const auto& t = m["train"];
    v.train.batch_size = detail::get_count<std::size_t>(t["batch_size"], key + ".train.batch_size");
    v.train.negative_sample_size =
        detail::get_count<std::size_t>(t["negative_sample_size"], key + ".train.negative_sample_size");
    v.train.learning_rate = detail::get_real(t["learning_rate"], key + ".train.learning_rate");
    v.train.lr_decay_step = detail::get_count<std::size_t>(t["lr_decay_step"], key + ".train.lr_decay_step");
    v.train.lr_decay_factor = detail::get_real(t["lr_decay_factor"], key + ".train.lr_decay_factor");
    v.train.regularization = detail::get_real(t["regularization"], key + ".train.regularization");
    v.train.encoder_learning_rate =
        detail::get_real(t["encoder_learning_rate"], key + ".train.encoder_learning_rate");
    v.train.max_steps = detail::get_count<std::size_t>(t["max_steps"], key + ".train.max_steps");
    v.train.adversarial_temperature =
        detail::get_real(t["adversarial_temperature"], key + ".train.adversarial_temperature");
    v.train.loss = kge::parse_loss(t["loss"].get<std::string>());
    v.train.num_threads = detail::get_count<std::size_t>(t["num_threads"], key + ".train.num_threads");
    v.train.seed = kgc::detail::mix_seed(c.seed, fnv1a(v.tag));
    try {
      v.train.validate();
    } catch (const Error& err) {
      throw Error("config key '" + key + ".train': " + err.what());
    }
    c.models.push_back(std::move(v));
  }

  const auto& rr = cfg["rerank"];
  c.rerank.grid_step = detail::get_real(rr["grid_step"], "rerank.grid_step");
  if (!(c.rerank.grid_step > 0 && c.rerank.grid_step <= 1)) {
    throw Error("config key 'rerank.grid_step' must lie in (0, 1]");
  }
  c.rerank.normalization = parse_normalization(rr["normalization"].get<std::string>());
  c.rerank.grid_budget = detail::get_count<std::size_t>(rr["grid_budget"], "rerank.grid_budget");
  c.rerank.max_models = detail::get_count<std::size_t>(rr["max_models"], "rerank.max_models");
  c.rerank.direct_ensemble = rr["direct_ensemble"].get<bool>();

  c.resolved = std::move(cfg);
  c.hash = fnv1a(c.resolved.dump());
  return c;
}

inline PipelineConfig validate_config(const fs::path& path, const ConfigOverrides& ov = {}) {
  if (!fs::is_regular_file(path)) throw Error("config file not found: " + path.string());
  return parse_config(read_file(path), fs::absolute(path).parent_path(), ov);
}

}  // namespace kgc::pipeline
