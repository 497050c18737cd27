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

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/common.hpp"
#include "kgc/graph_store.hpp"
#include "kgc/rerank_ensemble.hpp"

namespace kgc::pipeline {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kManifestName = "manifest.json";

// First line of every text artifact.
inline std::string artifact_header(std::uint64_t config_hash) {
  return "# kgc format=" + std::to_string(kFormatVersion) + " config=" + hex64(config_hash) + "\n";
}

// Checks the header line and returns the remaining text.
inline std::string_view strip_header(std::string_view text, const std::filesystem::path& path,
                                     std::optional<std::uint64_t> config_hash = {}) {
  auto nl = text.find('\n');
  auto line = text.substr(0, nl);
  const std::string prefix = "# kgc format=" + std::to_string(kFormatVersion) + " config=";
  if (line.substr(0, prefix.size()) != prefix) {
    throw Error(path.string() + " is not a format " + std::to_string(kFormatVersion) +
                " kgc artifact");
  }
  if (config_hash && line.substr(prefix.size()) != hex64(*config_hash)) {
    throw Error(path.string() + " was produced by a different config");
  }
  return nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
}

struct Manifest {
  std::string stage;
  std::uint64_t config_hash = 0;
  std::uint64_t input_hash = 0;
  // File name -> FNV-1a of its bytes.
  std::map<std::string, std::uint64_t> outputs;

  std::string dump() const {
    nlohmann::json j;
    j["stage"] = stage;
    j["format"] = kFormatVersion;
    j["config"] = hex64(config_hash);
    j["input"] = hex64(input_hash);
    j["outputs"] = nlohmann::json::object();
    for (const auto& [name, h] : outputs) j["outputs"][name] = hex64(h);
    return j.dump(2) + "\n";
  }
};

namespace detail {

inline std::optional<std::uint64_t> parse_hex64(const nlohmann::json& j) {
  if (!j.is_string()) return std::nullopt;
  auto s = j.get<std::string>();
  if (s.size() != 16) return std::nullopt;
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// nullopt when the manifest is absent or unreadable.
inline std::optional<Manifest> load_manifest(const std::filesystem::path& dir) {
  auto path = dir / kManifestName;
  if (!std::filesystem::is_regular_file(path)) return std::nullopt;
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", 0) != kFormatVersion) {
    return std::nullopt;
  }
  Manifest m;
  m.stage = j.value("stage", "");
  auto ch = detail::parse_hex64(j.value("config", nlohmann::json()));
  auto ih = detail::parse_hex64(j.value("input", nlohmann::json()));
  if (!ch || !ih || !j.contains("outputs") || !j["outputs"].is_object()) return std::nullopt;
  m.config_hash = *ch;
  m.input_hash = *ih;
  for (auto it = j["outputs"].begin(); it != j["outputs"].end(); ++it) {
    auto h = detail::parse_hex64(it.value());
    if (!h) return std::nullopt;
    m.outputs[it.key()] = *h;
  }
  return m;
}

// Every listed output exists with the recorded hash.
inline bool outputs_intact(const std::filesystem::path& dir, const Manifest& m) {
  for (const auto& [name, h] : m.outputs) {
    auto path = dir / name;
    if (!std::filesystem::is_regular_file(path) || fnv1a(read_file(path)) != h) return false;
  }
  return true;
}

// Collects a stage's outputs; the manifest is written last by commit().
class StageWriter {
 public:
  StageWriter(std::filesystem::path dir, Manifest manifest)
      : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

  void write(const std::string& name, std::string_view bytes) {
    write_file_atomic(dir_ / name, bytes);
    manifest_.outputs[name] = fnv1a(bytes);
  }

  // Text artifact with the standard header line.
  void write_text(const std::string& name, std::string_view body) {
    write(name, artifact_header(manifest_.config_hash) + std::string(body));
  }

  void commit() const { write_file_atomic(dir_ / kManifestName, manifest_.dump()); }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  Manifest manifest_;
};

// Rows of a tab-separated artifact after the header line, '#' lines skipped.
inline std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path,
                                                      std::uint64_t config_hash) {
  auto text = read_file(path);
  auto body = strip_header(text, path, config_hash);
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    auto line = body.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> row;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      row.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double tsv_number(const std::string& field, const std::filesystem::path& path) {
  double v = 0.0;
  if (!parse_number(field, v)) throw Error("malformed number '" + field + "' in " + path.string());
  return v;
}

// Per-query model scores: "h r answer c1:s1 c2:s2 ..." in query order.
inline std::string format_scores(std::span<const RerankQuery> queries, const ModelScoreSet& set) {
  check_aligned(queries, set);
  std::string out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    out += std::to_string(query.head) + ' ' + std::to_string(query.relation) + ' ' +
           std::to_string(query.answer);
    for (std::size_t c = 0; c < query.candidates.size(); ++c) {
      out += ' ' + std::to_string(query.candidates[c]) + ':' + format_double(set.scores[q][c]);
    }
    out += '\n';
  }
  return out;
}

struct ScoreFile {
  std::vector<RerankQuery> queries;
  ModelScoreSet scores;
};

inline ScoreFile parse_scores(std::string_view body, const std::string& tag) {
  ScoreFile f;
  f.scores.tag = tag;
  std::size_t pos = 0, line_no = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    auto line = kgc::detail::trim(body.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto fields = kgc::detail::split_ws(line);
    auto bad = [&] { return Error("malformed score record at line " + std::to_string(line_no)); };
    RerankQuery q;
    if (fields.size() < 3 || !parse_number(fields[0], q.head) ||
        !parse_number(fields[1], q.relation) || !parse_number(fields[2], q.answer)) {
      throw bad();
    }
    std::vector<double> s;
    for (std::size_t i = 3; i < fields.size(); ++i) {
      auto colon = fields[i].find(':');
      EntityId e = 0;
      double v = 0.0;
      if (colon == std::string_view::npos || !parse_number(fields[i].substr(0, colon), e) ||
          !parse_number(fields[i].substr(colon + 1), v)) {
        throw bad();
      }
      q.candidates.push_back(e);
      s.push_back(v);
    }
    f.queries.push_back(std::move(q));
    f.scores.scores.push_back(std::move(s));
  }
  return f;
}

inline std::vector<Triple> parse_triple_text(std::string_view body, std::size_t num_entities,
                                             std::size_t num_relations) {
  std::vector<Triple> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    auto line = kgc::detail::trim(body.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto f = kgc::detail::split_ws(line);
    Triple t;
    if (f.size() != 3 || !parse_number(f[0], t.h) || !parse_number(f[1], t.r) ||
        !parse_number(f[2], t.t) || t.h >= num_entities || t.t >= num_entities ||
        t.r >= num_relations) {
      throw Error("malformed triple at line " + std::to_string(line_no));
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace kgc::pipeline
