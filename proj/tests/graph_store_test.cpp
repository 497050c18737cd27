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
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "kgc/graph_store.hpp"
#include "test_util.hpp"

namespace kgc {
namespace {

using testing::TempDir;
using testing::write_text;

TEST(IngestTriples, BuildsAdjacency) {
  TempDir dir;
  auto path = write_text(dir / "g.txt", "0 0 1\n1 0 2\n");
  auto kg = ingest_triples(path, 3, 1);
  EXPECT_EQ(kg.num_triples(), 2u);
  EXPECT_EQ(kg.out_edges(0).size(), 1u);
  EXPECT_EQ(kg.degree(1), 2u);
  EXPECT_EQ(kg.relation_frequency(0), 2u);
}

TEST(IngestTriples, SkipsComments) {
  TempDir dir;
  auto path = write_text(dir / "g.txt", "# header\n0 0 1\n\n# tail\n");
  EXPECT_EQ(ingest_triples(path, 2, 1).num_triples(), 1u);
}

TEST(IngestTriples, EmptyFileIsAnError) {
  TempDir dir;
  auto path = write_text(dir / "g.txt", "");
  try {
    ingest_triples(path, 3, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty file"), std::string::npos);
  }
}

TEST(IngestTriples, OutOfRangeNamesLine) {
  TempDir dir;
  auto path = write_text(dir / "g.txt", "5 0 1\n");
  try {
    ingest_triples(path, 3, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("id out of range at line 1"), std::string::npos);
  }
}

TEST(IngestTriples, MalformedLineNamesLine) {
  TempDir dir;
  auto path = write_text(dir / "g.txt", "0 0 1\n0 x 1\n");
  try {
    ingest_triples(path, 3, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  write_text(dir / "h.txt", "0 0\n");
  EXPECT_THROW(ingest_triples(dir / "h.txt", 3, 1), Error);
}

TEST(Neighbors, Directions) {
  auto kg = testing::make_graph({{0, 0, 1}}, 3, 1);
  EXPECT_EQ(neighbors(kg, 0, Direction::kOut), (std::vector<Edge>{{0, 1}}));
  EXPECT_TRUE(neighbors(kg, 2, Direction::kOut).empty());
  EXPECT_EQ(neighbors(kg, 1, Direction::kIn), (std::vector<Edge>{{0, 0}}));
}

TEST(Neighbors, BothMergesDirections) {
  auto kg = testing::make_graph({{0, 0, 1}, {2, 1, 0}}, 3, 2);
  // Oracle: enumerate the triple list for edges touching entity 0.
  std::vector<Edge> expected;
  for (const auto& t : kg.triples()) {
    if (t.h == 0) expected.push_back({t.r, t.t});
    if (t.t == 0) expected.push_back({t.r, t.h});
  }
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(neighbors(kg, 0, Direction::kBoth), expected);
  EXPECT_EQ(expected, (std::vector<Edge>{{0, 1}, {1, 2}}));
}

TEST(Neighbors, DeduplicatesRepeatedTriples) {
  auto kg = testing::make_graph({{0, 0, 1}, {0, 0, 1}}, 2, 1);
  EXPECT_EQ(kg.out_edges(0).size(), 2u);
  EXPECT_EQ(neighbors(kg, 0, Direction::kOut).size(), 1u);
}

TEST(Neighbors, RangeChecked) {
  auto kg = testing::make_graph({{0, 0, 1}}, 2, 1);
  EXPECT_THROW(neighbors(kg, 7, Direction::kOut), Error);
}

TEST(SampleNeighbors, UndersizedReturnsAll) {
  auto kg = testing::make_graph({{0, 0, 1}, {0, 0, 2}, {3, 0, 0}}, 4, 1);
  EXPECT_EQ(sample_neighbors(kg, 0, 10, 1), neighbors(kg, 0, Direction::kBoth));
}

TEST(SampleNeighbors, DeterministicDistinctMembers) {
  std::vector<Triple> star;
  for (EntityId i = 1; i <= 100; ++i) star.push_back({0, 0, i});
  auto kg = testing::make_graph(star, 101, 1);
  auto a = sample_neighbors(kg, 0, 6, 42);
  auto b = sample_neighbors(kg, 0, 6, 42);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 6u);
  auto all = neighbors(kg, 0, Direction::kBoth);
  std::set<Edge> distinct(a.begin(), a.end());
  EXPECT_EQ(distinct.size(), 6u);
  for (const auto& e : a) {
    EXPECT_TRUE(std::binary_search(all.begin(), all.end(), e));
  }
  EXPECT_THROW(sample_neighbors(kg, 0, 0, 1), Error);
}

TEST(KnowledgeGraphProperties, RandomGraphsSatisfyInvariants) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto triples = testing::random_triples({25, 5, 120}, rng);
    auto kg = testing::make_graph(triples, 25, 5);

    std::size_t out_sum = 0, in_sum = 0;
    for (EntityId e = 0; e < 25; ++e) {
      out_sum += kg.out_edges(e).size();
      in_sum += kg.in_edges(e).size();
      EXPECT_EQ(kg.degree(e), kg.out_edges(e).size() + kg.in_edges(e).size());
      EXPECT_TRUE(std::is_sorted(kg.out_edges(e).begin(), kg.out_edges(e).end()));
      EXPECT_TRUE(std::is_sorted(kg.in_edges(e).begin(), kg.in_edges(e).end()));
    }
    EXPECT_EQ(out_sum, kg.num_triples());
    EXPECT_EQ(in_sum, kg.num_triples());

    for (const auto& t : triples) {
      auto out = kg.out_edges(t.h);
      auto in = kg.in_edges(t.t);
      EXPECT_TRUE(std::binary_search(out.begin(), out.end(), Edge{t.r, t.t}));
      EXPECT_TRUE(std::binary_search(in.begin(), in.end(), Edge{t.r, t.h}));
    }

    auto shuffled = triples;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto kg2 = testing::make_graph(shuffled, 25, 5);
    for (EntityId e = 0; e < 25; ++e) {
      EXPECT_TRUE(std::ranges::equal(kg.out_edges(e), kg2.out_edges(e)));
      EXPECT_TRUE(std::ranges::equal(kg.in_edges(e), kg2.in_edges(e)));
    }
  }
}

TEST(Vocab, LineNumberIsId) {
  TempDir dir;
  auto path = write_text(dir / "v.txt", "alpha\nbeta\r\n");
  EXPECT_EQ(read_vocab(path), (std::vector<std::string>{"alpha", "beta"}));
}

}  // namespace
}  // namespace kgc
