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

#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "kgc/kge/init.hpp"
#include "kgc/kge/model.hpp"
#include "kgc/kge/train.hpp"
#include "gradient_check.hpp"
#include "test_util.hpp"

namespace kgc::kge {
namespace {

template <class Real>
KgeModel<Real> blank_model(ModelKind kind, std::size_t ne, std::size_t nr,
                           std::size_t dim, std::size_t group = 2) {
  KgeModel<Real> m;
  m.kind = kind;
  m.num_entities = ne;
  m.num_relations = nr;
  m.dim = dim;
  m.group_size = group;
  m.entity.assign(ne * m.entity_width(), Real(0));
  m.relation.assign(nr * m.relation_width(), Real(0));
  return m;
}

void fill_random(std::vector<double>& v, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& x : v) x = dist(rng);
}

TEST(TransE, ExactTranslation) {
  auto m = blank_model<double>(ModelKind::kTransE, 2, 1, 2);
  m.entity = {1, 0, 1, 1};
  m.relation = {0, 1};
  EXPECT_EQ(score_transe(m, 0, 0, 1), 3.0);
  m.relation = {0, 0};
  EXPECT_EQ(score_transe(m, 0, 0, 0), 3.0);
}

TEST(TransE, MatchesArithmetic) {
  std::mt19937_64 rng(1);
  auto m = blank_model<double>(ModelKind::kTransE, 3, 2, 5);
  fill_random(m.entity, rng);
  fill_random(m.relation, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double d = m.entity[5 + i] + m.relation[5 + i] - m.entity[10 + i];
    s += d * d;
  }
  EXPECT_NEAR(score_transe(m, 1, 1, 2), 3.0 - std::sqrt(s), 1e-12);
  EXPECT_THROW(score_complex(m, 1, 1, 2), Error);
}

TEST(ComplEx, HandValues) {
  auto m = blank_model<double>(ModelKind::kComplEx, 2, 1, 1);
  m.entity = {2, 0, 3, 0};
  m.relation = {1, 0};
  EXPECT_EQ(score_complex(m, 0, 0, 1), 6.0);
  m.relation = {0, 1};
  EXPECT_EQ(score_complex(m, 0, 0, 1), 0.0);
  EXPECT_THROW(score_note(m, 0, 0, 1), Error);
}

TEST(ComplEx, MatchesStdComplex) {
  std::mt19937_64 rng(2);
  auto m = blank_model<double>(ModelKind::kComplEx, 3, 2, 6);
  fill_random(m.entity, rng);
  fill_random(m.relation, rng);
  auto c = [](std::span<const double> row, std::size_t i) {
    return std::complex<double>(row[i], row[row.size() / 2 + i]);
  };
  std::complex<double> sum = 0.0;
  auto h = m.entity_row(0), t = m.entity_row(2);
  auto w = m.relation_row(1);
  for (std::size_t i = 0; i < 6; ++i) sum += c(w, i) * c(h, i) * std::conj(c(t, i));
  EXPECT_NEAR(score_complex(m, 0, 1, 2), sum.real(), 1e-12);
}

TEST(ComplEx, RealRelationIsSymmetric) {
  std::mt19937_64 rng(3);
  auto m = blank_model<double>(ModelKind::kComplEx, 4, 1, 5);
  fill_random(m.entity, rng);
  fill_random(m.relation, rng);
  for (std::size_t i = 5; i < 10; ++i) m.relation[i] = 0.0;
  for (EntityId h = 0; h < 4; ++h) {
    for (EntityId t = 0; t < 4; ++t) {
      EXPECT_EQ(score_complex(m, h, 0, t), score_complex(m, t, 0, h));
    }
  }
}

TEST(ComplEx, ImaginaryRelationIsAntisymmetric) {
  auto m = blank_model<double>(ModelKind::kComplEx, 2, 1, 1);
  m.entity = {1, 0, 0, 1};  // h = 1, t = i
  m.relation = {0, 1};      // w = i
  // Re(i * 1 * conj(i)) = 1, Re(i * i * conj(1)) = -1.
  EXPECT_EQ(score_complex(m, 0, 0, 1), 1.0);
  EXPECT_EQ(score_complex(m, 1, 0, 0), -1.0);
}

TEST(Note, IdentityBlocksGiveGamma) {
  auto m = blank_model<double>(ModelKind::kNote, 2, 1, 4, 2);
  auto row = m.relation_row(0);
  for (std::size_t i = 0; i < 2; ++i) row[i * 4] = row[i * 4 + 3] = 1.0;
  m.entity = {0.3, -1, 2, 0.5, 0.3, -1, 2, 0.5};
  EXPECT_NEAR(score_note(m, 0, 0, 1), 3.0, 1e-12);
  EXPECT_NEAR(score_note(m, 0, 0, 1, NoteDirection::kTailToHead), 3.0, 1e-12);
}

TEST(Note, HandComputedGroup) {
  auto m = blank_model<double>(ModelKind::kNote, 2, 1, 2, 2);
  // M = [[1, 2], [1, 0]], s = (0.3, -0.2).
  m.relation = {1, 2, 1, 0, 0.3, -0.2};
  m.entity = {1, 2, 0.5, -1};
  // Columns (1,1) and (2,0) orthonormalize to (1,1)/r2 and (1,-1)/r2.
  const double r2 = std::sqrt(2.0);
  const double qh0 = (1 + 2) / r2, qh1 = (1 - 2) / r2;
  // Spectral norm of diag(exp(s)) is its largest entry.
  double eh0 = std::exp(0.3), eh1 = std::exp(-0.2), nh = std::max(eh0, eh1);
  double d0 = eh0 / nh * qh0 - 0.5, d1 = eh1 / nh * qh1 + 1;
  EXPECT_NEAR(score_note(m, 0, 0, 1), 3.0 - std::sqrt(d0 * d0 + d1 * d1), 1e-12);
  // Tail to head: Q^T t with exp(-s) scales. Q is symmetric here.
  const double qt0 = (0.5 - 1) / r2, qt1 = (0.5 + 1) / r2;
  double et0 = std::exp(-0.3), et1 = std::exp(0.2), nt = std::max(et0, et1);
  double u0 = et0 / nt * qt0 - 1, u1 = et1 / nt * qt1 - 2;
  EXPECT_NEAR(score_note(m, 0, 0, 1, NoteDirection::kTailToHead),
              3.0 - std::sqrt(u0 * u0 + u1 * u1), 1e-12);
}

TEST(Note, OrthogonalTailSatisfiesBothDirections) {
  std::mt19937_64 rng(4);
  auto m = blank_model<double>(ModelKind::kNote, 2, 1, 6, 3);
  std::vector<double> blocks(2 * 9);
  fill_random(blocks, rng);
  std::copy(blocks.begin(), blocks.end(), m.relation.begin());
  std::vector<double> h(6);
  fill_random(h, rng);
  std::copy(h.begin(), h.end(), m.entity.begin());
  // e_t = phi(M) e_h per group.
  for (std::size_t i = 0; i < 2; ++i) {
    auto q = gram_schmidt<double>(std::span<const double>(blocks.data() + 9 * i, 9), 3);
    for (std::size_t a = 0; a < 3; ++a) {
      double v = 0.0;
      for (std::size_t b = 0; b < 3; ++b) v += q[a * 3 + b] * h[3 * i + b];
      m.entity[6 + 3 * i + a] = v;
    }
  }
  EXPECT_NEAR(score_note(m, 0, 0, 1), 3.0, 1e-10);
  EXPECT_NEAR(score_note(m, 0, 0, 1, NoteDirection::kTailToHead), 3.0, 1e-10);
}

TEST(Note, NormalizedScalesHaveUnitSpectralNorm) {
  std::mt19937_64 rng(5);
  std::vector<double> row(3 * 16 + 12);
  fill_random(row, rng, 3.0);
  NoteRelation<double> rel(row, 12, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    double mh = 0.0, mt = 0.0;
    for (std::size_t k = 4 * i; k < 4 * i + 4; ++k) {
      mh = std::max(mh, rel.scale_head[k]);
      mt = std::max(mt, rel.scale_tail[k]);
      EXPECT_GT(rel.scale_head[k], 0.0);
    }
    EXPECT_EQ(mh, 1.0);
    EXPECT_EQ(mt, 1.0);
  }
}

TEST(Note, ScaleIsInvariantToShiftingS) {
  std::mt19937_64 rng(6);
  std::vector<double> row(3 * 16 + 12);
  fill_random(row, rng);
  auto shifted = row;
  for (std::size_t k = 3 * 16; k < shifted.size(); ++k) shifted[k] += 0.75;
  NoteRelation<double> a(row, 12, 4), b(shifted, 12, 4);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_NEAR(a.scale_head[k], b.scale_head[k], 1e-12);
    EXPECT_NEAR(a.scale_tail[k], b.scale_tail[k], 1e-12);
  }
}

TEST(Note, IndivisibleDimIsRejected) {
  auto kg = testing::make_graph({{0, 0, 1}}, 2, 1);
  EXPECT_THROW(make_model<float>({ModelKind::kNote, 10, 3, 3.0}, kg, {}, 1), Error);
}

TEST(Predict, RanksTranslationTargetFirst) {
  std::mt19937_64 rng(6);
  auto m = blank_model<double>(ModelKind::kTransE, 5, 1, 3);
  fill_random(m.entity, rng);
  fill_random(m.relation, rng);
  for (std::size_t i = 0; i < 3; ++i) m.entity[9 + i] = m.entity[i] + m.relation[i];
  CandidateList cands;
  cands.cap = 10;
  for (EntityId e : {1u, 2u, 3u, 4u}) cands.entries.push_back({e, 1.0, 0.25 * e, "HT"});
  auto out = predict(m, 0, 0, cands);
  EXPECT_EQ(out.entries[0].entity, 3u);
  EXPECT_EQ(out.entries[0].retrieval_score, 0.75);
  for (const auto& c : out.entries) {
    EXPECT_EQ(c.score, score_transe(m, 0, 0, c.entity));
    EXPECT_EQ(c.source, "HT");
  }
  CandidateList single;
  single.entries.push_back({2, 0.0, 0.0, "PIE"});
  EXPECT_EQ(predict(m, 0, 0, single).entries.size(), 1u);
}

TEST(Predict, MatchesPerTripleScores) {
  auto kg = testing::make_graph({{0, 0, 1}, {1, 1, 2}, {2, 0, 3}}, 6, 2);
  for (auto kind : {ModelKind::kTransE, ModelKind::kComplEx, ModelKind::kNote}) {
    auto m = make_model<float>({kind, 4, 2, 3.0}, kg, {}, 7);
    CandidateList cands;
    for (EntityId e = 0; e < 6; ++e) cands.entries.push_back({e, 0.0, 0.0, "x"});
    auto out = predict(m, 1, 1, cands);
    for (const auto& c : out.entries) {
      EXPECT_EQ(c.score, static_cast<double>(score(m, 1, 1, c.entity)));
    }
  }
}

TEST(NeighborEnhanced, SumsDistinctNeighbors) {
  // 0 -> 1, 2 -> 0, 3 isolated, 0 -> 1 repeated under another relation.
  auto kg = testing::make_graph({{0, 0, 1}, {2, 0, 0}, {0, 1, 1}}, 4, 2);
  FeatureMatrix f{4, 2, {1, 2, 10, 20, 100, 200, 7, 7}};
  auto out = neighbor_enhanced_init(kg, f);
  EXPECT_EQ(out.row(1)[0], 1.0f);
  EXPECT_EQ(out.row(1)[1], 2.0f);
  EXPECT_EQ(out.row(0)[0], 110.0f);
  EXPECT_EQ(out.row(0)[1], 220.0f);
  EXPECT_EQ(out.row(3)[0], 0.0f);
  EXPECT_EQ(out.row(3)[1], 0.0f);
}

TEST(NeighborEnhanced, MatchesSummationOracleAndIgnoresOrder) {
  std::mt19937_64 rng(8);
  auto triples = testing::random_triples({20, 3, 60}, rng);
  FeatureMatrix f{20, 3, {}};
  std::normal_distribution<float> dist;
  for (int i = 0; i < 60; ++i) f.data.push_back(dist(rng));
  auto a = neighbor_enhanced_init(testing::make_graph(triples, 20, 3), f);
  std::shuffle(triples.begin(), triples.end(), rng);
  auto b = neighbor_enhanced_init(testing::make_graph(triples, 20, 3), f);
  EXPECT_EQ(a.data, b.data);
  for (EntityId x = 0; x < 20; ++x) {
    std::set<EntityId> nbrs;
    for (const auto& t : triples) {
      if (t.h == x) nbrs.insert(t.t);
      if (t.t == x) nbrs.insert(t.h);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      double want = 0.0;
      for (auto n : nbrs) want += f.row(n)[j];
      EXPECT_NEAR(a.row(x)[j], want, 1e-5);
    }
  }
}

TEST(MakeModel, InitModes) {
  auto kg = testing::make_graph({{0, 0, 1}, {1, 0, 2}}, 3, 1);
  auto f = std::make_shared<FeatureMatrix>(FeatureMatrix{3, 2, {1, 2, 3, 4, 5, 6}});
  auto feat = make_model<float>({ModelKind::kTransE, 2, 2, 3.0}, kg,
                                {InitMode::kFeature, f, false, Activation::kNone}, 1);
  EXPECT_EQ(feat.entity, f->data);
  auto nb = make_model<float>({ModelKind::kTransE, 2, 2, 3.0}, kg,
                              {InitMode::kNeighborEnhanced, f, false, Activation::kNone}, 1);
  EXPECT_EQ(nb.entity, (std::vector<float>{3, 4, 6, 8, 3, 4}));
  EXPECT_THROW(make_model<float>({ModelKind::kTransE, 3, 2, 3.0}, kg,
                                 {InitMode::kFeature, f, false, Activation::kNone}, 1),
               Error);
  EXPECT_THROW(make_model<float>({ModelKind::kTransE, 2, 2, 3.0}, kg,
                                 {InitMode::kFeature, nullptr, false, Activation::kNone}, 1),
               Error);
  auto proj = make_model<float>({ModelKind::kComplEx, 4, 2, 3.0}, kg,
                                {InitMode::kFeature, f, true, Activation::kRelu}, 1);
  ASSERT_TRUE(proj.projection.has_value());
  EXPECT_EQ(proj.projection->weight.size(), 8u * (2u + 8u));
  EXPECT_EQ(entity_representation(proj, 0).size(), 8u);
}

// ---- gradient checks --------------------------------------------------------

struct GradCase {
  ModelKind kind;
  LossKind loss;
  bool projection;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto p = GetParam();
  for (std::uint64_t seed : {99u, 100u, 101u}) {
    auto res = testing::gradient_check(p.kind, p.loss, p.projection, seed);
    EXPECT_GT(res.checked, 0u);
    EXPECT_EQ(res.failures, 0u) << "seed " << seed << ": " << res.first_failure;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllKinds, GradientCheck,
    ::testing::Values(GradCase{ModelKind::kTransE, LossKind::kSelfAdversarial, false},
                      GradCase{ModelKind::kComplEx, LossKind::kSelfAdversarial, false},
                      GradCase{ModelKind::kNote, LossKind::kSelfAdversarial, false},
                      GradCase{ModelKind::kTransE, LossKind::kMarginRanking, false},
                      GradCase{ModelKind::kNote, LossKind::kMarginRanking, false},
                      GradCase{ModelKind::kTransE, LossKind::kSelfAdversarial, true},
                      GradCase{ModelKind::kComplEx, LossKind::kSelfAdversarial, true},
                      GradCase{ModelKind::kNote, LossKind::kSelfAdversarial, true}),
    [](const auto& info) {
      return std::string(kind_name(info.param.kind)) + "_" +
             std::string(loss_name(info.param.loss)) +
             (info.param.projection ? "_projected" : "");
    });

}  // namespace
}  // namespace kgc::kge
