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

#include <random>

#include <gtest/gtest.h>

#include "kgc/kge/gram_schmidt.hpp"

namespace kgc::kge {
namespace {

std::vector<double> random_block(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> m(n * n);
  for (auto& x : m) x = dist(rng);
  return m;
}

// (A^T B)[i][j] for row-major n x n matrices.
double at_b(const std::vector<double>& a, const std::vector<double>& b,
            std::size_t n, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k * n + i] * b[k * n + j];
  return s;
}

TEST(GramSchmidt, IdentityIsFixed) {
  std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(gram_schmidt<double>(eye, 3), eye);
}

TEST(GramSchmidt, DiagonalScalingIsRemoved) {
  std::vector<double> m{2, 0, 0, 3};
  EXPECT_EQ(gram_schmidt<double>(m, 2), (std::vector<double>{1, 0, 0, 1}));
}

TEST(GramSchmidt, RandomBlockIsOrthonormal) {
  auto m = random_block(20, 3);
  auto q = gram_schmidt<double>(m, 20);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 20; ++j) {
      EXPECT_NEAR(at_b(q, q, 20, i, j), i == j ? 1.0 : 0.0, 1e-5);
    }
  }
}

TEST(GramSchmidt, FloatBlocksAreOrthonormal) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto md = random_block(20, seed);
    std::vector<float> m(md.begin(), md.end());
    auto q = gram_schmidt<float>(m, 20);
    std::vector<double> qd(q.begin(), q.end());
    for (std::size_t i = 0; i < 20; ++i) {
      for (std::size_t j = 0; j < 20; ++j) {
        EXPECT_NEAR(at_b(qd, qd, 20, i, j), i == j ? 1.0 : 0.0, 1e-5) << "seed " << seed;
      }
    }
  }
}

TEST(GramSchmidt, SpanIsPreserved) {
  // Q^T M must be upper triangular: column j of M lies in span(q_0..q_j).
  auto m = random_block(6, 7);
  auto q = gram_schmidt<double>(m, 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < i; ++j) EXPECT_NEAR(at_b(q, m, 6, i, j), 0.0, 1e-10);
    EXPECT_GT(at_b(q, m, 6, i, i), 0.0);
  }
}

TEST(GramSchmidt, RankDeficientNamesColumn) {
  std::vector<double> m{1, 2, 2, 4};
  try {
    gram_schmidt<double>(m, 2);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(gram_schmidt<double>(std::vector<double>{1, 2, 3}, 2), Error);
}

TEST(GramSchmidt, BackwardMatchesFiniteDifferences) {
  const std::size_t n = 5;
  auto m = random_block(n, 11);
  auto g = random_block(n, 12);  // L = <G, Q>
  auto loss = [&](const std::vector<double>& x) {
    auto q = gram_schmidt<double>(x, n);
    double s = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) s += g[i] * q[i];
    return s;
  };
  auto dm = GramSchmidt<double>(m, n).backward(g);
  const double h = 1e-6;
  for (std::size_t i = 0; i < n * n; ++i) {
    auto plus = m, minus = m;
    plus[i] += h;
    minus[i] -= h;
    double fd = (loss(plus) - loss(minus)) / (2 * h);
    EXPECT_NEAR(dm[i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace
}  // namespace kgc::kge
