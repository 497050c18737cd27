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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "kgc/common.hpp"

namespace kgc::kge {

inline constexpr double kRankTolerance = 1e-8;

// Modified Gram-Schmidt on the columns of a row-major n x n block, keeping
// the intermediate vectors so that gradients can be pulled back through the
// orthogonalization.
template <class Real>
class GramSchmidt {
 public:
  // Accumulates in double whatever Real is; float loses orthogonality
  // roughly as eps * cond(M) otherwise.
  GramSchmidt(std::span<const Real> m, std::size_t n) : n_(n) {
    if (m.size() != n * n) throw Error("Gram-Schmidt input must be square");
    qd_.assign(n * n, 0.0);
    norms_.resize(n);
    coeffs_.resize(n * n, 0.0);
    steps_.resize(n);
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t a = 0; a < n; ++a) v[a] = static_cast<double>(m[a * n + j]);
      steps_[j].reserve(j * n);
      for (std::size_t k = 0; k < j; ++k) {
        steps_[j].insert(steps_[j].end(), v.begin(), v.end());
        double c = 0;
        for (std::size_t a = 0; a < n; ++a) c += qd_[a * n + k] * v[a];
        coeffs_[j * n + k] = c;
        for (std::size_t a = 0; a < n; ++a) v[a] -= c * qd_[a * n + k];
      }
      double norm = 0;
      for (auto x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (!(norm >= kRankTolerance)) {
        throw Error("rank-deficient block: column " + std::to_string(j) +
                    " has residual norm below tolerance");
      }
      norms_[j] = norm;
      for (std::size_t a = 0; a < n; ++a) qd_[a * n + j] = v[a] / norm;
    }
    q_.assign(qd_.begin(), qd_.end());
  }

  std::size_t size() const { return n_; }

  // Row-major n x n with orthonormal columns.
  const std::vector<Real>& q() const { return q_; }

  // Given dL/dQ (row-major), returns dL/dM.
  std::vector<Real> backward(std::span<const Real> dq_in) const {
    const auto n = n_;
    std::vector<double> dq(dq_in.begin(), dq_in.end());
    std::vector<Real> dm(n * n, Real(0));
    std::vector<double> dv(n);
    for (std::size_t jj = n; jj-- > 0;) {
      double proj = 0;
      for (std::size_t a = 0; a < n; ++a) proj += qd_[a * n + jj] * dq[a * n + jj];
      for (std::size_t a = 0; a < n; ++a) {
        dv[a] = (dq[a * n + jj] - qd_[a * n + jj] * proj) / norms_[jj];
      }
      for (std::size_t k = jj; k-- > 0;) {
        const double* vk = steps_[jj].data() + k * n;
        const double c = coeffs_[jj * n + k];
        double dc = 0;
        for (std::size_t a = 0; a < n; ++a) dc -= qd_[a * n + k] * dv[a];
        for (std::size_t a = 0; a < n; ++a) {
          dq[a * n + k] += -c * dv[a] + dc * vk[a];
          dv[a] += dc * qd_[a * n + k];
        }
      }
      for (std::size_t a = 0; a < n; ++a) dm[a * n + jj] = static_cast<Real>(dv[a]);
    }
    return dm;
  }

 private:
  std::size_t n_;
  std::vector<Real> q_;
  std::vector<double> qd_;
  std::vector<double> norms_;
  std::vector<double> coeffs_;               // [j][k] = <q_k, v before step k>
  std::vector<std::vector<double>> steps_;   // [j] = v before each step k < j
};

template <class Real>
std::vector<Real> gram_schmidt(std::span<const Real> m, std::size_t n) {
  return GramSchmidt<Real>(m, n).q();
}

}  // namespace kgc::kge
