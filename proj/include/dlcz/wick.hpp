// Copyright 2026 The dlcz-repeater Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dlcz/linalg.hpp"

namespace dlcz {

/// Largest number of quadratic forms accepted by a single Wick evaluation.
inline constexpr std::size_t kMaxWickForms = 14;

/// E[prod_k z^H A_k z] for a circular complex Gaussian z with covariance C.
///
/// Equals the sum over permutations sigma of S_m of the product over the
/// cycles (k1 ... kr) of sigma of tr(A_k1 C A_k2 C ... A_kr C). The sum is
/// organised over subsets: P[U] is the sum of all path products starting at
/// min(U) and covering U, so the cycles through min(U) sum to tr(P[U]), and
/// W(S) = sum_{U subset S, min S in U} tr(P[U]) W(S \ U).
/// Cost is O(2^m m n^3 + 3^m) instead of O(m! m n^3).
inline cplx wick_expectation(const CMatrix& cov, std::span<const CMatrix> forms) {
  const std::size_t m = forms.size();
  if (m == 0) return {1.0, 0.0};
  if (m > kMaxWickForms) throw std::invalid_argument("too many quadratic forms for Wick evaluation");
  const auto n = cov.rows();
  if (cov.cols() != n) throw std::invalid_argument("covariance must be square");
  for (const auto& a : forms) {
    if (a.rows() != n || a.cols() != n) throw std::invalid_argument("form dimension mismatch");
  }
  if (n == 0) return {0.0, 0.0};

  std::vector<CMatrix> ac(m);
  for (std::size_t k = 0; k < m; ++k) ac[k] = forms[k] * cov;

  const std::uint32_t full = (1u << m) - 1u;
  std::vector<CMatrix> paths(full + 1u);
  std::vector<cplx> cyc(full + 1u, cplx{0.0, 0.0});
  for (std::uint32_t u = 1; u <= full; ++u) {
    const int start = std::countr_zero(u);
    if ((u & (u - 1u)) == 0u) {
      paths[u] = ac[start];
    } else {
      CMatrix acc = CMatrix::Zero(n, n);
      for (std::uint32_t rest = u & ~(1u << start); rest != 0u; rest &= rest - 1u) {
        const int e = std::countr_zero(rest);
        acc.noalias() += paths[u & ~(1u << e)] * ac[e];
      }
      paths[u] = std::move(acc);
    }
    cyc[u] = paths[u].trace();
  }

  std::vector<cplx> w(full + 1u, cplx{0.0, 0.0});
  w[0] = 1.0;
  for (std::uint32_t s = 1; s <= full; ++s) {
    const std::uint32_t low = s & (~s + 1u);
    const std::uint32_t others = s & ~low;
    cplx total{0.0, 0.0};
    // enumerate subsets of `others`; U = low | sub
    for (std::uint32_t sub = others;; sub = (sub - 1u) & others) {
      const std::uint32_t u = low | sub;
      total += cyc[u] * w[s & ~u];
      if (sub == 0u) break;
    }
    w[s] = total;
  }
  return w[full];
}

inline cplx wick_expectation(const CMatrix& cov, const std::vector<CMatrix>& forms) {
  return wick_expectation(cov, std::span<const CMatrix>(forms.data(), forms.size()));
}

}  // namespace dlcz
