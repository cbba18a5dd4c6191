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

// Mixed divided differences of 1 / P(x) for a polynomial P that is affine in
// each variable, evaluated without subtracting nearly equal numbers.
//
// For a step h_k > 0 the operator is d_k f = (f|_{x_k=h_k} - f|_{x_k=0}) / h_k;
// for h_k = 0 it is the partial derivative. Because every factor stays
// affine in the variable being differenced,
//   d_k p     = dp/dx_k
//   d_k (1/p) = -(dp/dx_k) / (p|_{x_k=0} p|_{x_k=h_k})
// and the product rule d_k(fg) = (d_k f) g|_{x_k=h_k} + f|_{x_k=0} d_k g holds
// exactly. Applying these symbolically leaves only O(1) products.

#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dlcz/linalg.hpp"

namespace dlcz {

/// Polynomial of degree <= 1 in each of r variables; coefficient of
/// prod_{k in U} x_k stored at index U (bit mask).
struct MultilinearPoly {
  std::vector<cplx> coeff;

  static MultilinearPoly zero(int vars) { return {std::vector<cplx>(std::size_t{1} << vars, cplx{})}; }

  bool is_zero() const {
    for (const auto& c : coeff) {
      if (c != cplx{}) return false;
    }
    return true;
  }

  MultilinearPoly derivative(int k) const {
    MultilinearPoly d{std::vector<cplx>(coeff.size(), cplx{})};
    const std::size_t bit = std::size_t{1} << k;
    for (std::size_t u = 0; u < coeff.size(); ++u) {
      if ((u & bit) == 0) d.coeff[u] = coeff[u | bit];
    }
    return d;
  }

  MultilinearPoly fix(int k, double value) const {
    MultilinearPoly f{std::vector<cplx>(coeff.size(), cplx{})};
    const std::size_t bit = std::size_t{1} << k;
    for (std::size_t u = 0; u < coeff.size(); ++u) {
      if ((u & bit) == 0) f.coeff[u] = coeff[u] + value * coeff[u | bit];
    }
    return f;
  }
};

/// Applies d_0 d_1 ... d_{r-1} to 1 / P and returns the resulting constant.
inline cplx divided_difference_of_reciprocal(const MultilinearPoly& p, const std::vector<double>& steps) {
  const int r = static_cast<int>(steps.size());
  if (p.coeff.size() != (std::size_t{1} << r)) throw std::invalid_argument("polynomial/step size mismatch");
  for (double h : steps) {
    if (!(h >= 0.0)) throw std::invalid_argument("difference steps must be non-negative");
  }

  struct Factor {
    bool reciprocal;
    MultilinearPoly poly;
  };
  struct Product {
    cplx scale;
    std::vector<Factor> factors;
  };

  std::vector<Product> current{{cplx{1.0, 0.0}, {{true, p}}}};
  for (int k = 0; k < r; ++k) {
    const double h = steps[static_cast<std::size_t>(k)];
    std::vector<Product> next;
    for (const auto& prod : current) {
      for (std::size_t i = 0; i < prod.factors.size(); ++i) {
        const MultilinearPoly dp = prod.factors[i].poly.derivative(k);
        if (dp.is_zero()) continue;
        Product np{prod.scale, {}};
        np.factors.reserve(prod.factors.size() + 2);
        for (std::size_t j = 0; j < i; ++j) {
          np.factors.push_back({prod.factors[j].reciprocal, prod.factors[j].poly.fix(k, 0.0)});
        }
        if (prod.factors[i].reciprocal) {
          np.scale = -np.scale;
          np.factors.push_back({false, dp});
          np.factors.push_back({true, prod.factors[i].poly.fix(k, 0.0)});
          np.factors.push_back({true, prod.factors[i].poly.fix(k, h)});
        } else {
          np.factors.push_back({false, dp});
        }
        for (std::size_t j = i + 1; j < prod.factors.size(); ++j) {
          np.factors.push_back({prod.factors[j].reciprocal, prod.factors[j].poly.fix(k, h)});
        }
        next.push_back(std::move(np));
      }
    }
    current = std::move(next);
  }

  cplx total{0.0, 0.0};
  for (const auto& prod : current) {
    cplx v = prod.scale;
    for (const auto& f : prod.factors) {
      const cplx c = f.poly.coeff[0];
      if (f.reciprocal) {
        if (c == cplx{}) throw NumericalError("divided difference hit a zero denominator");
        v /= c;
      } else {
        v *= c;
      }
    }
    total += v;
  }
  return total;
}

/// det(I + diag(x) M) as a multilinear polynomial: the coefficient of x^T is
/// the principal minor det(M_TT).
inline MultilinearPoly principal_minor_polynomial(const CMatrix& m) {
  const auto r = static_cast<int>(m.rows());
  MultilinearPoly p = MultilinearPoly::zero(r);
  for (std::size_t u = 0; u < p.coeff.size(); ++u) {
    const int size = std::popcount(u);
    if (size == 0) {
      p.coeff[u] = 1.0;
      continue;
    }
    CMatrix sub(size, size);
    std::vector<Eigen::Index> idx;
    for (int k = 0; k < r; ++k) {
      if (u & (std::size_t{1} << k)) idx.push_back(k);
    }
    for (int a = 0; a < size; ++a) {
      for (int b = 0; b < size; ++b) sub(a, b) = m(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    p.coeff[u] = sub.determinant();
  }
  return p;
}

}  // namespace dlcz
