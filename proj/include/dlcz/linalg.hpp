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

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace dlcz {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Raised when a numerical precondition fails (singular Gaussian block,
/// non-real probability, degenerate normalization).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool is_hermitian(const CMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol || m.size() == 0;
}

inline CMatrix hermitize(const CMatrix& m) { return (m + m.adjoint()) * 0.5; }

/// Inverse and determinant of a Hermitian positive definite matrix.
/// Rejects blocks that are not positive definite, have det < 1e-300 or
/// condition number above 1e12.
struct PdInverse {
  CMatrix inverse;
  double det = 1.0;

  explicit PdInverse(const CMatrix& q) {
    const auto n = q.rows();
    if (n == 0) {
      inverse = CMatrix(0, 0);
      return;
    }
    CMatrix h = hermitize(q);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    const auto& ev = es.eigenvalues();
    const double lo = ev.minCoeff();
    const double hi = ev.maxCoeff();
    if (!(lo > 0.0)) throw NumericalError("Gaussian block is not positive definite");
    if (hi / lo > 1e12) throw NumericalError("Gaussian block is ill-conditioned");
    det = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) det *= ev(i);
    if (det < 1e-300) throw NumericalError("Gaussian block determinant underflow");
    inverse = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
  }
};

/// Returns the real part after checking the imaginary part is negligible.
inline double real_checked(cplx v, double tol = 1e-10, const char* what = "value") {
  if (std::abs(v.imag()) > tol * std::max(1.0, std::abs(v.real()))) {
    throw NumericalError(std::string(what) + " has non-negligible imaginary part " +
                         std::to_string(v.imag()));
  }
  return v.real();
}

}  // namespace dlcz
