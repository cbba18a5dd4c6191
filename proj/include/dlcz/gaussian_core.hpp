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

// Anti-normally ordered characteristic functions of the form
//
//   chi(z) = sum_t c_t exp(-z^H Q_t z) prod_k z^H P_tk z
//
// over labelled complex modes, together with exact moment integrals
//
//   int prod_i d^2 z_i / pi  chi(z) prod (measurement kernels)
//
// evaluated per term as c det(Q)^-1 E_Q[prod forms] with the complex Wick
// theorem. Measurement kernels are the matrix elements of the normally
// ordered displacement operator D_N(-z): <0|.|0> = 1, <1|.|1> = 1 - |z|^2,
// Tr[.] = pi delta(z), and the Bell overlap 1 - |z_a + s z_b|^2 / 2.
//
// A term may also carry divided differences along rank-1 exponent directions,
//   prod_l (exp(-h_l |u_l^H z|^2) - 1) / h_l,
// which keeps states heralded by threshold detectors free of the large,
// cancelling coefficients of their plain Gaussian expansion.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dlcz/divided_difference.hpp"
#include "dlcz/linalg.hpp"
#include "dlcz/wick.hpp"

namespace dlcz {

/// z -> z^H P z. P is Hermitian for every form built from physical
/// kernels; conditioning may produce non-Hermitian pieces whose sum is real.
struct QuadraticForm {
  CMatrix matrix;

  cplx value(const CVector& z) const { return z.dot(matrix * z); }
};

/// (exp(-step |u^H z|^2) - 1) / step; step 0 means -|u^H z|^2.
struct Difference {
  CVector direction;
  double step = 0.0;

  double value(const CVector& z) const {
    const double y = std::norm(direction.dot(z));
    return step > 0.0 ? std::expm1(-step * y) / step : -y;
  }
};

struct GaussianTerm {
  cplx coeff{1.0, 0.0};
  CMatrix exponent;  // Q, Hermitian
  std::vector<QuadraticForm> factors;
  std::vector<Difference> differences;

  cplx value(const CVector& z) const {
    cplx v = coeff * std::exp(-z.dot(exponent * z));
    for (const auto& f : factors) v *= f.value(z);
    for (const auto& d : differences) v *= d.value(z);
    return v;
  }
};

class CharFun {
 public:
  CharFun() = default;
  explicit CharFun(std::vector<std::string> modes) : modes_(std::move(modes)) {
    std::set<std::string> seen(modes_.begin(), modes_.end());
    if (seen.size() != modes_.size()) throw std::invalid_argument("duplicate mode label");
  }

  const std::vector<std::string>& modes() const { return modes_; }
  std::size_t mode_count() const { return modes_.size(); }
  const std::vector<GaussianTerm>& terms() const { return terms_; }
  std::vector<GaussianTerm>& terms() { return terms_; }

  std::optional<std::size_t> find_mode(const std::string& label) const {
    auto it = std::find(modes_.begin(), modes_.end(), label);
    if (it == modes_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - modes_.begin());
  }

  std::size_t mode_index(const std::string& label) const {
    auto i = find_mode(label);
    if (!i) throw std::invalid_argument("unknown mode label '" + label + "'");
    return *i;
  }

  void add_term(GaussianTerm t) {
    const auto n = static_cast<Eigen::Index>(modes_.size());
    if (t.exponent.rows() != n || t.exponent.cols() != n) {
      throw std::invalid_argument("term exponent does not match mode count");
    }
    if (!is_hermitian(t.exponent, 1e-12 * std::max(1.0, t.exponent.cwiseAbs().maxCoeff()))) {
      throw std::invalid_argument("term exponent is not Hermitian");
    }
    for (const auto& f : t.factors) {
      if (f.matrix.rows() != n || f.matrix.cols() != n) {
        throw std::invalid_argument("quadratic form does not match mode count");
      }
    }
    for (const auto& d : t.differences) {
      if (d.direction.size() != n) throw std::invalid_argument("difference direction does not match mode count");
      if (!(d.step >= 0.0) || !std::isfinite(d.step)) throw std::invalid_argument("difference step must be finite and >= 0");
    }
    terms_.push_back(std::move(t));
  }

 private:
  std::vector<std::string> modes_;
  std::vector<GaussianTerm> terms_;
};

// ---------------------------------------------------------------------------
// Measurement kernels

struct MeasurementFactor {
  enum class Kind { Unit, OneMinusAbsSq, Delta, DeltaMinusOne, BellProjector };

  Kind kind = Kind::Unit;
  std::string mode;
  std::string mode_b;  // BellProjector only
  int sign = 1;        // BellProjector only

  static MeasurementFactor unit(std::string m) { return {Kind::Unit, std::move(m), {}, 1}; }
  static MeasurementFactor one_minus_abs_sq(std::string m) {
    return {Kind::OneMinusAbsSq, std::move(m), {}, 1};
  }
  static MeasurementFactor delta(std::string m) { return {Kind::Delta, std::move(m), {}, 1}; }
  static MeasurementFactor delta_minus_one(std::string m) {
    return {Kind::DeltaMinusOne, std::move(m), {}, 1};
  }
  static MeasurementFactor bell(std::string a, std::string b, int sign) {
    if (sign != 1 && sign != -1) throw std::invalid_argument("Bell sign must be +1 or -1");
    return {Kind::BellProjector, std::move(a), std::move(b), sign};
  }

  std::vector<std::string> touched_modes() const {
    if (kind == Kind::BellProjector) return {mode, mode_b};
    return {mode};
  }
};

// ---------------------------------------------------------------------------
// Pointwise evaluation

inline cplx evaluate(const CharFun& cf, const CVector& z) {
  if (static_cast<std::size_t>(z.size()) != cf.mode_count()) {
    throw std::invalid_argument("evaluation point has wrong dimension");
  }
  cplx v{0.0, 0.0};
  for (const auto& t : cf.terms()) v += t.value(z);
  return v;
}

// ---------------------------------------------------------------------------
// Structural operations

inline CharFun tensor(const CharFun& a, const CharFun& b) {
  std::vector<std::string> labels = a.modes();
  labels.insert(labels.end(), b.modes().begin(), b.modes().end());
  CharFun out(std::move(labels));  // rejects duplicates
  const auto na = static_cast<Eigen::Index>(a.mode_count());
  const auto nb = static_cast<Eigen::Index>(b.mode_count());
  const auto n = na + nb;
  auto embed = [&](const CMatrix& m, Eigen::Index offset) {
    CMatrix e = CMatrix::Zero(n, n);
    e.block(offset, offset, m.rows(), m.cols()) = m;
    return e;
  };
  out.terms().reserve(a.terms().size() * b.terms().size());
  for (const auto& ta : a.terms()) {
    for (const auto& tb : b.terms()) {
      GaussianTerm t;
      t.coeff = ta.coeff * tb.coeff;
      t.exponent = CMatrix::Zero(n, n);
      t.exponent.topLeftCorner(na, na) = ta.exponent;
      t.exponent.bottomRightCorner(nb, nb) = tb.exponent;
      for (const auto& f : ta.factors) t.factors.push_back({embed(f.matrix, 0)});
      for (const auto& f : tb.factors) t.factors.push_back({embed(f.matrix, na)});
      for (const auto& d : ta.differences) {
        CVector u = CVector::Zero(n);
        u.head(na) = d.direction;
        t.differences.push_back({std::move(u), d.step});
      }
      for (const auto& d : tb.differences) {
        CVector u = CVector::Zero(n);
        u.tail(nb) = d.direction;
        t.differences.push_back({std::move(u), d.step});
      }
      out.terms().push_back(std::move(t));
    }
  }
  return out;
}

/// Change of variables old_z = map * new_z. `map` is n_old x n_new.
inline CharFun substitute_linear(const CharFun& cf, const CMatrix& map,
                                 std::vector<std::string> new_labels) {
  const auto n_old = static_cast<Eigen::Index>(cf.mode_count());
  const auto n_new = static_cast<Eigen::Index>(new_labels.size());
  if (map.rows() != n_old || map.cols() != n_new) {
    throw std::invalid_argument("substitution matrix dimension mismatch");
  }
  CharFun out(std::move(new_labels));
  const CMatrix adj = map.adjoint();
  out.terms().reserve(cf.terms().size());
  for (const auto& t : cf.terms()) {
    GaussianTerm nt;
    nt.coeff = t.coeff;
    nt.exponent = hermitize(adj * t.exponent * map);
    for (const auto& f : t.factors) nt.factors.push_back({adj * f.matrix * map});
    for (const auto& d : t.differences) nt.differences.push_back({adj * d.direction, d.step});
    out.terms().push_back(std::move(nt));
  }
  return out;
}

inline CharFun relabel(const CharFun& cf, const std::map<std::string, std::string>& renames) {
  std::vector<std::string> labels = cf.modes();
  for (auto& l : labels) {
    if (auto it = renames.find(l); it != renames.end()) l = it->second;
  }
  CharFun out(std::move(labels));
  out.terms() = cf.terms();
  return out;
}

/// Multiplies every term by exp(-z^H G z).
inline CharFun multiply_gaussian_factor(const CharFun& cf, const CMatrix& g) {
  const auto n = static_cast<Eigen::Index>(cf.mode_count());
  if (g.rows() != n || g.cols() != n) throw std::invalid_argument("Gaussian factor dimension mismatch");
  if (!is_hermitian(g)) throw std::invalid_argument("Gaussian factor is not Hermitian");
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(g), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12) {
      throw std::invalid_argument("Gaussian factor is not positive semidefinite");
    }
  }
  CharFun out = cf;
  for (auto& t : out.terms()) t.exponent = hermitize(t.exponent + g);
  return out;
}

// ---------------------------------------------------------------------------
// Moment integrals

namespace detail {

/// One summand of the distributive expansion of a product of kernels.
struct KernelBranch {
  double scale = 1.0;
  std::vector<bool> delta;       // modes restricted to zero
  std::vector<CMatrix> forms;    // extra polynomial factors, full size
};

inline std::vector<KernelBranch> expand_kernels(const CharFun& cf,
                                                const std::vector<MeasurementFactor>& factors) {
  using Kind = MeasurementFactor::Kind;
  const auto n = static_cast<Eigen::Index>(cf.mode_count());
  std::vector<KernelBranch> branches(1);
  branches[0].delta.assign(cf.mode_count(), false);
  for (const auto& f : factors) {
    std::vector<KernelBranch> next;
    for (const auto& b : branches) {
      switch (f.kind) {
        case Kind::Unit:
          next.push_back(b);
          break;
        case Kind::Delta: {
          auto nb = b;
          nb.delta[cf.mode_index(f.mode)] = true;
          next.push_back(std::move(nb));
          break;
        }
        case Kind::DeltaMinusOne: {
          auto with_delta = b;
          with_delta.delta[cf.mode_index(f.mode)] = true;
          next.push_back(std::move(with_delta));
          auto minus_unit = b;
          minus_unit.scale = -minus_unit.scale;
          next.push_back(std::move(minus_unit));
          break;
        }
        case Kind::OneMinusAbsSq: {
          next.push_back(b);
          auto nb = b;
          nb.scale = -nb.scale;
          CMatrix e = CMatrix::Zero(n, n);
          const auto k = static_cast<Eigen::Index>(cf.mode_index(f.mode));
          e(k, k) = 1.0;
          nb.forms.push_back(std::move(e));
          next.push_back(std::move(nb));
          break;
        }
        case Kind::BellProjector: {
          next.push_back(b);
          auto nb = b;
          nb.scale = -nb.scale;
          CVector v = CVector::Zero(n);
          v(static_cast<Eigen::Index>(cf.mode_index(f.mode))) = 1.0;
          v(static_cast<Eigen::Index>(cf.mode_index(f.mode_b))) = static_cast<double>(f.sign);
          nb.forms.push_back(0.5 * v * v.adjoint());
          next.push_back(std::move(nb));
          break;
        }
      }
    }
    branches = std::move(next);
  }
  return branches;
}

inline CMatrix select(const CMatrix& m, const std::vector<Eigen::Index>& rows,
                      const std::vector<Eigen::Index>& cols) {
  CMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
    }
  }
  return out;
}

/// Groups terms whose exponents coincide so each Gaussian block is
/// factorised once.
inline std::vector<std::size_t> exponent_groups(const CharFun& cf, std::vector<std::size_t>& reps) {
  std::vector<std::size_t> group(cf.terms().size());
  reps.clear();
  for (std::size_t t = 0; t < cf.terms().size(); ++t) {
    const auto& q = cf.terms()[t].exponent;
    std::size_t g = 0;
    for (; g < reps.size(); ++g) {
      const auto& r = cf.terms()[reps[g]].exponent;
      if ((q - r).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, r.cwiseAbs().maxCoeff())) break;
    }
    if (g == reps.size()) reps.push_back(t);
    group[t] = g;
  }
  return group;
}

inline void check_coverage(const CharFun& cf, const std::vector<MeasurementFactor>& factors,
                           bool require_all) {
  std::vector<int> hits(cf.mode_count(), 0);
  for (const auto& f : factors) {
    for (const auto& m : f.touched_modes()) ++hits[cf.mode_index(m)];
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i] > 1) throw std::invalid_argument("mode '" + cf.modes()[i] + "' has more than one kernel");
    if (require_all && hits[i] == 0) {
      throw std::invalid_argument("mode '" + cf.modes()[i] + "' has no integration treatment");
    }
  }
}

/// c det(Q)^-1 E_Q[forms x differences] for a term with difference
/// directions. Every form must have rank one, A = a b^H, so that
/// det(Q + sum_k x_k a_k b_k^H) = det(Q) det(I + diag(x) M), M = B^H Q^-1 A;
/// a form is a zero-step difference up to a sign.
inline cplx difference_moment(const PdInverse& inv, const std::vector<CMatrix>& forms,
                              const std::vector<CVector>& dirs, const std::vector<double>& steps) {
  const auto n = inv.inverse.rows();
  const auto r = static_cast<Eigen::Index>(dirs.size() + forms.size());
  if (r > 12) throw std::invalid_argument("too many difference directions");
  if (n == 0) return r == 0 ? cplx{1.0, 0.0} : cplx{0.0, 0.0};
  CMatrix left(n, r), right(n, r);
  std::vector<double> h = steps;
  for (std::size_t l = 0; l < dirs.size(); ++l) {
    left.col(static_cast<Eigen::Index>(l)) = dirs[l];
    right.col(static_cast<Eigen::Index>(l)) = dirs[l];
  }
  double sign = 1.0;
  for (std::size_t f = 0; f < forms.size(); ++f) {
    Eigen::JacobiSVD<CMatrix> svd(forms[f], Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const auto col = static_cast<Eigen::Index>(dirs.size() + f);
    if (sv(0) == 0.0) return {0.0, 0.0};
    if (sv.size() > 1 && sv(1) > 1e-12 * sv(0)) {
      throw std::invalid_argument("difference terms accept only rank-one polynomial factors");
    }
    left.col(col) = sv(0) * svd.matrixU().col(0);
    right.col(col) = svd.matrixV().col(0);
    h.push_back(0.0);
    sign = -sign;
  }
  const CMatrix m = right.adjoint() * inv.inverse * left;
  return sign * divided_difference_of_reciprocal(principal_minor_polynomial(m), h) / inv.det;
}

}  // namespace detail

/// int prod d^2z/pi chi(z) prod kernels, every mode carrying exactly one kernel.
inline cplx moment_integral(const CharFun& cf, const std::vector<MeasurementFactor>& factors) {
  detail::check_coverage(cf, factors, true);
  const auto branches = detail::expand_kernels(cf, factors);
  std::vector<std::size_t> reps;
  const auto group = detail::exponent_groups(cf, reps);
  const std::size_t n = cf.mode_count();

  cplx total{0.0, 0.0};
  std::vector<CMatrix> forms;
  for (const auto& br : branches) {
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < n; ++i) {
      if (!br.delta[i]) keep.push_back(static_cast<Eigen::Index>(i));
    }
    std::vector<CMatrix> extra;
    for (const auto& f : br.forms) extra.push_back(detail::select(f, keep, keep));

    std::vector<std::optional<PdInverse>> inv(reps.size());
    for (std::size_t t = 0; t < cf.terms().size(); ++t) {
      const auto& term = cf.terms()[t];
      auto& gi = inv[group[t]];
      if (!gi) gi.emplace(detail::select(term.exponent, keep, keep));
      forms.clear();
      for (const auto& f : term.factors) forms.push_back(detail::select(f.matrix, keep, keep));
      forms.insert(forms.end(), extra.begin(), extra.end());
      if (!term.differences.empty()) {
        std::vector<CVector> dirs;
        std::vector<double> steps;
        for (const auto& d : term.differences) {
          CVector u(static_cast<Eigen::Index>(keep.size()));
          for (std::size_t i = 0; i < keep.size(); ++i) u(static_cast<Eigen::Index>(i)) = d.direction(keep[i]);
          dirs.push_back(std::move(u));
          steps.push_back(d.step);
        }
        total += br.scale * term.coeff * detail::difference_moment(*gi, forms, dirs, steps);
        continue;
      }
      if (keep.empty()) {
        if (forms.empty()) total += br.scale * term.coeff;
        continue;
      }
      total += br.scale * term.coeff * wick_expectation(gi->inverse, forms) / gi->det;
    }
  }
  return total;
}

/// moment_integral with the real-part check applied.
inline double probability(const CharFun& cf, const std::vector<MeasurementFactor>& factors,
                          const char* what = "probability") {
  return real_checked(moment_integral(cf, factors), 1e-10, what);
}

/// Delta kernels on every mode, i.e. Tr rho = chi(0).
inline std::vector<MeasurementFactor> trace_kernels(const CharFun& cf) {
  std::vector<MeasurementFactor> f;
  for (const auto& m : cf.modes()) f.push_back(MeasurementFactor::delta(m));
  return f;
}

// ---------------------------------------------------------------------------
// Conditioning on a subset of modes

struct ConditionedState {
  CharFun state;   // unnormalised, over the unmeasured modes
  double weight;   // probability of the measured outcome

  CharFun normalized() const {
    if (!(weight > 0.0)) throw NumericalError("conditioning on a zero-probability outcome");
    CharFun out = state;
    for (auto& t : out.terms()) t.coeff /= weight;
    return out;
  }
};

namespace detail {

// Piece of z^H B z after splitting z = (r, delta):
// RR: r^H B r; RD: r^H B delta; DR: delta^H B r; DD: delta^H B delta.
enum class Piece { RR, RD, DR, DD };

struct PieceRef {
  Piece kind;
  const CMatrix* mat;
};

/// Gaussian expectation over delta ~ CN(0, C) of a product of pieces,
/// returned as a sum of (scalar, list of r-forms).
inline void contract_pieces(const std::vector<PieceRef>& pieces, const CMatrix& cov,
                            cplx scale, std::vector<std::pair<cplx, std::vector<CMatrix>>>& out) {
  std::vector<std::size_t> col_slots;  // pieces carrying a delta
  std::vector<std::size_t> row_slots;  // pieces carrying a delta^H
  std::vector<CMatrix> fixed;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    switch (pieces[i].kind) {
      case Piece::RR: fixed.push_back(*pieces[i].mat); break;
      case Piece::RD: col_slots.push_back(i); break;
      case Piece::DR: row_slots.push_back(i); break;
      case Piece::DD: col_slots.push_back(i); row_slots.push_back(i); break;
    }
  }
  if (col_slots.size() != row_slots.size()) return;
  const std::size_t s = col_slots.size();
  std::vector<std::size_t> perm(s);
  std::iota(perm.begin(), perm.end(), 0);
  // perm[i]: index into row_slots paired with col_slots[i]
  std::vector<std::size_t> col_of_piece(pieces.size(), SIZE_MAX);
  for (std::size_t i = 0; i < s; ++i) col_of_piece[col_slots[i]] = i;
  do {
    cplx c = scale;
    std::vector<CMatrix> forms = fixed;
    std::vector<bool> used(pieces.size(), false);
    // open paths start at RD pieces
    for (std::size_t i = 0; i < s; ++i) {
      std::size_t p = col_slots[i];
      if (pieces[p].kind != Piece::RD) continue;
      CMatrix acc = *pieces[p].mat;
      used[p] = true;
      std::size_t slot = i;
      while (true) {
        const std::size_t q = row_slots[perm[slot]];
        used[q] = true;
        acc = acc * cov * *pieces[q].mat;
        if (pieces[q].kind == Piece::DR) break;
        slot = col_of_piece[q];
      }
      forms.push_back(std::move(acc));
    }
    // closed cycles among DD pieces
    for (std::size_t i = 0; i < s; ++i) {
      std::size_t p = col_slots[i];
      if (used[p]) continue;
      CMatrix acc = *pieces[p].mat;
      used[p] = true;
      std::size_t slot = i;
      while (true) {
        const std::size_t q = row_slots[perm[slot]];
        if (q == p) {
          acc = acc * cov;
          break;
        }
        used[q] = true;
        acc = acc * cov * *pieces[q].mat;
        slot = col_of_piece[q];
      }
      c *= acc.trace();
    }
    if (c != cplx{0.0, 0.0}) out.emplace_back(c, std::move(forms));
  } while (std::next_permutation(perm.begin(), perm.end()));
}

}  // namespace detail

/// Integrates the modes named in `factors` against their kernels, keeping the
/// other modes as free variables. The remaining exponent is the Schur
/// complement Q_rr - Q_rm Q_mm^-1 Q_mr; polynomial factors are reduced with
/// conditional Gaussian moments whose mean is linear in the free variables.
inline ConditionedState partial_condition(const CharFun& cf,
                                          const std::vector<MeasurementFactor>& factors) {
  detail::check_coverage(cf, factors, false);
  for (const auto& t : cf.terms()) {
    if (!t.differences.empty()) throw std::invalid_argument("conditioning does not support difference terms");
  }
  const std::size_t n = cf.mode_count();
  std::vector<bool> measured(n, false);
  for (const auto& f : factors) {
    for (const auto& m : f.touched_modes()) measured[cf.mode_index(m)] = true;
  }
  std::vector<std::string> rest_labels;
  std::vector<Eigen::Index> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (!measured[i]) {
      rest.push_back(static_cast<Eigen::Index>(i));
      rest_labels.push_back(cf.modes()[i]);
    }
  }
  const auto nr = static_cast<Eigen::Index>(rest.size());

  CharFun out(rest_labels);
  const auto branches = detail::expand_kernels(cf, factors);
  for (const auto& br : branches) {
    std::vector<Eigen::Index> meas;
    for (std::size_t i = 0; i < n; ++i) {
      if (measured[i] && !br.delta[i]) meas.push_back(static_cast<Eigen::Index>(i));
    }
    const auto nm = static_cast<Eigen::Index>(meas.size());
    std::vector<Eigen::Index> order = rest;
    order.insert(order.end(), meas.begin(), meas.end());

    for (const auto& term : cf.terms()) {
      const CMatrix q_rr = detail::select(term.exponent, rest, rest);
      const CMatrix q_rm = detail::select(term.exponent, rest, meas);
      const CMatrix q_mr = detail::select(term.exponent, meas, rest);
      const CMatrix q_mm = detail::select(term.exponent, meas, meas);
      const PdInverse inv(q_mm);
      const CMatrix shift = -inv.inverse * q_mr;  // mean of measured block = shift * r
      const CMatrix schur = hermitize(q_rr + q_rm * shift);

      // z (in `order`) = W (r, delta)
      CMatrix w = CMatrix::Zero(nr + nm, nr + nm);
      w.topLeftCorner(nr, nr).setIdentity();
      w.bottomRightCorner(nm, nm).setIdentity();
      if (nm > 0 && nr > 0) w.bottomLeftCorner(nm, nr) = shift;

      std::vector<CMatrix> all_forms;
      for (const auto& f : term.factors) all_forms.push_back(detail::select(f.matrix, order, order));
      for (const auto& f : br.forms) all_forms.push_back(detail::select(f, order, order));

      std::vector<std::array<CMatrix, 4>> split;
      for (const auto& f : all_forms) {
        const CMatrix b = w.adjoint() * f * w;
        split.push_back({b.topLeftCorner(nr, nr), b.topRightCorner(nr, nm),
                         b.bottomLeftCorner(nm, nr), b.bottomRightCorner(nm, nm)});
      }

      const cplx scale = br.scale * term.coeff / inv.det;
      std::vector<std::pair<cplx, std::vector<CMatrix>>> pieces_out;
      const std::size_t nf = split.size();
      std::size_t combos = 1;
      for (std::size_t k = 0; k < nf; ++k) combos *= 4;
      for (std::size_t code = 0; code < combos; ++code) {
        std::vector<detail::PieceRef> pieces;
        std::size_t c = code;
        bool skip = false;
        for (std::size_t k = 0; k < nf; ++k, c /= 4) {
          const auto kind = static_cast<detail::Piece>(c % 4);
          if (kind != detail::Piece::RR && nm == 0) skip = true;
          if (kind != detail::Piece::DD && nr == 0) skip = true;
          pieces.push_back({kind, &split[k][c % 4]});
        }
        if (skip) continue;
        detail::contract_pieces(pieces, inv.inverse, scale, pieces_out);
      }
      for (auto& [coeff, forms] : pieces_out) {
        GaussianTerm t;
        t.coeff = coeff;
        t.exponent = schur;
        for (auto& f : forms) t.factors.push_back({std::move(f)});
        out.terms().push_back(std::move(t));
      }
    }
  }

  auto full = factors;
  for (const auto& l : rest_labels) full.push_back(MeasurementFactor::delta(l));
  const double weight = real_checked(moment_integral(cf, full), 1e-10, "conditioning weight");
  return {std::move(out), weight};
}

// ---------------------------------------------------------------------------
// Canonical form

/// Rewrites every term as exponent x monomial in (z*, z), merging terms with
/// equal exponents and equal monomials. Each monomial z*_i1..z*_ik z_j1..z_jk
/// (indices sorted) is stored as the product of elementary forms E_{i_l j_l}.
inline CharFun simplify(const CharFun& cf, double drop_tol = 1e-15) {
  using Key = std::pair<std::vector<int>, std::vector<int>>;
  for (const auto& t : cf.terms()) {
    if (!t.differences.empty()) throw std::invalid_argument("simplify does not support difference terms");
  }
  const auto n = static_cast<Eigen::Index>(cf.mode_count());
  std::vector<std::size_t> reps;
  const auto group = detail::exponent_groups(cf, reps);
  std::vector<std::map<Key, cplx>> polys(reps.size());

  for (std::size_t t = 0; t < cf.terms().size(); ++t) {
    const auto& term = cf.terms()[t];
    auto& poly = polys[group[t]];
    // expand the product of forms one factor at a time
    std::map<Key, cplx> cur;
    cur[{}] = term.coeff;
    for (const auto& f : term.factors) {
      std::map<Key, cplx> next;
      for (const auto& [key, c] : cur) {
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < n; ++j) {
            const cplx m = f.matrix(i, j);
            if (m == cplx{0.0, 0.0}) continue;
            Key k = key;
            k.first.insert(std::upper_bound(k.first.begin(), k.first.end(), static_cast<int>(i)),
                           static_cast<int>(i));
            k.second.insert(std::upper_bound(k.second.begin(), k.second.end(), static_cast<int>(j)),
                            static_cast<int>(j));
            next[k] += c * m;
          }
        }
      }
      cur = std::move(next);
    }
    for (const auto& [key, c] : cur) poly[key] += c;
  }

  double scale = 0.0;
  for (const auto& poly : polys) {
    for (const auto& [key, c] : poly) scale = std::max(scale, std::abs(c));
  }
  CharFun out(cf.modes());
  for (std::size_t g = 0; g < reps.size(); ++g) {
    for (const auto& [key, c] : polys[g]) {
      if (std::abs(c) <= drop_tol * scale) continue;
      GaussianTerm t;
      t.coeff = c;
      t.exponent = cf.terms()[reps[g]].exponent;
      for (std::size_t l = 0; l < key.first.size(); ++l) {
        CMatrix e = CMatrix::Zero(n, n);
        e(key.first[l], key.second[l]) = 1.0;
        t.factors.push_back({std::move(e)});
      }
      out.terms().push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace dlcz
