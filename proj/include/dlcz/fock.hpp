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

// Brute-force reference model in a truncated photon-number basis. Nothing
// here uses the characteristic-function engine.
//
// Physical model
//   * Each ensemble/photon pair starts in sqrt(1-p) sum_n p^(n/2) |n>|n>.
//   * Path loss and detector efficiency act as one loss eta before the
//     midpoint beam splitter; retrieval and detection loss eta_m act before
//     the swap and QKD beam splitters.
//   * Beam splitter convention: a_X^+ -> (-b_X^+ + b_Y^+)/sqrt2,
//     a_Y^+ -> (b_X^+ + b_Y^+)/sqrt2. Detector X reports herald / outcome 1.
//
// Equal loss on both beam-splitter inputs equals the same loss on both
// outputs, so a lossy detector is folded into its POVM (binomial thinning),
// and a POVM element M behind the splitter is pulled back as U^+ M U.
// Conditional states then follow from small tensor contractions.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dlcz/linalg.hpp"
#include "dlcz/params.hpp"

namespace dlcz::fock {

/// Dense operator on a tensor product of truncated modes. Basis index is
/// row-major over modes (first mode most significant); dims[k] = cutoff + 1.
struct FockOperator {
  CMatrix mat;
  std::vector<int> dims;

  int size() const { return std::accumulate(dims.begin(), dims.end(), 1, std::multiplies<int>()); }
  cplx trace() const { return mat.trace(); }
};

/// Smallest n_max with p^(n_max+1) < tol.
inline int cutoff_for(double p_c, double tol = 1e-12) {
  if (!(p_c >= 0.0 && p_c < 1.0)) throw std::invalid_argument("p_c must lie in [0, 1)");
  int k = 0;
  double pw = p_c;
  while (!(pw < tol)) {
    ++k;
    pw *= p_c;
    if (k > 60) throw std::invalid_argument("p_c too large for the cutoff policy");
  }
  return k;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

/// Amplitudes c_n of sqrt(1-p) sum_n p^(n/2) |n>|n>, truncated at n_max and
/// renormalised. Before renormalisation the norm is 1 - p^(n_max+1).
inline std::vector<double> source_amplitudes(double p_c, int n_max) {
  if (n_max < 0) throw std::invalid_argument("cutoff must be non-negative");
  if (!(p_c >= 0.0 && p_c < 1.0)) throw std::invalid_argument("p_c must lie in [0, 1)");
  std::vector<double> c(static_cast<std::size_t>(n_max + 1));
  double norm = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    c[static_cast<std::size_t>(n)] = std::sqrt(1.0 - p_c) * std::pow(p_c, 0.5 * n);
    norm += c[static_cast<std::size_t>(n)] * c[static_cast<std::size_t>(n)];
  }
  for (auto& x : c) x /= std::sqrt(norm);
  return c;
}

/// Pair state over (ensemble, photon) as a vector of dimension (n_max+1)^2.
inline CVector source_pair_state(double p_c, int n_max) {
  const auto c = source_amplitudes(p_c, n_max);
  const int d = n_max + 1;
  CVector v = CVector::Zero(d * d);
  for (int n = 0; n < d; ++n) v(n * d + n) = c[static_cast<std::size_t>(n)];
  return v;
}

inline FockOperator density(const CVector& psi, std::vector<int> dims) {
  FockOperator op{psi * psi.adjoint(), std::move(dims)};
  if (op.mat.rows() != op.size()) throw std::invalid_argument("state dimension mismatch");
  return op;
}

namespace detail {

inline std::vector<int> digits(int index, const std::vector<int>& dims) {
  std::vector<int> d(dims.size());
  for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
    d[static_cast<std::size_t>(k)] = index % dims[static_cast<std::size_t>(k)];
    index /= dims[static_cast<std::size_t>(k)];
  }
  return d;
}

inline int flat(const std::vector<int>& d, const std::vector<int>& dims) {
  int index = 0;
  for (std::size_t k = 0; k < dims.size(); ++k) index = index * dims[k] + d[k];
  return index;
}

}  // namespace detail

/// Pure-loss channel of transmissivity eta on one mode, Kraus operators
/// E_k = sum_n sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k><n|.
inline FockOperator apply_loss(const FockOperator& rho, int mode, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in [0, 1]");
  if (mode < 0 || mode >= static_cast<int>(rho.dims.size())) throw std::invalid_argument("bad mode index");
  const int dim = rho.dims[static_cast<std::size_t>(mode)];
  const int n = rho.size();
  FockOperator out{CMatrix::Zero(n, n), rho.dims};
  for (int k = 0; k < dim; ++k) {
    // E_k as a full-space matrix
    CMatrix e = CMatrix::Zero(n, n);
    for (int col = 0; col < n; ++col) {
      auto d = detail::digits(col, rho.dims);
      const int m = d[static_cast<std::size_t>(mode)];
      if (m < k) continue;
      const double amp = std::sqrt(binomial(m, k) * std::pow(eta, m - k) * std::pow(1.0 - eta, k));
      d[static_cast<std::size_t>(mode)] = m - k;
      e(detail::flat(d, rho.dims), col) = amp;
    }
    out.mat += e * rho.mat * e.adjoint();
  }
  return out;
}

/// Isometry of the 50-50 beam splitter from dims (dx, dy) into
/// (dx + dy - 1, dx + dy - 1); no truncation error because photon number
/// is conserved.
inline CMatrix beam_splitter_isometry(int dx, int dy) {
  const int dout = dx + dy - 1;
  CMatrix u = CMatrix::Zero(dout * dout, dx * dy);
  const double s = 1.0 / std::sqrt(2.0);
  for (int n1 = 0; n1 < dx; ++n1) {
    for (int n2 = 0; n2 < dy; ++n2) {
      // (-bx + by)^n1 (bx + by)^n2 / sqrt(n1! n2!) / 2^((n1+n2)/2)
      const double pref = std::pow(s, n1 + n2) / std::sqrt(std::tgamma(n1 + 1.0) * std::tgamma(n2 + 1.0));
      for (int a = 0; a <= n1; ++a) {      // a factors of bx from the first bracket
        for (int b = 0; b <= n2; ++b) {    // b factors of bx from the second
          const double sign = (a % 2 == 0) ? 1.0 : -1.0;
          const double coeff = pref * sign * binomial(n1, a) * binomial(n2, b);
          const int kx = a + b;
          const int ky = n1 + n2 - kx;
          const double norm = std::sqrt(std::tgamma(kx + 1.0) * std::tgamma(ky + 1.0));
          u(kx * dout + ky, n1 * dy + n2) += coeff * norm;
        }
      }
    }
  }
  return u;
}

/// Applies the beam splitter to modes mx, my of rho; both output modes get
/// dimension dims[mx] + dims[my] - 1.
inline FockOperator beam_splitter_50_50(const FockOperator& rho, int mx, int my) {
  const int nm = static_cast<int>(rho.dims.size());
  if (mx < 0 || my < 0 || mx >= nm || my >= nm || mx == my) throw std::invalid_argument("bad beam splitter modes");
  const int dx = rho.dims[static_cast<std::size_t>(mx)];
  const int dy = rho.dims[static_cast<std::size_t>(my)];
  const int dout = dx + dy - 1;
  const CMatrix u2 = beam_splitter_isometry(dx, dy);
  std::vector<int> odims = rho.dims;
  odims[static_cast<std::size_t>(mx)] = dout;
  odims[static_cast<std::size_t>(my)] = dout;
  const int nin = rho.size();
  const int nout = std::accumulate(odims.begin(), odims.end(), 1, std::multiplies<int>());
  CMatrix u = CMatrix::Zero(nout, nin);
  for (int col = 0; col < nin; ++col) {
    const auto d = detail::digits(col, rho.dims);
    const int in2 = d[static_cast<std::size_t>(mx)] * dy + d[static_cast<std::size_t>(my)];
    for (int kx = 0; kx < dout; ++kx) {
      for (int ky = 0; ky < dout; ++ky) {
        const cplx a = u2(kx * dout + ky, in2);
        if (a == cplx{}) continue;
        auto o = d;
        o[static_cast<std::size_t>(mx)] = kx;
        o[static_cast<std::size_t>(my)] = ky;
        u(detail::flat(o, odims), col) += a;
      }
    }
  }
  return {u * rho.mat * u.adjoint(), odims};
}

/// Diagonal POVM element of a detector of efficiency eta on a mode of
/// dimension dim. PNRD click: exactly one photon registered; NRPD click:
/// at least one; no click: none registered.
inline CMatrix click_povm(Detector det, bool click, int dim, double eta = 1.0) {
  CMatrix m = CMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) {
    const double dark = std::pow(1.0 - eta, n);
    double w;
    if (!click) {
      w = dark;
    } else if (det == Detector::PNRD) {
      w = n == 0 ? 0.0 : n * eta * std::pow(1.0 - eta, n - 1);
    } else {
      w = 1.0 - dark;
    }
    m(n, n) = w;
  }
  return m;
}

/// U^+ (Dx (x) Dy) U for detectors behind the beam splitter acting on
/// input modes of dimensions (dx, dy).
inline CMatrix pulled_back_povm(Detector det, bool click_x, bool click_y, int dx, int dy, double eta) {
  const int dout = dx + dy - 1;
  const CMatrix u = beam_splitter_isometry(dx, dy);
  CMatrix d = CMatrix::Zero(dout * dout, dout * dout);
  const CMatrix px = click_povm(det, click_x, dout, eta);
  const CMatrix py = click_povm(det, click_y, dout, eta);
  for (int kx = 0; kx < dout; ++kx) {
    for (int ky = 0; ky < dout; ++ky) d(kx * dout + ky, kx * dout + ky) = px(kx, kx) * py(ky, ky);
  }
  return u.adjoint() * d * u;
}

/// (|01> + s |10>) / sqrt2 on two modes of dimension d.
inline CVector bell_vector(int d, int s) {
  CVector v = CVector::Zero(d * d);
  v(0 * d + 1) = 1.0 / std::sqrt(2.0);
  v(1 * d + 0) = s / std::sqrt(2.0);
  return v;
}

namespace detail {

/// rho[(a,b),(a2,b2)] -> R[(a,a2),(b,b2)] for a two-mode operator.
inline CMatrix to_pair(const CMatrix& rho, int da, int db) {
  CMatrix r(da * da, db * db);
  for (int a = 0; a < da; ++a)
    for (int b = 0; b < db; ++b)
      for (int a2 = 0; a2 < da; ++a2)
        for (int b2 = 0; b2 < db; ++b2) r(a * da + a2, b * db + b2) = rho(a * db + b, a2 * db + b2);
  return r;
}

inline CMatrix from_pair(const CMatrix& r, int da, int db) {
  CMatrix rho(da * db, da * db);
  for (int a = 0; a < da; ++a)
    for (int b = 0; b < db; ++b)
      for (int a2 = 0; a2 < da; ++a2)
        for (int b2 = 0; b2 < db; ++b2) rho(a * db + b, a2 * db + b2) = r(a * da + a2, b * db + b2);
  return rho;
}

/// For an operator M on (x, y): K[(x,x2),(y,y2)] = M[(x2,y2),(x,y)], so that
/// Tr[(rho_1 (x) rho_2) M] contracts as sum R1 K R2^T.
inline CMatrix to_kernel(const CMatrix& m, int dx, int dy) {
  CMatrix k(dx * dx, dy * dy);
  for (int x = 0; x < dx; ++x)
    for (int y = 0; y < dy; ++y)
      for (int x2 = 0; x2 < dx; ++x2)
        for (int y2 = 0; y2 < dy; ++y2) k(x * dx + x2, y * dy + y2) = m(x2 * dy + y2, x * dy + y);
  return k;
}

/// Swaps the two modes of a two-mode operator.
inline CMatrix swap_modes(const CMatrix& rho, int da, int db) {
  CMatrix out(da * db, da * db);
  for (int a = 0; a < da; ++a)
    for (int b = 0; b < db; ++b)
      for (int a2 = 0; a2 < da; ++a2)
        for (int b2 = 0; b2 < db; ++b2) out(b * da + a, b2 * da + a2) = rho(a * db + b, a2 * db + b2);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Oracle pipelines

struct OracleLink {
  double herald_prob = 0.0;  // summed over both heralding detectors
  double fidelity = 0.0;     // average over the two heralds
  std::array<FockOperator, 2> states;  // normalised conditional states of (A, B), j = 1, 2
  std::array<double, 2> branch_prob{};
};

/// Conditional state of (A, B) after herald j, unnormalised (trace = herald
/// probability of detector j). rho[n, m] = c_n c_m M[m, n] with M the
/// pulled-back herald POVM on the two photons.
inline FockOperator link_state_unnormalized(const SystemParams& p, double segment_km, int j, int n_max) {
  const auto d = derived_params(p, segment_km);
  const auto c = source_amplitudes(p.p_c, n_max);
  const int dim = n_max + 1;
  const CMatrix m = pulled_back_povm(p.detector, j == 1, j == 2, dim, dim, d.eta_s);
  CMatrix rho(dim * dim, dim * dim);
  for (int n1 = 0; n1 < dim; ++n1)
    for (int n2 = 0; n2 < dim; ++n2)
      for (int m1 = 0; m1 < dim; ++m1)
        for (int m2 = 0; m2 < dim; ++m2) {
          const int n = n1 * dim + n2, mm = m1 * dim + m2;
          rho(n, mm) = c[static_cast<std::size_t>(n1)] * c[static_cast<std::size_t>(n2)] *
                       c[static_cast<std::size_t>(m1)] * c[static_cast<std::size_t>(m2)] * m(mm, n);
        }
  return {rho, {dim, dim}};
}

inline OracleLink oracle_link_metrics(const SystemParams& p, double segment_km, int n_max = -1) {
  if (n_max < 0) n_max = cutoff_for(p.p_c);
  OracleLink out;
  for (int j = 1; j <= 2; ++j) {
    auto rho = link_state_unnormalized(p, segment_km, j, n_max);
    const double pr = real_checked(rho.trace(), 1e-12, "oracle herald probability");
    if (!(pr > 0.0)) throw NumericalError("oracle herald probability is zero");
    rho.mat /= pr;
    const CVector bell = bell_vector(n_max + 1, j == 1 ? -1 : 1);
    const double f = real_checked(bell.dot(rho.mat * bell), 1e-12, "oracle fidelity");
    out.states[static_cast<std::size_t>(j - 1)] = std::move(rho);
    out.branch_prob[static_cast<std::size_t>(j - 1)] = pr;
    out.herald_prob += pr;
    out.fidelity += 0.5 * f;
  }
  return out;
}

struct OracleSwap {
  double p_m = 0.0;
  double fidelity = 0.0;
  double vacuum_weight = 0.0;
  double fidelity_purified = 0.0;
  double p_m_purified = 0.0;
  std::vector<double> outcome_prob;  // the eight (i, j, k) BSM probabilities
  std::vector<double> outcome_fidelity;
  FockOperator state_111;            // normalised swapped state for (1, 1, 1)
};

/// Swapped state of (A, B) for BSM outcome i given link states of (A, A')
/// and (B', B); unnormalised, trace = P(outcome i).
inline FockOperator swapped_state_unnormalized(const FockOperator& rho_aa, const FockOperator& rho_bb, Detector det,
                                               int i, double eta_m) {
  const int da = rho_aa.dims[0], dx = rho_aa.dims[1];
  const int dy = rho_bb.dims[0], db = rho_bb.dims[1];
  const CMatrix m = pulled_back_povm(det, i == 1, i == 2, dx, dy, eta_m);
  const CMatrix k = detail::to_kernel(m, dx, dy);
  const CMatrix r1 = detail::to_pair(rho_aa.mat, da, dx);
  // rho_bb is ordered (B', B); reorder to (B, B') so B' plays the role of y
  const CMatrix r2 = detail::to_pair(detail::swap_modes(rho_bb.mat, dy, db), db, dy);
  const CMatrix r = r1 * k * r2.transpose();
  return {detail::from_pair(r, da, db), {da, db}};
}

inline OracleSwap oracle_swap_metrics(const SystemParams& p, int n_max = -1) {
  if (n_max < 0) n_max = cutoff_for(p.p_c);
  const auto link = oracle_link_metrics(p, p.distance_km / 2.0, n_max);
  const double eta_m = p.eta_m();
  OracleSwap out;
  double vac_sum = 0.0, fid_sum = 0.0;
  for (int j = 1; j <= 2; ++j) {
    for (int k = 1; k <= 2; ++k) {
      for (int i = 1; i <= 2; ++i) {
        auto rho = swapped_state_unnormalized(link.states[static_cast<std::size_t>(j - 1)],
                                              link.states[static_cast<std::size_t>(k - 1)], p.detector, i, eta_m);
        const double pr = real_checked(rho.trace(), 1e-12, "oracle BSM probability");
        if (!(pr > 0.0)) throw NumericalError("oracle BSM probability is zero");
        rho.mat /= pr;
        const int s = ((i + j + k) % 2 == 0) ? 1 : -1;
        const CVector bell = bell_vector(rho.dims[0], s);
        const double f = real_checked(bell.dot(rho.mat * bell), 1e-12, "oracle swapped fidelity");
        const double v = rho.mat(0, 0).real();
        out.outcome_prob.push_back(pr);
        out.outcome_fidelity.push_back(f);
        fid_sum += f;
        vac_sum += v;
        if (i == 1 && j == 1 && k == 1) out.state_111 = rho;
      }
    }
  }
  out.p_m = 2.0 * out.outcome_prob[0];
  out.fidelity = fid_sum / 8.0;
  out.vacuum_weight = vac_sum / 8.0;
  out.fidelity_purified = out.fidelity / (1.0 - out.vacuum_weight);
  out.p_m_purified = out.p_m * (1.0 - out.vacuum_weight);
  return out;
}

struct OracleQkd {
  std::array<double, 16> patterns{};  // indexed by bits over (A', B', C', D')
  double herald_prob = 0.0;           // P_S of the elementary links
  double p_m = 0.0;                   // repeater only
  double p_click = 0.0;
  double p_error = 0.0;
  double qber = 0.0;
  double rate = 0.0;                  // bits/s, same rate formula as the engine
};

/// Sifted-click and error probabilities from the sixteen pattern
/// probabilities (bit 3 = A', 2 = B', 1 = C', 0 = D'). Correct: 1100, 0011;
/// errors: 1001, 0110. Threshold detectors count every pattern with a click on
/// both sides; double clicks on one side are assigned a random bit.
inline std::pair<double, double> sifted_probabilities(const std::array<double, 16>& t, Detector det,
                                                      bool exact_click = false) {
  const double ok = t[0b1100] + t[0b0011];
  const double err = t[0b1001] + t[0b0110];
  if (det == Detector::PNRD) return {ok + err, err};
  double click = 1.0 - t[0b0000] - t[0b1000] - t[0b0100] - t[0b0010] - t[0b0001];
  if (exact_click) click -= t[0b1010] + t[0b0101];
  const double half = t[0b0111] + t[0b1011] + t[0b1101] + t[0b1110] + t[0b1111];
  return {click, err + 0.5 * half};
}

/// Probabilities of all sixteen click patterns for the pair states rho_ab and
/// rho_cd (each over (Alice mode, Bob mode)). Alice mixes A with C, Bob mixes
/// B with D; A and B enter as the X ports.
inline std::array<double, 16> qkd_patterns(const FockOperator& rho_ab, const FockOperator& rho_cd, Detector det,
                                           double eta_m) {
  const int da = rho_ab.dims[0], db = rho_ab.dims[1];
  const int dc = rho_cd.dims[0], dd = rho_cd.dims[1];
  // R1[(a,a2),(b,b2)], R2[(c,c2),(d,d2)]
  const CMatrix r1 = detail::to_pair(rho_ab.mat, da, db);
  const CMatrix r2 = detail::to_pair(rho_cd.mat, dc, dd);
  std::array<double, 16> out{};
  for (unsigned alice = 0; alice < 4; ++alice) {
    const bool ca = alice & 2u, cc = alice & 1u;
    const CMatrix k_ac = detail::to_kernel(pulled_back_povm(det, ca, cc, da, dc, eta_m), da, dc);
    const CMatrix left = k_ac.transpose() * r1;  // [(c,c2),(b,b2)]
    for (unsigned bob = 0; bob < 4; ++bob) {
      const bool cb = bob & 2u, cd = bob & 1u;
      const CMatrix k_bd = detail::to_kernel(pulled_back_povm(det, cb, cd, db, dd, eta_m), db, dd);
      // sum R1[ab] R2[cd] K_AC[ac] K_BD[bd]
      const cplx v = (left.cwiseProduct(r2 * k_bd.transpose())).sum();
      const unsigned bits = (ca ? 8u : 0u) | (cb ? 4u : 0u) | (cc ? 2u : 0u) | (cd ? 1u : 0u);
      out[bits] = real_checked(v, 1e-12, "oracle pattern probability");
    }
  }
  return out;
}

inline OracleQkd oracle_qkd_metrics(const SystemParams& p, Scenario scenario, int n_max = -1) {
  if (n_max < 0) n_max = cutoff_for(p.p_c);
  OracleQkd out;
  if (scenario == Scenario::Direct) {
    const auto link = oracle_link_metrics(p, p.distance_km, n_max);
    out.herald_prob = link.herald_prob;
    out.patterns = qkd_patterns(link.states[0], link.states[0], p.detector, p.eta_m());
  } else {
    const auto swap = oracle_swap_metrics(p, n_max);
    out.herald_prob = oracle_link_metrics(p, p.distance_km / 2.0, n_max).herald_prob;
    out.p_m = swap.p_m;
    out.patterns = qkd_patterns(swap.state_111, swap.state_111, p.detector, p.eta_m());
  }
  const auto [click, err] = sifted_probabilities(out.patterns, p.detector);
  if (!(click > 0.0)) throw NumericalError("oracle sifted-click probability is zero");
  out.p_click = click;
  out.p_error = err;
  out.qber = err / click;
  const double h = (out.qber <= 0.0 || out.qber >= 1.0)
                       ? 0.0
                       : -out.qber * std::log2(out.qber) - (1.0 - out.qber) * std::log2(1.0 - out.qber);
  const double sf = std::max(0.0, 1.0 - 2.0 * h);
  const double cycle_s = 2.0 * p.distance_km * 1000.0 / p.c_mps;
  const double pm = scenario == Scenario::Direct ? 1.0 : out.p_m;
  out.rate = sf * out.herald_prob * pm * click / 2.0 / cycle_s;
  return out;
}

}  // namespace dlcz::fock
