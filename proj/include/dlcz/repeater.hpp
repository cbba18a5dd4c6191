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

// Single-hop repeater: two heralded links A-A' and B'-B of length L/2, a
// partial Bell-state measurement on the photons retrieved from A' and B'.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dlcz/gaussian_core.hpp"
#include "dlcz/link.hpp"
#include "dlcz/params.hpp"

namespace dlcz {

struct SwapMetrics {
  double fidelity = 0.0;
  double fidelity_purified = 0.0;
  double p_m = 0.0;
  double p_m_purified = 0.0;
  double vacuum_weight = 0.0;
};

/// Joint state of A, A', B', B for herald outcomes j (link A-A') and k (B'-B).
inline CharFun pre_bsm_state(const SystemParams& p, int j, int k, const std::string& suffix = "",
                             NrpdForm form = NrpdForm::Difference) {
  const double half = p.distance_km / 2.0;
  return tensor(post_herald_charfun(p, half, j, "A" + suffix, "A'" + suffix, form),
                post_herald_charfun(p, half, k, "B'" + suffix, "B" + suffix, form));
}

/// Joint state of A, A'', B'', B with A'', B'' the detector-facing modes.
inline CharFun post_bsm_state(const SystemParams& p, int j, int k, const std::string& suffix = "",
                              NrpdForm form = NrpdForm::Difference) {
  return apply_bsm_channel(pre_bsm_state(p, j, k, suffix, form), "A'" + suffix, "B'" + suffix,
                           p.meas_eta_c(), p.meas_eta_d(), "A''" + suffix, "B''" + suffix);
}

/// BSM kernels for outcome i (1: click on A'', 2: click on B'').
inline std::vector<MeasurementFactor> bsm_kernels(Detector det, int i, const std::string& suffix = "") {
  return i == 1 ? single_click_kernels(det, "A''" + suffix, "B''" + suffix)
                : single_click_kernels(det, "B''" + suffix, "A''" + suffix);
}

namespace detail {

inline std::vector<MeasurementFactor> with(std::vector<MeasurementFactor> a,
                                           const std::vector<MeasurementFactor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline void require_equal(const std::vector<double>& v, double tol, const char* what) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi - *lo > tol * std::max(1.0, std::abs(*hi))) {
    throw NumericalError(std::string(what) + " differs across outcome indices");
  }
}

}  // namespace detail

/// Everything about the swap from one pass over the eight (i, j, k) outcomes.
/// Asserts the symmetry of the setup: probabilities, fidelities and vacuum
/// weights agree across outcomes within 1e-10.
inline SwapMetrics swap_metrics(const SystemParams& p) {
  using MF = MeasurementFactor;
  std::vector<double> prob, fid, vac;
  for (int j = 1; j <= 2; ++j) {
    for (int k = 1; k <= 2; ++k) {
      const auto cf = post_bsm_state(p, j, k);
      for (int i = 1; i <= 2; ++i) {
        const auto click = bsm_kernels(p.detector, i);
        const double pr = probability(cf, detail::with({MF::delta("A"), MF::delta("B")}, click), "BSM probability");
        if (!(pr > 0.0)) throw NumericalError("BSM success probability is zero");
        const int s = parity_sign(i + j + k);
        const double fn = probability(cf, detail::with({MF::bell("A", "B", s)}, click), "swap fidelity");
        const double vn = probability(cf, detail::with({MF::unit("A"), MF::unit("B")}, click), "vacuum weight");
        prob.push_back(pr);
        fid.push_back(fn / pr);
        vac.push_back(vn / pr);
      }
    }
  }
  detail::require_equal(prob, 1e-10, "BSM probability");
  detail::require_equal(fid, 1e-10, "swapped fidelity");
  detail::require_equal(vac, 1e-10, "vacuum weight");

  SwapMetrics m;
  m.p_m = 2.0 * prob[0];
  m.fidelity = 0.0;
  m.vacuum_weight = 0.0;
  for (std::size_t t = 0; t < fid.size(); ++t) {
    m.fidelity += fid[t] / 8.0;
    m.vacuum_weight += vac[t] / 8.0;
  }
  if (!(m.vacuum_weight < 1.0)) throw NumericalError("swapped state is pure vacuum");
  // Bell states are orthogonal to |00>, so removing the vacuum only rescales.
  m.fidelity_purified = m.fidelity / (1.0 - m.vacuum_weight);
  // P_M minus the two joint (click, AB vacuum) contributions
  const double joint_vacuum = prob[0] * vac[0];
  m.p_m_purified = m.p_m - 2.0 * joint_vacuum;
  const double alt = m.p_m * (1.0 - m.vacuum_weight);
  if (std::abs(alt - m.p_m_purified) > 1e-10) throw NumericalError("purified BSM probability mismatch");
  return m;
}

inline double bsm_success_probability(const SystemParams& p) { return swap_metrics(p).p_m; }
inline double swapped_fidelity(const SystemParams& p) { return swap_metrics(p).fidelity; }
inline double vacuum_weight(const SystemParams& p) { return swap_metrics(p).vacuum_weight; }

struct PurifiedMetrics {
  double fidelity_purified;
  double p_m_purified;
};

inline PurifiedMetrics purified_metrics(const SystemParams& p) {
  const auto m = swap_metrics(p);
  return {m.fidelity_purified, m.p_m_purified};
}

/// Normalised state of A, B after BSM outcome i on links with herald
/// outcomes j, k, obtained by integrating out A'' and B''. Threshold-detector
/// links enter in closed Gaussian form, so for NRPD the coefficients grow like
/// (eta_s p_c)^-2 and the result is accurate only to about that factor times
/// machine precision.
inline CharFun swapped_charfun_engine(const SystemParams& p, int i, int j, int k,
                                      const std::string& mode_a = "A", const std::string& mode_b = "B") {
  const auto cond = partial_condition(post_bsm_state(p, j, k, "", NrpdForm::Closed), bsm_kernels(p.detector, i));
  auto cf = simplify(cond.normalized());
  if (mode_a != "A" || mode_b != "B") cf = relabel(cf, {{"A", mode_a}, {"B", mode_b}});
  return cf;
}

}  // namespace dlcz
