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

// Entanglement-based QKD on two entangled pairs (A,B) and (C,D). Alice holds
// A and C, Bob holds B and D. Each side mixes its two memories on a 50-50
// beam splitter after retrieval: (A, C) -> (A', C') and (B, D) -> (B', D').
// Only the matched zero-phase basis is computed.
//
// With ideal Bell inputs the only one-click-per-side outcomes are A'B' and
// C'D' (equal bits) and A'D', C'B' (never, so they count as errors).
// Patterns are written abcd over (A', B', C', D').

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlcz/gaussian_core.hpp"
#include "dlcz/link.hpp"
#include "dlcz/params.hpp"
#include "dlcz/repeater.hpp"

namespace dlcz {

inline const std::array<std::string, 4> kQkdModes = {"A'", "B'", "C'", "D'"};

struct ClickPattern {
  std::array<bool, 4> click{};  // over A', B', C', D'

  /// Alice owns A' and C', Bob owns B' and D'.
  static constexpr std::array<bool, 4> kAliceSide = {true, false, true, false};

  static ClickPattern from_bits(unsigned bits) {
    ClickPattern p;
    for (int m = 0; m < 4; ++m) p.click[static_cast<std::size_t>(m)] = (bits >> (3 - m)) & 1u;
    return p;
  }
  static ClickPattern parse(const std::string& s) {
    if (s.size() != 4) throw std::invalid_argument("click pattern needs four characters");
    unsigned bits = 0;
    for (char c : s) {
      if (c != '0' && c != '1') throw std::invalid_argument("click pattern characters must be 0 or 1");
      bits = (bits << 1) | static_cast<unsigned>(c - '0');
    }
    return from_bits(bits);
  }
  unsigned bits() const {
    unsigned b = 0;
    for (bool c : click) b = (b << 1) | (c ? 1u : 0u);
    return b;
  }
  std::string str() const {
    std::string s;
    for (bool c : click) s += c ? '1' : '0';
    return s;
  }
  int clicks() const {
    int n = 0;
    for (bool c : click) n += c ? 1 : 0;
    return n;
  }
};

struct QkdResult {
  double p_click = 0.0;
  double p_error = 0.0;
  double qber = 0.0;
};

struct QkdReport {
  double p_click = 0.0;
  double p_error = 0.0;
  double qber = 0.0;
  double secret_fraction = 0.0;
  double rate = 0.0;  // bits/s per logical memory
  Scenario scenario = Scenario::Direct;
  SystemParams params;
};

/// How the one-repeater QKD probabilities are obtained.
///   Swapped: tensor of two engine-derived swapped states (4 modes).
///   Joint:   both pre-BSM states kept (8 modes), BSM clicks applied at
///            measurement time and normalized by the BSM probability squared.
///   Auto:    Swapped for PNRD; Joint for NRPD, whose swapped state is only
///            available in the closed Gaussian form with cancelling coefficients.
enum class RepeaterPath { Auto, Swapped, Joint };

struct QkdOptions {
  bool exact_click = false;
  RepeaterPath path = RepeaterPath::Auto;
};

// ---------------------------------------------------------------------------
// States and channel

/// Normalized state of A, B, C, D before Alice's and Bob's measurements.
inline CharFun qkd_state(const SystemParams& p, Scenario scenario) {
  if (scenario == Scenario::Direct) {
    return tensor(post_herald_charfun(p, p.distance_km, 1, "A", "B"),
                  post_herald_charfun(p, p.distance_km, 1, "C", "D"));
  }
  return tensor(swapped_charfun_engine(p, 1, 1, 1, "A", "B"), swapped_charfun_engine(p, 1, 1, 1, "C", "D"));
}

/// Retrieval, detection loss and beam splitter on both sides.
inline CharFun apply_qkd_measurement_channel(const CharFun& cf, const SystemParams& p) {
  const auto a = apply_bsm_channel(cf, "A", "C", p.meas_eta_c(), p.meas_eta_d(), "A'", "C'");
  return apply_bsm_channel(a, "B", "D", p.meas_eta_c(), p.meas_eta_d(), "B'", "D'");
}

/// Eight-mode joint state: two repeater pre-BSM states (herald outcomes 1, 1)
/// with their BSM channels applied, pair two relabelled to C, C'', D'', D,
/// followed by the QKD measurement channel.
inline CharFun joint_repeater_state(const SystemParams& p) {
  const auto first = post_bsm_state(p, 1, 1);
  const auto second = relabel(post_bsm_state(p, 1, 1, "2"),
                              {{"A2", "C"}, {"A''2", "C''"}, {"B''2", "D''"}, {"B2", "D"}});
  return apply_qkd_measurement_channel(tensor(first, second), p);
}

/// BSM outcome-1 kernels on both repeater pairs of the joint state.
inline std::vector<MeasurementFactor> joint_bsm_kernels(Detector det) {
  auto k = single_click_kernels(det, "A''", "B''");
  const auto k2 = single_click_kernels(det, "C''", "D''");
  k.insert(k.end(), k2.begin(), k2.end());
  return k;
}

// ---------------------------------------------------------------------------
// Click patterns

inline std::vector<MeasurementFactor> pattern_kernels(const ClickPattern& pattern, Detector det) {
  std::vector<MeasurementFactor> f;
  for (std::size_t m = 0; m < 4; ++m) {
    if (!pattern.click[m]) {
      f.push_back(MeasurementFactor::unit(kQkdModes[m]));
    } else if (det == Detector::PNRD) {
      f.push_back(MeasurementFactor::one_minus_abs_sq(kQkdModes[m]));
    } else {
      f.push_back(MeasurementFactor::delta_minus_one(kQkdModes[m]));
    }
  }
  return f;
}

/// Probability of a click pattern on a state over A', B', C', D' (plus any
/// modes covered by `extra`, whose kernels multiply in).
inline double click_pattern_probability(const CharFun& cf, const ClickPattern& pattern, Detector det,
                                        const std::vector<MeasurementFactor>& extra = {}) {
  auto f = pattern_kernels(pattern, det);
  f.insert(f.end(), extra.begin(), extra.end());
  return probability(cf, f, "click pattern probability");
}

/// All sixteen threshold-detector pattern probabilities from the sixteen
/// "these detectors stay dark" probabilities D(U):
///   P(K clicked) = sum_{V subset K} (-1)^|V| D(complement(K) | V).
/// Indexed by ClickPattern::bits().
inline std::array<double, 16> nrpd_pattern_table(const CharFun& cf, const std::vector<MeasurementFactor>& extra = {},
                                                 double norm = 1.0) {
  std::array<double, 16> dark{};
  for (unsigned u = 0; u < 16; ++u) {
    std::vector<MeasurementFactor> f = extra;
    for (int m = 0; m < 4; ++m) {
      const bool is_dark = (u >> (3 - m)) & 1u;
      f.push_back(is_dark ? MeasurementFactor::unit(kQkdModes[static_cast<std::size_t>(m)])
                          : MeasurementFactor::delta(kQkdModes[static_cast<std::size_t>(m)]));
    }
    dark[u] = probability(cf, f, "dark-set probability") / norm;
  }
  std::array<double, 16> table{};
  for (unsigned k = 0; k < 16; ++k) {
    const unsigned comp = 15u & ~k;
    double total = 0.0;
    for (unsigned v = k;; v = (v - 1u) & k) {
      total += ((std::popcount(v) % 2) ? -1.0 : 1.0) * dark[comp | v];
      if (v == 0u) break;
    }
    table[k] = total;
  }
  return table;
}

namespace detail {

inline unsigned pat(const char* s) { return ClickPattern::parse(s).bits(); }

inline QkdResult finish_qkd(double p_click, double p_error) {
  if (!(p_click > 0.0)) throw NumericalError("no sifted clicks: p_click is zero");
  if (p_error < -1e-12 || p_error > p_click * (1.0 + 1e-9) || p_click > 1.0 + 1e-9) {
    throw NumericalError("inconsistent click probabilities");
  }
  QkdResult r{p_click, std::max(0.0, p_error), 0.0};
  r.qber = r.p_error / r.p_click;
  return r;
}

inline QkdResult nrpd_from_table(const std::array<double, 16>& t, bool exact_click) {
  double p_click = 1.0 - t[pat("1000")] - t[pat("0100")] - t[pat("0010")] - t[pat("0001")] - t[pat("0000")];
  if (exact_click) p_click -= t[pat("1010")] + t[pat("0101")];
  const double p_error = t[pat("1001")] + t[pat("0110")] +
                         0.5 * (t[pat("0111")] + t[pat("1011")] + t[pat("1101")] + t[pat("1110")] + t[pat("1111")]);
  return finish_qkd(p_click, p_error);
}

inline QkdResult pnrd_from(const CharFun& cf, const std::vector<MeasurementFactor>& extra, double norm) {
  auto pr = [&](const char* s) {
    return click_pattern_probability(cf, ClickPattern::parse(s), Detector::PNRD, extra) / norm;
  };
  const double err = pr("1001") + pr("0110");
  const double ok = pr("1100") + pr("0011");
  return finish_qkd(ok + err, err);
}

}  // namespace detail

/// QBER and sifted-click probability for an already measured-channel state.
inline QkdResult qber_and_click_from_state(const CharFun& measured, Detector det, bool exact_click = false) {
  if (det == Detector::PNRD) return detail::pnrd_from(measured, {}, 1.0);
  return detail::nrpd_from_table(nrpd_pattern_table(measured), exact_click);
}

inline QkdResult qber_and_click_joint(const SystemParams& p, bool exact_click = false) {
  const auto cf = joint_repeater_state(p);
  const auto bsm = joint_bsm_kernels(p.detector);
  auto norm_f = bsm;
  for (const auto& m : kQkdModes) norm_f.push_back(MeasurementFactor::delta(m));
  const double norm = probability(cf, norm_f, "joint BSM probability");
  if (!(norm > 0.0)) throw NumericalError("BSM success probability is zero");
  if (p.detector == Detector::PNRD) return detail::pnrd_from(cf, bsm, norm);
  return detail::nrpd_from_table(nrpd_pattern_table(cf, bsm, norm), exact_click);
}

inline QkdResult qber_and_click(const SystemParams& p, Scenario scenario, const QkdOptions& opt = {}) {
  if (scenario == Scenario::OneRepeater) {
    RepeaterPath path = opt.path;
    if (path == RepeaterPath::Auto) path = p.detector == Detector::PNRD ? RepeaterPath::Swapped : RepeaterPath::Joint;
    if (path == RepeaterPath::Joint) return qber_and_click_joint(p, opt.exact_click);
  }
  const auto measured = apply_qkd_measurement_channel(qkd_state(p, scenario), p);
  return qber_and_click_from_state(measured, p.detector, opt.exact_click);
}

// ---------------------------------------------------------------------------
// Rates

inline double binary_entropy(double q) {
  if (q <= 0.0 || q >= 1.0) return 0.0;
  return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

/// Shor-Preskill secret fraction 1 - 2 H(q), clamped at zero.
inline double secret_fraction(double qber) {
  if (!(qber >= 0.0 && qber <= 1.0)) throw std::invalid_argument("QBER must lie in [0, 1]");
  return std::max(0.0, 1.0 - 2.0 * binary_entropy(qber));
}

/// sf / (2L/c) * P_S * prod P_M * p_click / 2, in bits/s per logical memory.
/// P_S is the herald probability of the elementary links.
inline double rate_generic(double p_s, const std::vector<double>& p_m, double p_click, double qber,
                           double distance_km, double c_mps) {
  if (!(distance_km > 0.0) || !(c_mps > 0.0)) throw std::invalid_argument("distance and light speed must be positive");
  double prob = p_s * p_click / 2.0;
  for (double m : p_m) prob *= m;
  const double cycle_s = 2.0 * distance_km * 1000.0 / c_mps;
  return secret_fraction(qber) * prob / cycle_s;
}

/// BSM success probability from the single outcome (1, 1, 1); the symmetry
/// over outcomes is asserted in swap_metrics.
inline double bsm_success_probability_fast(const SystemParams& p) {
  using MF = MeasurementFactor;
  auto f = bsm_kernels(p.detector, 1);
  f.push_back(MF::delta("A"));
  f.push_back(MF::delta("B"));
  return 2.0 * probability(post_bsm_state(p, 1, 1), f, "BSM probability");
}

inline QkdReport qkd_report(const SystemParams& p, Scenario scenario, const QkdOptions& opt = {}) {
  p.validate();
  QkdReport r;
  r.scenario = scenario;
  r.params = p;
  if (!(p.p_c > 0.0)) {
    // nothing is ever heralded
    r.qber = 0.0;
    r.secret_fraction = 1.0;
    return r;
  }
  const auto q = qber_and_click(p, scenario, opt);
  r.p_click = q.p_click;
  r.p_error = q.p_error;
  r.qber = q.qber;
  r.secret_fraction = secret_fraction(q.qber);
  if (scenario == Scenario::Direct) {
    r.rate = rate_generic(herald_probability(p, p.distance_km), {}, q.p_click, q.qber, p.distance_km, p.c_mps);
  } else {
    r.rate = rate_generic(herald_probability(p, p.distance_km / 2.0), {bsm_success_probability_fast(p)}, q.p_click,
                          q.qber, p.distance_km, p.c_mps);
  }
  return r;
}

inline double rate_no_repeater(const SystemParams& p, const QkdOptions& opt = {}) {
  return qkd_report(p, Scenario::Direct, opt).rate;
}

inline double rate_one_repeater(const SystemParams& p, const QkdOptions& opt = {}) {
  return qkd_report(p, Scenario::OneRepeater, opt).rate;
}

}  // namespace dlcz
