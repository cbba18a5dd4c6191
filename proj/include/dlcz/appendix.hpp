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

// Published closed-form coefficients of the swapped two-ensemble state, typed
// in as printed, and their comparison against the engine-derived state.
//
// With e = eta_s (one half-link), m = eta_m, p = p_c and s = (-1)^(i+j+k):
//   PNRD: exp(-a(|zA|^2+|zB|^2)) [1 + c1|zA|^2|zB|^2 + c2(|zA|^2+|zB|^2) + c3|zA + s zB|^2]
//   NRPD: c1 exp(p1(|zA|^2+|zB|^2) + p2|zA + s zB|^2) + c2 exp(p1(|zA|^2+|zB|^2))
//         + c3 [exp(p3|zA|^2 + p4|zB|^2) + exp(p4|zA|^2 + p3|zB|^2)]
//         + c4 [exp(p1|zA|^2 + p4|zB|^2) + exp(p4|zA|^2 + p1|zB|^2)]
//         + c5 exp(p4(|zA|^2+|zB|^2))
// Three printed NRPD expressions cannot be read unambiguously; each has a
// printed reading (the default) and one alternative, selected by NrpdReadings.

#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dlcz/gaussian_core.hpp"
#include "dlcz/repeater.hpp"

namespace dlcz {

struct AppendixInputs {
  double p_c;
  double eta_s;  // of one half-length link
  double eta_m;
  double alpha;

  static AppendixInputs from(const SystemParams& p) {
    const auto d = derived_params(p, p.distance_km / 2.0);
    return {p.p_c, d.eta_s, p.eta_m(), d.alpha};
  }
};

struct PnrdAppendix {
  double c1, c2, c3;
};

inline PnrdAppendix pnrd_appendix(const AppendixInputs& in) {
  const double e = in.eta_s, m = in.eta_m, p = in.p_c;
  const double num = -1 - m * p + p - e * p + m * e * p;
  const double a = 2 * e * m * p - 2 * m * p + m - 2 + 2 * p - 2 * e * p;
  const double g = 1 + e * p - p;
  const double b = 2 * e * e * m * p * p - 4 * e * m * p * p + 2 * m * p * p + e * m * p - m * p - 2 * e * e * p * p +
                   4 * e * p * p - e * p - 2 * p * p + p + 1;
  PnrdAppendix c{};
  c.c1 = (p * (e - 1) * num * num) / (a * g * g * b);
  c.c2 = (-p * (e - 1) * num) / (g * b);
  c.c3 = (-num) / (2 * a * b);
  return c;
}

/// Readings of the three expressions that do not parse as printed.
struct NrpdReadings {
  bool p2_two_pc2 = false;     // p2 denominator ends "+2p_c^2" instead of "+p_c^2"
  bool c3_with_tail = false;   // c3's two dangling lines complete a second denominator factor
  bool c4_difference = false;  // c4's "eta_s eta_m p_c eta_m p_c" read as "eta_s eta_m p_c - eta_m p_c"
};

struct NrpdAppendix {
  double p1, p2, p3, p4;
  double c1, c2, c3, c4, c5;
};

inline NrpdAppendix nrpd_appendix(const AppendixInputs& in, const NrpdReadings& r = {}) {
  const double e = in.eta_s, m = in.eta_m, p = in.p_c;
  const double g = 1 + e * p - p;
  const double d1 = 2 * m * p - e * m * p + 2 - 4 * p + 2 * e * p - 2 * e * p * p + 2 * p * p + 2 * e * m * p * p -
                    2 * m * p * p;
  const double d3 = -3 * e * m * p + 4 * m * p + 4 - 8 * p + 4 * e * p - 4 * e * p * p + 4 * p * p +
                    4 * e * m * p * p - 4 * m * p * p;
  NrpdAppendix c{};
  c.p1 = (-e * p + e * m * p - 2 * m * p + 2 * p - 2) / d1;
  const double p2_tail = r.p2_two_pc2 ? 2 * p * p : p * p;
  c.p2 = (e * e * m * p * p) /
         (4 * (-1 + p) * g *
          (2 * m * p - e * m * p + 2 * e * m * p * p - 2 * m * p * p + 2 - 4 * p + 2 * e * p - 2 * e * p * p + p2_tail));
  c.p3 = (6 * p * p * e + 3 * p * e * m - 6 * e * m * p * p - 4 - 2 * e * e * p * p - 6 * e * p + 4 * m * p * p -
          4 * m * p + 2 * e * e * m * p * p - 4 * p * p + 8 * p) /
         (g * d3);
  c.p4 = -1 / g;

  const double e2p2 = e * e * p * p;
  c.c1 = (-2 * (-1 + p) * g * g * g) / (e2p2 * d1);
  c.c2 = (-4 * (-1 + p) * g * g * g * (-1 - e * p + 2 * p + e * p * p - p * p)) / (e2p2 * d1);
  c.c3 = (-4 * g * g * (-1 + p) * (-1 + p)) / (e2p2 * d3);
  if (r.c3_with_tail) c.c3 /= d1;
  const double f4 = r.c4_difference ? (-1 - e * p + p + e * m * p - m * p) : (-1 - e * p + p + e * m * p * m * p);
  c.c4 = (-2 * g * g * g * (-1 + p) * (-1 + p)) / (d1 * f4 * e2p2);
  const double f5 = -1 - e * p + p + e * m * p - m * p;
  c.c5 = (-g * (-1 + p) * (-1 + p) * m * (e - 1)) / (e * e * p * f5 * f5);
  return c;
}

namespace detail {

inline CMatrix diag2(double qa, double qb) {
  CMatrix q = CMatrix::Zero(2, 2);
  q(0, 0) = qa;
  q(1, 1) = qb;
  return q;
}

inline CVector parity_vector(int parity) {
  CVector v(2);
  v << 1.0, static_cast<double>(parity);
  return v;
}

}  // namespace detail

inline CharFun pnrd_appendix_charfun(const PnrdAppendix& c, double alpha, int parity) {
  const CVector v = detail::parity_vector(parity);
  const CMatrix q = alpha * CMatrix::Identity(2, 2);
  CharFun cf({"A", "B"});
  cf.add_term({1.0, q, {}, {}});
  cf.add_term({c.c1, q, {{detail::diag2(1, 0)}, {detail::diag2(0, 1)}}, {}});
  cf.add_term({c.c2, q, {{CMatrix::Identity(2, 2)}}, {}});
  cf.add_term({c.c3, q, {{v * v.adjoint()}}, {}});
  return cf;
}

/// The printed NRPD form is not normalised: its value at zero is the
/// probability of the BSM outcome.
inline CharFun nrpd_appendix_charfun(const NrpdAppendix& c, int parity) {
  const CVector v = detail::parity_vector(parity);
  const CMatrix id = CMatrix::Identity(2, 2);
  // exp(+p ...) in the printed form is exp(-z^H Q z) with Q = -p
  CharFun cf({"A", "B"});
  cf.add_term({c.c1, -c.p1 * id - c.p2 * v * v.adjoint(), {}, {}});
  cf.add_term({c.c2, -c.p1 * id, {}, {}});
  cf.add_term({c.c3, detail::diag2(-c.p3, -c.p4), {}, {}});
  cf.add_term({c.c3, detail::diag2(-c.p4, -c.p3), {}, {}});
  cf.add_term({c.c4, detail::diag2(-c.p1, -c.p4), {}, {}});
  cf.add_term({c.c4, detail::diag2(-c.p4, -c.p1), {}, {}});
  cf.add_term({c.c5, -c.p4 * id, {}, {}});
  return cf;
}

/// Printed closed form for BSM parity s = (-1)^(i+j+k) as a CharFun over (A, B).
inline CharFun appendix_swapped_charfun(const SystemParams& p, int parity, const NrpdReadings& r = {}) {
  const auto in = AppendixInputs::from(p);
  if (p.detector == Detector::PNRD) return pnrd_appendix_charfun(pnrd_appendix(in), in.alpha, parity);
  return nrpd_appendix_charfun(nrpd_appendix(in, r), parity);
}

// ---------------------------------------------------------------------------
// Comparison against the engine

/// Largest |chi_appendix - chi_engine| over `points` random arguments with
/// components drawn from a complex normal of unit scale.
inline double max_pointwise_deviation(const CharFun& a, const CharFun& b, int points = 50, unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.6);
  double worst = 0.0;
  for (int t = 0; t < points; ++t) {
    CVector z(2);
    z << cplx{n(rng), n(rng)}, cplx{n(rng), n(rng)};
    worst = std::max(worst, std::abs(evaluate(a, z) - evaluate(b, z)));
  }
  return worst;
}

struct CoefficientCheck {
  std::string detector;
  std::string name;
  double printed = 0.0;
  double engine = 0.0;
  double deviation = 0.0;  // relative
  bool matches = false;
  std::string alternative;  // empty if none applies
  double alternative_value = 0.0;
  double alternative_deviation = 0.0;
  bool alternative_matches = false;
  // Pointwise deviation of the whole printed form once this one coefficient
  // is replaced by the engine value (all others at their matching reading).
  double substituted_pointwise = 0.0;
  bool localized = false;

  /// "match", "typo-resolved" (the alternative reading matches), "localized"
  /// (only this coefficient is wrong) or "mismatch".
  std::string status() const {
    if (matches) return "match";
    if (alternative_matches) return "typo-resolved";
    if (localized) return "localized";
    return "mismatch";
  }
};

struct AppendixComparison {
  SystemParams params;
  double pnrd_pointwise = 0.0;       // printed PNRD form vs engine
  double bsm_probability = 0.0;      // NRPD P(i | j, k), the printed normalisation
  double nrpd_pointwise = 0.0;       // printed NRPD readings / P vs engine
  double nrpd_best_pointwise = 0.0;  // matching readings / P vs engine
  double nrpd_repaired_pointwise = 0.0;  // matching readings, localized coefficients replaced
  // The NRPD amplitudes are large and cancel; pointwise agreement is judged
  // relative to the sum of their magnitudes, at the precision the matching
  // coefficients demonstrate (never finer than 1e-9).
  double nrpd_pointwise_tolerance = 0.0;
  double nrpd_noise_floor = 0.0;
  NrpdReadings best;
  std::vector<CoefficientCheck> coefficients;

  bool localized() const {
    for (const auto& c : coefficients) {
      if (c.status() == "mismatch") return false;
    }
    return true;
  }
};

namespace detail {

inline double rel_dev(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Engine coefficients of the PNRD polynomial prefactor.
inline PnrdAppendix pnrd_from_engine(const CharFun& cf, int parity) {
  PnrdAppendix out{0.0, 0.0, 0.0};
  double diag_a = 0.0, cross = 0.0, quartic = 0.0;
  for (const auto& t : cf.terms()) {
    if (t.factors.size() == 1) {
      const auto& f = t.factors[0].matrix;
      if (std::abs(f(0, 0)) > 0.5) diag_a += t.coeff.real();
      if (std::abs(f(0, 1)) > 0.5) cross += t.coeff.real();
    } else if (t.factors.size() == 2) {
      quartic += t.coeff.real();
    }
  }
  out.c1 = quartic;
  out.c3 = cross / parity;
  out.c2 = diag_a - out.c3;
  return out;
}

/// Engine exponents and coefficients of the seven NRPD Gaussians, identified
/// by structure: the only non-diagonal exponent carries c1, isotropic
/// exponents carry c2 (sharing p1 with c1) and c5, and the anisotropic pairs
/// carry c3 and c4 (the one sharing p1).
inline NrpdAppendix nrpd_from_engine(const CharFun& cf, int parity) {
  if (cf.terms().size() != 7) throw NumericalError("engine NRPD swapped state does not have seven Gaussian terms");
  NrpdAppendix out{};
  for (const auto& t : cf.terms()) {
    if (!t.factors.empty()) throw NumericalError("unexpected polynomial factor in the NRPD swapped state");
    if (std::abs(t.exponent(0, 1)) > 0.0) {
      out.p2 = -t.exponent(0, 1).real() / parity;
      out.p1 = -t.exponent(0, 0).real() - out.p2;
      out.c1 = t.coeff.real();
    }
  }
  const double tol = 1e-9;
  std::vector<const GaussianTerm*> iso, aniso;
  for (const auto& t : cf.terms()) {
    if (std::abs(t.exponent(0, 1)) > 0.0) continue;
    (std::abs(t.exponent(0, 0) - t.exponent(1, 1)) < tol ? iso : aniso).push_back(&t);
  }
  if (iso.size() != 2 || aniso.size() != 4) throw NumericalError("unexpected NRPD swapped-state structure");
  for (const auto* t : iso) {
    if (std::abs(-t->exponent(0, 0).real() - out.p1) < tol) {
      out.c2 = t->coeff.real();
    } else {
      out.p4 = -t->exponent(0, 0).real();
      out.c5 = t->coeff.real();
    }
  }
  int with_p1 = 0;
  for (const auto* t : aniso) {
    const double qa = -t->exponent(0, 0).real(), qb = -t->exponent(1, 1).real();
    const bool has_p1 = std::abs(qa - out.p1) < tol || std::abs(qb - out.p1) < tol;
    with_p1 += has_p1;
    if (has_p1) {
      out.c4 = t->coeff.real();
    } else {
      out.c3 = t->coeff.real();
      out.p3 = std::abs(qa - out.p4) < tol ? qb : qa;
    }
  }
  // For small eta_s p_c the exponents differ by O((eta_s p_c)^2) and can no
  // longer be told apart.
  if (with_p1 != 2) throw NumericalError("NRPD swapped-state exponents are too close to separate");
  return out;
}

}  // namespace detail

inline CharFun scaled(CharFun cf, double factor) {
  for (auto& t : cf.terms()) t.coeff *= factor;
  return cf;
}

/// Compares the printed closed forms with the engine at `p` (BSM outcome and
/// herald indices (1, 1, 1)). A coefficient matches when its relative
/// deviation is below `tol`; the printed NRPD amplitudes are compared with the
/// engine amplitudes times P(i | j, k). A coefficient that matches under no
/// reading is "localized" when substituting the engine value for it alone
/// makes the whole printed form agree pointwise.
inline AppendixComparison compare_appendix(SystemParams p, double tol = 1e-6) {
  AppendixComparison out;
  out.params = p;
  const int parity = parity_sign(3);
  const auto in = AppendixInputs::from(p);

  p.detector = Detector::PNRD;
  {
    const auto engine = simplify(swapped_charfun_engine(p, 1, 1, 1));
    out.pnrd_pointwise = max_pointwise_deviation(appendix_swapped_charfun(p, parity), engine);
    const auto pc = pnrd_appendix(in);
    const auto ec = detail::pnrd_from_engine(engine, parity);
    const std::array<std::pair<const char*, std::pair<double, double>>, 3> rows{
        {{"c1", {pc.c1, ec.c1}}, {"c2", {pc.c2, ec.c2}}, {"c3", {pc.c3, ec.c3}}}};
    for (const auto& [name, v] : rows) {
      CoefficientCheck c;
      c.detector = "pnrd";
      c.name = name;
      c.printed = v.first;
      c.engine = v.second;
      c.deviation = detail::rel_dev(v.first, v.second);
      c.matches = c.deviation < tol;
      out.coefficients.push_back(c);
    }
  }

  p.detector = Detector::NRPD;
  {
    using MF = MeasurementFactor;
    const auto engine = simplify(swapped_charfun_engine(p, 1, 1, 1));
    const double pb = probability(post_bsm_state(p, 1, 1),
                                  detail::with({MF::delta("A"), MF::delta("B")}, bsm_kernels(p.detector, 1)),
                                  "BSM probability");
    out.bsm_probability = pb;
    auto ec = detail::nrpd_from_engine(engine, parity);
    for (double* c : {&ec.c1, &ec.c2, &ec.c3, &ec.c4, &ec.c5}) *c *= pb;
    const auto printed = nrpd_appendix(in);
    const auto alt = nrpd_appendix(in, NrpdReadings{true, true, true});

    struct Row {
      const char* name;
      double NrpdAppendix::*field;
      const char* alternative;
    };
    const std::array<Row, 9> rows{{
        {"p1", &NrpdAppendix::p1, ""},
        {"p2", &NrpdAppendix::p2, "denominator ends +2p_c^2"},
        {"p3", &NrpdAppendix::p3, ""},
        {"p4", &NrpdAppendix::p4, ""},
        {"c1", &NrpdAppendix::c1, ""},
        {"c2", &NrpdAppendix::c2, ""},
        {"c3", &NrpdAppendix::c3, "dangling lines form a second denominator factor"},
        {"c4", &NrpdAppendix::c4, "eta_s eta_m p_c - eta_m p_c"},
        {"c5", &NrpdAppendix::c5, ""},
    }};
    for (const auto& r : rows) {
      CoefficientCheck c;
      c.detector = "nrpd";
      c.name = r.name;
      c.printed = printed.*r.field;
      c.engine = ec.*r.field;
      c.deviation = detail::rel_dev(c.printed, c.engine);
      c.matches = c.deviation < tol;
      c.alternative = r.alternative;
      if (!c.alternative.empty()) {
        c.alternative_value = alt.*r.field;
        c.alternative_deviation = detail::rel_dev(c.alternative_value, c.engine);
        c.alternative_matches = c.alternative_deviation < tol;
      }
      out.coefficients.push_back(c);
    }
    auto row = [&](const char* n) -> CoefficientCheck& {
      for (auto& c : out.coefficients) {
        if (c.detector == "nrpd" && c.name == std::string(n)) return c;
      }
      throw std::logic_error("missing coefficient row");
    };
    out.best.p2_two_pc2 = !row("p2").matches && row("p2").alternative_matches;
    out.best.c3_with_tail = !row("c3").matches && row("c3").alternative_matches;
    out.best.c4_difference = !row("c4").matches && row("c4").alternative_matches;

    const auto best = nrpd_appendix(in, out.best);
    double amplitude = 0.0;
    for (const auto& t : engine.terms()) amplitude += std::abs(t.coeff);
    double noise = 0.0;
    for (const auto& c : out.coefficients) {
      if (c.detector == "nrpd" && c.matches) noise = std::max(noise, c.deviation);
    }
    out.nrpd_noise_floor = std::max(1e-9, noise);
    out.nrpd_pointwise_tolerance = out.nrpd_noise_floor * std::max(1.0, amplitude);
    auto pointwise = [&](const NrpdAppendix& c) {
      return max_pointwise_deviation(scaled(nrpd_appendix_charfun(c, parity), 1.0 / pb), engine);
    };
    out.nrpd_pointwise = pointwise(printed);
    out.nrpd_best_pointwise = pointwise(best);
    auto repaired = best;
    for (const auto& r : rows) {
      auto& c = row(r.name);
      if (c.matches || c.alternative_matches) continue;
      auto trial = best;
      trial.*r.field = c.engine;
      c.substituted_pointwise = pointwise(trial);
      c.localized = c.substituted_pointwise < out.nrpd_pointwise_tolerance;
      repaired.*r.field = c.engine;
    }
    out.nrpd_repaired_pointwise = pointwise(repaired);
  }
  return out;
}

}  // namespace dlcz
