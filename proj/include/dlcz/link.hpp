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

#include <cmath>
#include <stdexcept>
#include <string>

#include "dlcz/gaussian_core.hpp"
#include "dlcz/params.hpp"

namespace dlcz {

/// (-1)^j for a herald / outcome index j.
inline int parity_sign(int j) { return (j % 2 == 0) ? 1 : -1; }

struct LinkMetrics {
  double fidelity = 0.0;
  double herald_prob = 0.0;
  double alpha = 1.0;
  double eta_s = 1.0;
};

/// How the threshold-detector link state is written. Both describe the same
/// state:
///   Closed:     -k G_a + (k + 1) G_a exp(-e X),   k = (1 - p_c) / (eta_s p_c)
///   Difference:  G_a + G_a (exp(-e X) - 1) / (2 (1 - p_c) e)
/// with X = |z_a + s z_b|^2 and e = a eta_s p_c / (2 (1 - p_c)). The closed form
/// is a plain Gaussian sum but cancels to O(1) from coefficients of size k;
/// the difference form has O(1) coefficients and reduces to the ideal Bell
/// state at p_c = 0.
enum class NrpdForm { Difference, Closed };

/// State of the two ensembles after a click on detector j of the midpoint
/// station. j = 1, 2 selects the target Bell state (|01> + (-1)^j |10>)/sqrt2.
inline CharFun post_herald_charfun(const SystemParams& p, double segment_km, int j,
                                   const std::string& mode_a = "A", const std::string& mode_b = "B",
                                   NrpdForm form = NrpdForm::Difference) {
  const auto d = derived_params(p, segment_km);
  const double a = d.alpha;
  CVector v(2);
  v << 1.0, static_cast<double>(parity_sign(j));
  const CMatrix bell = v * v.adjoint();
  const CMatrix iso = a * CMatrix::Identity(2, 2);

  CharFun cf({mode_a, mode_b});
  if (p.detector == Detector::PNRD) {
    cf.add_term({1.0, iso, {}, {}});
    cf.add_term({-0.5 * a, iso, {QuadraticForm{bell}}, {}});
    return cf;
  }
  const double es_pc = d.eta_s * p.p_c;
  const double e = a * es_pc / (2.0 * (1.0 - p.p_c));
  if (form == NrpdForm::Difference || !(p.p_c > 0.0)) {
    cf.add_term({1.0, iso, {}, {}});
    cf.add_term({0.5 / (1.0 - p.p_c), iso, {}, {Difference{v, e}}});
  } else {
    cf.add_term({-(1.0 - p.p_c) / es_pc, iso, {}, {}});
    cf.add_term({1.0 / (a * es_pc), iso + e * bell, {}, {}});
  }
  return cf;
}

/// Retrieval (eta_c) and detection (eta_d) loss followed by a 50-50 beam
/// splitter on modes x, y. The outputs feed unit-efficiency detectors and are
/// relabelled out_x, out_y. Old arguments are
///   z_x -> sqrt(eta_c) zx-,  z_y -> sqrt(eta_c) zy+,
///   zx- = sqrt(eta_d/2)(z_y - z_x),  zy+ = sqrt(eta_d/2)(z_y + z_x),
/// and the result is multiplied by
///   exp[-(1-eta_d)(|z_x|^2+|z_y|^2)] exp[-(1-eta_c)(|zx-|^2+|zy+|^2)].
inline CharFun apply_bsm_channel(const CharFun& cf, const std::string& x, const std::string& y,
                                 double eta_c, double eta_d, const std::string& out_x,
                                 const std::string& out_y) {
  const auto n = static_cast<Eigen::Index>(cf.mode_count());
  const auto ix = static_cast<Eigen::Index>(cf.mode_index(x));
  const auto iy = static_cast<Eigen::Index>(cf.mode_index(y));
  if (ix == iy) throw std::invalid_argument("BSM needs two distinct modes");

  CVector minus = CVector::Zero(n);
  CVector plus = CVector::Zero(n);
  const double h = std::sqrt(eta_d / 2.0);
  minus(ix) = -h;
  minus(iy) = h;
  plus(ix) = h;
  plus(iy) = h;

  CMatrix map = CMatrix::Identity(n, n);
  map.row(ix) = std::sqrt(eta_c) * minus.transpose();
  map.row(iy) = std::sqrt(eta_c) * plus.transpose();

  std::vector<std::string> labels = cf.modes();
  labels[static_cast<std::size_t>(ix)] = out_x;
  labels[static_cast<std::size_t>(iy)] = out_y;
  CharFun out = substitute_linear(cf, map, std::move(labels));

  CMatrix g = CMatrix::Zero(n, n);
  g(ix, ix) = 1.0 - eta_d;
  g(iy, iy) = 1.0 - eta_d;
  g += (1.0 - eta_c) * (minus * minus.transpose() + plus * plus.transpose());
  return multiply_gaussian_factor(out, hermitize(g));
}

/// Kernel pair for "only the detector on `click` fired".
inline std::vector<MeasurementFactor> single_click_kernels(Detector det, const std::string& click,
                                                           const std::string& dark) {
  if (det == Detector::PNRD) {
    return {MeasurementFactor::one_minus_abs_sq(click), MeasurementFactor::unit(dark)};
  }
  return {MeasurementFactor::delta_minus_one(click), MeasurementFactor::unit(dark)};
}

/// Two ensemble-photon pairs before the midpoint station, photons lost with
/// eta_s and mixed on the beam splitter; modes (A, B, x, y) with x, y the
/// detector-facing outputs. Each pair is the two-mode squeezed state
///   chi = exp(-(n+1)(|z_S|^2 + |z_a|^2) + c (z_S z_a + c.c.)),
///   n = p_c / (1 - p_c),  c = sqrt(p_c) / (1 - p_c),
/// written in the conjugate ensemble variable w = z_S^* so that the cross
/// term becomes the Hermitian form -c (w^* z_a + z_a^* w). All coefficients
/// are real, so the conjugation leaves the final ensemble state unchanged.
inline CharFun pre_herald_state(const SystemParams& p, double segment_km) {
  if (!(p.p_c > 0.0)) throw std::invalid_argument("pre-herald state needs p_c > 0");
  const auto d = derived_params(p, segment_km);
  const double n = p.p_c / (1.0 - p.p_c);
  const double c = std::sqrt(p.p_c) / (1.0 - p.p_c);
  CMatrix q(2, 2);
  q << n + 1.0, -c, -c, n + 1.0;
  CharFun a({"A", "xa"}), b({"B", "yb"});
  a.add_term({1.0, q, {}, {}});
  b.add_term({1.0, q, {}, {}});
  const auto pair = tensor(a, b);
  return apply_bsm_channel(pair, "xa", "yb", 1.0, d.eta_s, "x", "y");
}

/// Click kernels of herald j: detector x for j = 1, detector y for j = 2.
inline std::vector<MeasurementFactor> herald_kernels(Detector det, int j) {
  return j == 1 ? single_click_kernels(det, "x", "y") : single_click_kernels(det, "y", "x");
}

/// Herald probability summed over both detectors, from the pre-herald state.
inline double herald_probability_engine(const SystemParams& p, double segment_km) {
  const auto cf = pre_herald_state(p, segment_km);
  double total = 0.0;
  for (int j = 1; j <= 2; ++j) {
    auto f = herald_kernels(p.detector, j);
    f.push_back(MeasurementFactor::delta("A"));
    f.push_back(MeasurementFactor::delta("B"));
    total += probability(cf, f, "herald probability");
  }
  return total;
}

/// Normalised ensemble state after herald j, derived from the pre-herald state.
inline CharFun post_herald_engine(const SystemParams& p, double segment_km, int j) {
  return partial_condition(pre_herald_state(p, segment_km), herald_kernels(p.detector, j)).normalized();
}

/// Average Bell fidelity of a heralded link.
inline double link_fidelity(const SystemParams& p, double segment_km) {
  const auto d = derived_params(p, segment_km);
  const double base = d.eta_s * p.p_c + 1.0 - p.p_c;
  if (p.detector == Detector::PNRD) return base * base * base;
  return (1.0 - p.p_c) * base * base;
}

/// Same quantity from the Bell-projector moment of the post-herald state,
/// averaged over both herald outcomes.
inline double link_fidelity_engine(const SystemParams& p, double segment_km) {
  double f[2];
  for (int j = 1; j <= 2; ++j) {
    const auto cf = post_herald_charfun(p, segment_km, j);
    f[j - 1] = probability(cf, {MeasurementFactor::bell("A", "B", parity_sign(j))}, "link fidelity");
  }
  if (std::abs(f[0] - f[1]) > 1e-10) throw NumericalError("link fidelity depends on herald index");
  return 0.5 * (f[0] + f[1]);
}

/// Probability that exactly one midpoint detector reports a single click.
inline double herald_probability(const SystemParams& p, double segment_km) {
  const auto d = derived_params(p, segment_km);
  const double es_pc = d.eta_s * p.p_c;
  const double base = es_pc + 1.0 - p.p_c;
  if (p.detector == Detector::PNRD) {
    return 2.0 * (1.0 - p.p_c) * (1.0 - p.p_c) * es_pc / (base * base * base);
  }
  return 2.0 * (1.0 - p.p_c) * es_pc / (base * base);
}

inline LinkMetrics link_metrics(const SystemParams& p, double segment_km) {
  const auto d = derived_params(p, segment_km);
  return {link_fidelity(p, segment_km), herald_probability(p, segment_km), d.alpha, d.eta_s};
}

/// Fidelity after an error-free swap of two Werner states of fidelity f.
inline double werner_swap_fidelity(double f) {
  if (!(f >= 0.25 - 1e-15 && f <= 1.0 + 1e-15)) {
    throw std::invalid_argument("Werner fidelity must lie in [1/4, 1]");
  }
  const double x = f - 0.25;
  return 0.25 + (4.0 / 3.0) * x * x;
}

}  // namespace dlcz
